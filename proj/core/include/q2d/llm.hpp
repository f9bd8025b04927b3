#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "q2d/corpus.hpp"

namespace q2d {

struct PromptExample {
  std::string question;
  Dialog dialog;

  bool operator==(const PromptExample&) const = default;
};

// Few-shot material for both directions. The reverse prompt reuses the same
// examples with question and dialog swapped.
struct PromptSet {
  std::string instruction_forward;
  std::string instruction_reverse;
  std::vector<PromptExample> examples;

  // Throws InputError: no examples, blank question, or a dialog that does not
  // end with a user turn.
  void validate() const;
  static PromptSet load(const std::filesystem::path& path);

  bool operator==(const PromptSet&) const = default;
};

void to_json(Json& j, const PromptExample& e);
void from_json(const Json& j, PromptExample& e);
void to_json(Json& j, const PromptSet& p);
void from_json(const Json& j, PromptSet& p);

inline constexpr double kForwardTemperature = 0.6;
inline constexpr double kReverseTemperature = 0.0;
inline constexpr double kResponseTemperature = 0.0;
inline constexpr int kForwardMaxTokens = 512;
inline constexpr int kReverseMaxTokens = 64;
inline constexpr int kResponseMaxTokens = 128;

// Instruction used for assistant-response generation. Forward and reverse
// instructions come from the PromptSet.
inline constexpr const char* kResponseInstruction =
    "Continue the dialog with the next assistant response. The response should be factual and answer "
    "the user's last question.";

struct LmRequest {
  std::string prompt;
  double temperature = 0.0;
  int max_tokens = 1;
  std::optional<std::vector<std::string>> stop;

  void validate() const;
  Json to_json() const;
  static LmRequest from_json(const Json& j);
  // SHA-256 of the canonical JSON form; shared by record, replay and caching.
  std::string key() const;
};

struct LmBackendConfig {
  enum class Kind { http, replay, echo };

  Kind kind = Kind::echo;
  std::optional<std::string> endpoint;
  std::optional<std::filesystem::path> replay_path;
  std::optional<std::filesystem::path> record_path;
  std::chrono::milliseconds timeout{120000};
  std::size_t max_in_flight = 4;

  // http needs endpoint, replay needs replay_path.
  void validate() const;
  Json to_json() const;
};

const char* to_string(LmBackendConfig::Kind kind) noexcept;
LmBackendConfig::Kind lm_kind_from_string(const std::string& s);

// Environment variable holding the bearer token for the http backend.
inline constexpr const char* kLmTokenEnv = "Q2D_LM_API_TOKEN";

// Renders turns as "User: ..." / "Assistant: ..." lines joined by '\n'.
std::string render_turns(const Dialog& dialog);

// instruction, then "Question: <q>\nDialog:\n<turns>" per example, blank-line
// separated, ending with "Question: <question>\nDialog:".
std::string render_forward_prompt(const PromptSet& ps, const std::string& question);

// instruction, then "Dialog:\n<turns>\nQuestion: <q>" per example, ending
// with the input dialog and a bare "Question:" cue.
std::string render_reverse_prompt(const PromptSet& ps, const Dialog& dialog);

// kResponseInstruction, then each example dialog cut after its last assistant
// turn, ending with the input dialog and a bare "Assistant:" cue.
std::string render_response_prompt(const PromptSet& ps, const Dialog& dialog);

// Parses "User:"/"Assistant:" prefixed lines (case-insensitive, optional
// whitespace before the colon). Continuation lines are joined with a space.
// Stops at the first "Question:" line, or at a "Dialog:" line once a turn has
// been read. Throws ParseError when nothing parses or the last turn is not
// from the user.
Dialog parse_dialog(const std::string& completion);

// First non-empty line of a reverse completion, minus any "Question:" label.
std::string clean_reverse_completion(const std::string& completion);

// Assistant text from a response completion: strips an "Assistant:" label and
// drops anything from the next role or block marker on. Throws ParseError if
// nothing remains.
std::string clean_response(const std::string& completion);

class LmBackend {
 public:
  virtual ~LmBackend() = default;
  virtual std::string complete(const LmRequest& req) = 0;
  virtual LmBackendConfig::Kind kind() const noexcept = 0;
};

// Deterministic stand-in. Forward prompts yield a two-turn dialog ending with
// the question verbatim; reverse prompts yield the dialog's last user turn;
// response prompts yield a placeholder built from the last user turn.
class EchoBackend final : public LmBackend {
 public:
  std::string complete(const LmRequest& req) override;
  LmBackendConfig::Kind kind() const noexcept override { return LmBackendConfig::Kind::echo; }

  static constexpr const char* kGreeting = "Hello! What would you like to know?";
  static constexpr const char* kResponsePrefix = "Here is what I know about your question: ";
};

// Serves recorded completions keyed by request hash. Throws ReplayMissError.
class ReplayBackend final : public LmBackend {
 public:
  explicit ReplayBackend(const std::filesystem::path& path);
  std::string complete(const LmRequest& req) override;
  LmBackendConfig::Kind kind() const noexcept override { return LmBackendConfig::Kind::replay; }
  std::size_t size() const noexcept;

 private:
  struct Impl;
  std::shared_ptr<Impl> impl_;
};

// POST {"prompt","temperature","max_tokens","stop"} -> {"text"}. With a
// record path, every completion is appended there and repeated requests are
// served from it.
class HttpBackend final : public LmBackend {
 public:
  explicit HttpBackend(const LmBackendConfig& cfg);
  ~HttpBackend() override;
  std::string complete(const LmRequest& req) override;
  LmBackendConfig::Kind kind() const noexcept override { return LmBackendConfig::Kind::http; }
  std::size_t remote_calls() const noexcept;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

std::unique_ptr<LmBackend> make_backend(const LmBackendConfig& cfg);

// One-shot convenience over make_backend(cfg)->complete(req).
std::string complete(const LmBackendConfig& cfg, const LmRequest& req);

LmRequest forward_request(const PromptSet& ps, const std::string& question,
                          double temperature = kForwardTemperature);
LmRequest reverse_request(const PromptSet& ps, const Dialog& dialog);
LmRequest response_request(const PromptSet& ps, const Dialog& dialog);

// Next assistant response for a dialog that ends with a user turn.
std::string generate_response(LmBackend& backend, const PromptSet& ps, const Dialog& dialog_ending_in_question);
std::string generate_response(const LmBackendConfig& cfg, const PromptSet& ps,
                              const Dialog& dialog_ending_in_question);

}  // namespace q2d
