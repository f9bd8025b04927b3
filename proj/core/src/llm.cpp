#include "q2d/llm.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <fstream>
#include <mutex>
#include <semaphore>
#include <unordered_map>

#include "q2d/hashing.hpp"
#include "q2d/http.hpp"

namespace q2d {
namespace {

constexpr std::string_view kUserPrefix = "User: ";
constexpr std::string_view kAssistantPrefix = "Assistant: ";

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string_view> split_lines(std::string_view s) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= s.size()) {
    auto nl = s.find('\n', start);
    if (nl == std::string_view::npos) nl = s.size();
    auto line = s.substr(start, nl - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = nl + 1;
  }
  return lines;
}

bool iequals_prefix(std::string_view s, std::string_view word) {
  if (s.size() < word.size()) return false;
  for (std::size_t i = 0; i < word.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(s[i])) != word[i]) return false;
  }
  return true;
}

// If `line` starts with `word` (case-insensitive), optional blanks and ':',
// returns the remainder after the colon.
std::optional<std::string_view> match_label(std::string_view line, std::string_view word) {
  if (!iequals_prefix(line, word)) return std::nullopt;
  auto rest = line.substr(word.size());
  while (!rest.empty() && (rest.front() == ' ' || rest.front() == '\t')) rest.remove_prefix(1);
  if (rest.empty() || rest.front() != ':') return std::nullopt;
  return rest.substr(1);
}

bool is_question_label(std::string_view lt) {
  return match_label(lt, "question") || match_label(lt, "questions");
}

bool is_dialog_label(std::string_view lt) { return match_label(lt, "dialog").has_value(); }

std::string_view ltrim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  return s;
}

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

std::string join_blocks(const std::vector<std::string>& blocks) {
  std::string out;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (i > 0) out += "\n\n";
    out += blocks[i];
  }
  return out;
}

// Text of the final block that starts with "Dialog:\n" in `prompt`.
std::string_view last_dialog_block(std::string_view prompt) {
  const auto pos = prompt.rfind("Dialog:\n");
  if (pos == std::string_view::npos) throw InputError("echo backend: prompt has no Dialog block");
  return prompt.substr(pos + 8);
}

}  // namespace

// --- PromptSet ----------------------------------------------------------------

void PromptSet::validate() const {
  if (examples.empty()) throw InputError("prompt set has no examples");
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (trim(examples[i].question).empty()) {
      throw InputError("prompt example " + std::to_string(i) + " has a blank question");
    }
    try {
      validate_dialog(examples[i].dialog);
    } catch (const InputError& e) {
      throw InputError("prompt example " + std::to_string(i) + ": " + e.what());
    }
  }
}

PromptSet PromptSet::load(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  PromptSet ps;
  try {
    from_json(Json::parse(text), ps);
    ps.validate();
  } catch (const std::exception& e) {
    throw InputError(path.string() + ": invalid prompt set: " + e.what());
  }
  return ps;
}

void to_json(Json& j, const PromptExample& e) { j = Json{{"question", e.question}, {"dialog", e.dialog}}; }

void from_json(const Json& j, PromptExample& e) {
  e.question = j.at("question").get<std::string>();
  e.dialog = j.at("dialog").get<Dialog>();
}

void to_json(Json& j, const PromptSet& p) {
  j = Json{{"instruction_forward", p.instruction_forward},
           {"instruction_reverse", p.instruction_reverse},
           {"examples", p.examples}};
}

void from_json(const Json& j, PromptSet& p) {
  p.instruction_forward = j.at("instruction_forward").get<std::string>();
  p.instruction_reverse = j.at("instruction_reverse").get<std::string>();
  p.examples = j.at("examples").get<std::vector<PromptExample>>();
}

// --- LmRequest / config -------------------------------------------------------

void LmRequest::validate() const {
  if (prompt.empty()) throw InputError("LM request has an empty prompt");
  if (!(temperature >= 0.0)) throw InputError("LM temperature must be >= 0");
  if (max_tokens <= 0) throw InputError("LM max_tokens must be positive");
}

Json LmRequest::to_json() const {
  Json j{{"prompt", prompt}, {"temperature", temperature}, {"max_tokens", max_tokens}};
  if (stop) j["stop"] = *stop;
  return j;
}

LmRequest LmRequest::from_json(const Json& j) {
  LmRequest r;
  r.prompt = j.at("prompt").get<std::string>();
  r.temperature = j.at("temperature").get<double>();
  r.max_tokens = j.at("max_tokens").get<int>();
  if (auto it = j.find("stop"); it != j.end() && !it->is_null()) r.stop = it->get<std::vector<std::string>>();
  return r;
}

std::string LmRequest::key() const { return sha256_hex(canonical_dump(to_json())); }

void LmBackendConfig::validate() const {
  switch (kind) {
    case Kind::http:
      if (!endpoint || endpoint->empty()) throw InputError("http backend requires an endpoint");
      parse_url(*endpoint);
      break;
    case Kind::replay:
      if (!replay_path) throw InputError("replay backend requires a replay file");
      break;
    case Kind::echo:
      break;
  }
  if (max_in_flight == 0) throw InputError("max_in_flight must be >= 1");
}

Json LmBackendConfig::to_json() const {
  auto opt_path = [](const std::optional<std::filesystem::path>& p) {
    return p ? Json(p->string()) : Json(nullptr);
  };
  return Json{{"kind", to_string(kind)},
              {"endpoint", endpoint ? Json(*endpoint) : Json(nullptr)},
              {"replay_path", opt_path(replay_path)},
              {"record_path", opt_path(record_path)},
              {"timeout_ms", timeout.count()},
              {"max_in_flight", max_in_flight}};
}

const char* to_string(LmBackendConfig::Kind kind) noexcept {
  switch (kind) {
    case LmBackendConfig::Kind::http: return "http";
    case LmBackendConfig::Kind::replay: return "replay";
    case LmBackendConfig::Kind::echo: return "echo";
  }
  return "unknown";
}

LmBackendConfig::Kind lm_kind_from_string(const std::string& s) {
  if (s == "http") return LmBackendConfig::Kind::http;
  if (s == "replay") return LmBackendConfig::Kind::replay;
  if (s == "echo") return LmBackendConfig::Kind::echo;
  throw InputError("unknown backend kind \"" + s + "\" (expected http, replay or echo)");
}

// --- rendering ----------------------------------------------------------------

std::string render_turns(const Dialog& dialog) {
  std::string out;
  for (std::size_t i = 0; i < dialog.turns.size(); ++i) {
    if (i > 0) out += '\n';
    const auto& t = dialog.turns[i];
    out += t.role == Role::user ? kUserPrefix : kAssistantPrefix;
    out += t.text;
  }
  return out;
}

std::string render_forward_prompt(const PromptSet& ps, const std::string& question) {
  if (trim(question).empty()) throw InputError("forward prompt: blank question");
  std::vector<std::string> blocks{ps.instruction_forward};
  for (const auto& ex : ps.examples) {
    blocks.push_back("Question: " + ex.question + "\nDialog:\n" + render_turns(ex.dialog));
  }
  blocks.push_back("Question: " + question + "\nDialog:");
  return join_blocks(blocks);
}

std::string render_reverse_prompt(const PromptSet& ps, const Dialog& dialog) {
  validate_dialog(dialog);
  std::vector<std::string> blocks{ps.instruction_reverse};
  for (const auto& ex : ps.examples) {
    blocks.push_back("Dialog:\n" + render_turns(ex.dialog) + "\nQuestion: " + ex.question);
  }
  blocks.push_back("Dialog:\n" + render_turns(dialog) + "\nQuestion:");
  return join_blocks(blocks);
}

std::string render_response_prompt(const PromptSet& ps, const Dialog& dialog) {
  validate_dialog(dialog);
  std::vector<std::string> blocks{kResponseInstruction};
  for (const auto& ex : ps.examples) {
    const auto& turns = ex.dialog.turns;
    auto last = std::find_if(turns.rbegin(), turns.rend(), [](const DialogTurn& t) { return t.role == Role::assistant; });
    if (last == turns.rend()) continue;
    const auto cut = static_cast<std::size_t>(std::distance(turns.begin(), last.base()) - 1);
    Dialog prefix{std::vector<DialogTurn>(turns.begin(), turns.begin() + static_cast<std::ptrdiff_t>(cut))};
    std::string block = "Dialog:\n";
    if (!prefix.empty()) block += render_turns(prefix) + "\n";
    block += std::string(kAssistantPrefix) + turns[cut].text;
    blocks.push_back(std::move(block));
  }
  blocks.push_back("Dialog:\n" + render_turns(dialog) + "\nAssistant:");
  return join_blocks(blocks);
}

// --- parsing ------------------------------------------------------------------

Dialog parse_dialog(const std::string& completion) {
  Dialog d;
  bool have_turn = false;
  for (auto raw : split_lines(completion)) {
    const auto lt = ltrim(raw);
    if (is_question_label(lt)) break;
    if (have_turn && is_dialog_label(lt)) break;
    std::optional<Role> role;
    std::optional<std::string_view> rest;
    if ((rest = match_label(lt, "user"))) {
      role = Role::user;
    } else if ((rest = match_label(lt, "assistant"))) {
      role = Role::assistant;
    }
    if (role) {
      d.turns.push_back(DialogTurn{*role, trim(*rest)});
      have_turn = true;
      continue;
    }
    if (!have_turn) continue;
    const auto text = trim(raw);
    if (text.empty()) continue;
    auto& cur = d.turns.back().text;
    if (!cur.empty()) cur += ' ';
    cur += text;
  }
  std::erase_if(d.turns, [](const DialogTurn& t) { return t.text.empty(); });
  if (d.turns.empty()) throw ParseError("completion contains no dialog turns", completion);
  if (d.turns.back().role != Role::user) throw ParseError("dialog does not end with a user turn", completion);
  return d;
}

std::string clean_reverse_completion(const std::string& completion) {
  for (auto raw : split_lines(completion)) {
    auto line = trim(raw);
    if (line.empty()) continue;
    if (auto rest = match_label(line, "question")) line = trim(*rest);
    if (!line.empty()) return line;
  }
  return {};
}

std::string clean_response(const std::string& completion) {
  std::string out;
  bool first = true;
  for (auto raw : split_lines(completion)) {
    auto lt = ltrim(raw);
    if (first) {
      if (trim(lt).empty()) continue;
      if (match_label(lt, "user") || is_question_label(lt) || is_dialog_label(lt)) break;
      if (auto rest = match_label(lt, "assistant")) lt = *rest;
      first = false;
    } else if (match_label(lt, "user") || match_label(lt, "assistant") || is_question_label(lt) ||
               is_dialog_label(lt)) {
      break;
    }
    const auto text = trim(lt);
    if (text.empty()) continue;
    if (!out.empty()) out += ' ';
    out += text;
  }
  // A completion may repeat the label ("Assistant: Assistant: ...").
  while (auto rest = match_label(out, "assistant")) out = trim(*rest);
  if (out.empty()) throw ParseError("response completion is empty", completion);
  return out;
}

// --- backends -----------------------------------------------------------------

std::string EchoBackend::complete(const LmRequest& req) {
  req.validate();
  std::string_view p = req.prompt;
  if (ends_with(p, "\nDialog:")) {
    p.remove_suffix(8);
    auto pos = p.rfind("\n\nQuestion: ");
    std::size_t start = 0;
    if (pos != std::string_view::npos) {
      start = pos + 12;
    } else if (p.substr(0, 10) == "Question: ") {
      start = 10;
    } else {
      throw InputError("echo backend: forward prompt has no Question block");
    }
    const auto question = trim(p.substr(start));
    return "Assistant: " + std::string(kGreeting) + "\nUser: " + question;
  }
  if (ends_with(p, "\nQuestion:")) {
    p.remove_suffix(10);
    const Dialog d = parse_dialog(std::string(last_dialog_block(p)));
    return d.final_text();
  }
  if (ends_with(p, "\nAssistant:")) {
    p.remove_suffix(11);
    const Dialog d = parse_dialog(std::string(last_dialog_block(p)));
    return std::string(kResponsePrefix) + d.final_text();
  }
  throw InputError("echo backend: unrecognised prompt shape");
}

struct ReplayBackend::Impl {
  std::unordered_map<std::string, std::string> completions;
};

ReplayBackend::ReplayBackend(const std::filesystem::path& path) : impl_(std::make_shared<Impl>()) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string(), "cannot open replay file");
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = Json::parse(line);
      impl_->completions.emplace(j.at("key").get<std::string>(), j.at("completion").get<std::string>());
    } catch (const Json::exception& e) {
      throw DataError(path.string(), lineno, e.what());
    }
  }
}

std::string ReplayBackend::complete(const LmRequest& req) {
  req.validate();
  const auto key = req.key();
  auto it = impl_->completions.find(key);
  if (it == impl_->completions.end()) throw ReplayMissError(key);
  return it->second;
}

std::size_t ReplayBackend::size() const noexcept { return impl_->completions.size(); }

struct HttpBackend::Impl {
  explicit Impl(const LmBackendConfig& c) : cfg(c), slots(static_cast<std::ptrdiff_t>(c.max_in_flight)) {}

  LmBackendConfig cfg;
  std::counting_semaphore<> slots;
  std::mutex mu;
  std::unordered_map<std::string, std::string> recorded;
  std::optional<JsonlWriter> recorder;
  std::atomic<std::size_t> calls{0};
};

HttpBackend::HttpBackend(const LmBackendConfig& cfg) : impl_(std::make_unique<Impl>(cfg)) {
  cfg.validate();
  if (cfg.record_path) {
    if (std::filesystem::exists(*cfg.record_path)) {
      std::ifstream in(*cfg.record_path);
      std::string line;
      while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto j = Json::parse(line);
        impl_->recorded.emplace(j.at("key").get<std::string>(), j.at("completion").get<std::string>());
      }
    }
    impl_->recorder.emplace(*cfg.record_path, JsonlWriter::Mode::append);
  }
}

HttpBackend::~HttpBackend() = default;

std::size_t HttpBackend::remote_calls() const noexcept { return impl_->calls.load(); }

std::string HttpBackend::complete(const LmRequest& req) {
  req.validate();
  const auto key = req.key();
  {
    std::lock_guard lock(impl_->mu);
    if (auto it = impl_->recorded.find(key); it != impl_->recorded.end()) return it->second;
  }

  Json resp;
  {
    impl_->slots.acquire();
    struct Release {
      std::counting_semaphore<>& s;
      ~Release() { s.release(); }
    } release{impl_->slots};
    ++impl_->calls;
    resp = http_post_json(*impl_->cfg.endpoint, req.to_json(), HttpOptions{impl_->cfg.timeout, env_var(kLmTokenEnv)});
  }
  if (!resp.is_object() || !resp.contains("text") || !resp["text"].is_string()) {
    throw ProtocolError("LM endpoint response lacks a string \"text\" field");
  }
  std::string text = resp["text"].get<std::string>();

  std::lock_guard lock(impl_->mu);
  auto [it, inserted] = impl_->recorded.emplace(key, text);
  if (inserted && impl_->recorder) {
    impl_->recorder->write_line(canonical_dump(Json{{"key", key}, {"request", req.to_json()}, {"completion", text}}));
  }
  return it->second;
}

std::unique_ptr<LmBackend> make_backend(const LmBackendConfig& cfg) {
  cfg.validate();
  switch (cfg.kind) {
    case LmBackendConfig::Kind::http: return std::make_unique<HttpBackend>(cfg);
    case LmBackendConfig::Kind::replay: return std::make_unique<ReplayBackend>(*cfg.replay_path);
    case LmBackendConfig::Kind::echo: return std::make_unique<EchoBackend>();
  }
  throw InputError("unknown backend kind");
}

std::string complete(const LmBackendConfig& cfg, const LmRequest& req) { return make_backend(cfg)->complete(req); }

LmRequest forward_request(const PromptSet& ps, const std::string& question, double temperature) {
  return LmRequest{render_forward_prompt(ps, question), temperature, kForwardMaxTokens,
                   std::vector<std::string>{"\nQuestion:"}};
}

LmRequest reverse_request(const PromptSet& ps, const Dialog& dialog) {
  return LmRequest{render_reverse_prompt(ps, dialog), kReverseTemperature, kReverseMaxTokens,
                   std::vector<std::string>{"\n"}};
}

LmRequest response_request(const PromptSet& ps, const Dialog& dialog) {
  return LmRequest{render_response_prompt(ps, dialog), kResponseTemperature, kResponseMaxTokens,
                   std::vector<std::string>{"\nUser:", "\nDialog:"}};
}

std::string generate_response(LmBackend& backend, const PromptSet& ps, const Dialog& dialog_ending_in_question) {
  return clean_response(backend.complete(response_request(ps, dialog_ending_in_question)));
}

std::string generate_response(const LmBackendConfig& cfg, const PromptSet& ps,
                              const Dialog& dialog_ending_in_question) {
  auto backend = make_backend(cfg);
  return generate_response(*backend, ps, dialog_ending_in_question);
}

}  // namespace q2d
