#include "q2d/corpus.hpp"

#include <algorithm>
#include <sstream>

#include "q2d/textmetrics.hpp"

namespace q2d {
namespace {

const Json& require(const Json& j, const char* key) {
  if (!j.is_object()) throw InputError("expected a JSON object");
  auto it = j.find(key);
  if (it == j.end()) throw InputError(std::string("missing required field \"") + key + "\"");
  return *it;
}

std::string require_string(const Json& j, const char* key) {
  const Json& v = require(j, key);
  if (!v.is_string()) throw InputError(std::string("field \"") + key + "\" must be a string");
  return v.get<std::string>();
}

std::string optional_string(const Json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return {};
  if (!it->is_string()) throw InputError(std::string("field \"") + key + "\" must be a string");
  return it->get<std::string>();
}

double require_in_range(const Json& j, const char* key, double lo, double hi) {
  const Json& v = require(j, key);
  if (!v.is_number()) throw InputError(std::string("field \"") + key + "\" must be a number");
  const double x = v.get<double>();
  if (!(x >= lo && x <= hi)) {
    throw InputError(std::string("field \"") + key + "\" out of range: " + std::to_string(x));
  }
  return x;
}

}  // namespace

void validate_dialog(const Dialog& dialog) {
  if (dialog.turns.empty()) throw InputError("dialog has no turns");
  for (const auto& t : dialog.turns) {
    if (t.text.empty()) throw InputError("dialog turn has empty text");
  }
  if (dialog.turns.back().role != Role::user) throw InputError("dialog does not end with a user turn");
}

const char* to_string(Role role) noexcept { return role == Role::user ? "user" : "assistant"; }

Role role_from_string(const std::string& s) {
  if (s == "user") return Role::user;
  if (s == "assistant") return Role::assistant;
  throw InputError("unknown role \"" + s + "\"");
}

const char* to_string(FilterName name) noexcept {
  switch (name) {
    case FilterName::intent: return "intent";
    case FilterName::answer_leak: return "answer_leak";
    case FilterName::last_turn: return "last_turn";
    case FilterName::nli: return "nli";
    case FilterName::parse_error: return "parse_error";
  }
  return "unknown";
}

FilterName filter_name_from_string(const std::string& s) {
  for (auto n : {FilterName::intent, FilterName::answer_leak, FilterName::last_turn, FilterName::nli,
                 FilterName::parse_error}) {
    if (s == to_string(n)) return n;
  }
  throw InputError("unknown filter name \"" + s + "\"");
}

void to_json(Json& j, const QaRecord& r) {
  j = Json{{"id", r.id}, {"question", r.question}, {"answer", r.answer}, {"meta", r.meta}};
}

void from_json(const Json& j, QaRecord& r) {
  r.id = require_string(j, "id");
  r.question = require_string(j, "question");
  r.answer = optional_string(j, "answer");
  r.meta.clear();
  if (auto it = j.find("meta"); it != j.end() && !it->is_null()) {
    if (!it->is_object()) throw InputError("field \"meta\" must be an object");
    for (const auto& [k, v] : it->items()) {
      if (!v.is_string()) throw InputError("meta value for \"" + k + "\" must be a string");
      r.meta.emplace(k, v.get<std::string>());
    }
  }
  if (r.id.empty()) throw InputError("field \"id\" is empty");
  if (tokenize(r.question).empty()) throw InputError("question has no tokens");
}

void to_json(Json& j, const DialogTurn& t) { j = Json{{"role", to_string(t.role)}, {"text", t.text}}; }

void from_json(const Json& j, DialogTurn& t) {
  t.role = role_from_string(require_string(j, "role"));
  t.text = require_string(j, "text");
  if (t.text.empty()) throw InputError("turn text is empty");
}

void to_json(Json& j, const Dialog& d) {
  j = Json::array();
  for (const auto& t : d.turns) j.push_back(t);
}

void from_json(const Json& j, Dialog& d) {
  if (!j.is_array()) throw InputError("dialog must be an array of turns");
  d.turns.clear();
  for (const auto& t : j) d.turns.push_back(t.get<DialogTurn>());
}

void to_json(Json& j, const FilterScores& s) {
  j = Json{{"intent_similarity", s.intent_similarity},
           {"answer_leak", s.answer_leak},
           {"last_turn_similarity", s.last_turn_similarity}};
  if (s.nli_intent) j["nli_intent"] = *s.nli_intent;
}

void from_json(const Json& j, FilterScores& s) {
  s.intent_similarity = require_in_range(j, "intent_similarity", -1.0, 1.0);
  s.answer_leak = require_in_range(j, "answer_leak", 0.0, 1.0);
  s.last_turn_similarity = require_in_range(j, "last_turn_similarity", -1.0, 1.0);
  s.nli_intent.reset();
  if (auto it = j.find("nli_intent"); it != j.end() && !it->is_null()) {
    s.nli_intent = require_in_range(j, "nli_intent", 0.0, 1.0);
  }
}

void to_json(Json& j, const FilterVerdict& v) {
  Json failed = Json::array();
  for (auto f : v.failed_filters) failed.push_back(to_string(f));
  j = Json{{"retained", v.retained}, {"failed_filters", std::move(failed)}};
}

void from_json(const Json& j, FilterVerdict& v) {
  const Json& retained = require(j, "retained");
  if (!retained.is_boolean()) throw InputError("field \"retained\" must be a boolean");
  v.retained = retained.get<bool>();
  const Json& failed = require(j, "failed_filters");
  if (!failed.is_array()) throw InputError("field \"failed_filters\" must be an array");
  v.failed_filters.clear();
  for (const auto& f : failed) {
    if (!f.is_string()) throw InputError("failed_filters entries must be strings");
    v.failed_filters.push_back(filter_name_from_string(f.get<std::string>()));
  }
  if (v.retained != v.failed_filters.empty()) {
    throw InputError("verdict is inconsistent: retained must equal failed_filters being empty");
  }
}

void to_json(Json& j, const GeneratedSample& s) {
  j = Json{{"id", s.id},
           {"source_question", s.source_question},
           {"answer", s.answer},
           {"dialog", s.dialog},
           {"reversed_question", s.reversed_question},
           {"scores", s.scores},
           {"verdict", s.verdict}};
}

void from_json(const Json& j, GeneratedSample& s) {
  s.id = require_string(j, "id");
  s.source_question = require_string(j, "source_question");
  s.answer = optional_string(j, "answer");
  s.dialog = require(j, "dialog").get<Dialog>();
  s.reversed_question = optional_string(j, "reversed_question");
  s.scores = require(j, "scores").get<FilterScores>();
  s.verdict = require(j, "verdict").get<FilterVerdict>();
  if (s.id.empty()) throw InputError("field \"id\" is empty");
}

std::string canonical_dump(const Json& j) { return j.dump(-1, ' ', false, Json::error_handler_t::strict); }

JsonlWriter::JsonlWriter(const std::filesystem::path& path, Mode mode) : path_(path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw IoError(path.parent_path().string(), ec.message());
  }
  out_.open(path, std::ios::binary | (mode == Mode::append ? std::ios::app : std::ios::trunc));
  if (!out_) throw IoError(path.string(), "cannot open for writing");
}

void JsonlWriter::write_line(const std::string& line) {
  out_ << line << '\n';
  out_.flush();
  if (!out_) throw IoError(path_.string(), "write failed");
  ++count_;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(tmp.string(), "cannot open for writing");
    out << content;
    out.flush();
    if (!out) throw IoError(tmp.string(), "write failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError(path.string(), "rename failed: " + ec.message());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string(), "cannot open for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace q2d
