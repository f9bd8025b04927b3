#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "q2d/error.hpp"

namespace q2d {

using Json = nlohmann::json;

// One source question/answer pair. `answer` may be empty for query-only
// sources such as search logs.
struct QaRecord {
  std::string id;
  std::string question;
  std::string answer;
  std::map<std::string, std::string> meta;

  bool operator==(const QaRecord&) const = default;
};

enum class Role { user, assistant };

struct DialogTurn {
  Role role = Role::user;
  std::string text;

  bool operator==(const DialogTurn&) const = default;
};

struct Dialog {
  std::vector<DialogTurn> turns;

  bool empty() const noexcept { return turns.empty(); }
  // Text of the last turn; the dialog must be non-empty.
  const std::string& final_text() const { return turns.back().text; }

  bool operator==(const Dialog&) const = default;
};

// Throws InputError unless the dialog has at least one turn, ends with a user
// turn, and every turn has non-empty text.
void validate_dialog(const Dialog& dialog);

enum class FilterName { intent, answer_leak, last_turn, nli, parse_error };

struct FilterScores {
  double intent_similarity = 0.0;
  double answer_leak = 0.0;
  double last_turn_similarity = 0.0;
  std::optional<double> nli_intent;

  bool operator==(const FilterScores&) const = default;
};

struct FilterVerdict {
  bool retained = true;
  std::vector<FilterName> failed_filters;

  bool operator==(const FilterVerdict&) const = default;
};

struct GeneratedSample {
  std::string id;
  std::string source_question;
  std::string answer;
  Dialog dialog;  // empty when the forward completion failed to parse
  std::string reversed_question;
  FilterScores scores;
  FilterVerdict verdict;

  bool operator==(const GeneratedSample&) const = default;
};

const char* to_string(Role role) noexcept;
Role role_from_string(const std::string& s);
const char* to_string(FilterName name) noexcept;
FilterName filter_name_from_string(const std::string& s);

void to_json(Json& j, const QaRecord& r);
void from_json(const Json& j, QaRecord& r);
void to_json(Json& j, const DialogTurn& t);
void from_json(const Json& j, DialogTurn& t);
void to_json(Json& j, const Dialog& d);
void from_json(const Json& j, Dialog& d);
void to_json(Json& j, const FilterScores& s);
void from_json(const Json& j, FilterScores& s);
void to_json(Json& j, const FilterVerdict& v);
void from_json(const Json& j, FilterVerdict& v);
void to_json(Json& j, const GeneratedSample& s);
void from_json(const Json& j, GeneratedSample& s);

// Single-line canonical serialization: sorted keys, no whitespace, UTF-8.
std::string canonical_dump(const Json& j);

namespace detail {
// Pulls an id out of a record for duplicate detection; records without an id
// field are exempt.
template <class T>
const std::string* record_id(const T& r) {
  if constexpr (requires { r.id; }) {
    return &r.id;
  } else {
    return nullptr;
  }
}
}  // namespace detail

template <class T>
struct Numbered {
  std::size_t line = 0;
  T record;
};

// Streams records of type T from a JSON-lines file. Blank lines are skipped.
// Malformed lines and duplicate ids throw DataError naming the line.
template <class T>
class JsonlReader {
 public:
  explicit JsonlReader(std::filesystem::path path) : path_(std::move(path)), in_(path_) {
    if (!in_) {
      throw IoError(path_.string(), "cannot open for reading");
    }
  }

  std::optional<Numbered<T>> next() {
    std::string text;
    while (std::getline(in_, text)) {
      ++line_;
      if (!text.empty() && text.back() == '\r') text.pop_back();
      if (text.find_first_not_of(" \t") == std::string::npos) continue;
      T record;
      try {
        record = Json::parse(text).template get<T>();
      } catch (const std::exception& e) {
        throw DataError(path_.string(), line_, std::string(e.what()) + " in: " + truncate(text));
      }
      if (const std::string* id = detail::record_id(record)) {
        auto [it, inserted] = seen_.emplace(*id, line_);
        if (!inserted) {
          throw DataError(path_.string(), line_,
                          "duplicate id '" + *id + "' (first seen on line " +
                              std::to_string(it->second) + ")");
        }
      }
      return Numbered<T>{line_, std::move(record)};
    }
    return std::nullopt;
  }

 private:
  static std::string truncate(const std::string& s) {
    constexpr std::size_t kMax = 200;
    return s.size() <= kMax ? s : s.substr(0, kMax) + "...";
  }

  std::filesystem::path path_;
  std::ifstream in_;
  std::size_t line_ = 0;
  std::unordered_map<std::string, std::size_t> seen_;
};

template <class T>
std::vector<T> read_jsonl(const std::filesystem::path& path) {
  JsonlReader<T> reader(path);
  std::vector<T> out;
  while (auto r = reader.next()) out.push_back(std::move(r->record));
  return out;
}

// Appending line writer. Each write is flushed so a crash never leaves a
// half-written record behind more than the last line.
class JsonlWriter {
 public:
  enum class Mode { truncate, append };

  explicit JsonlWriter(const std::filesystem::path& path, Mode mode = Mode::truncate);

  template <class T>
  void write(const T& record) {
    Json j;
    to_json(j, record);
    write_line(canonical_dump(j));
  }
  void write_line(const std::string& line);
  std::size_t count() const noexcept { return count_; }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  std::size_t count_ = 0;
};

template <class T>
std::size_t write_jsonl(const std::filesystem::path& path, std::span<const T> records) {
  JsonlWriter w(path);
  for (const auto& r : records) w.write(r);
  return w.count();
}

template <class T>
std::size_t write_jsonl(const std::filesystem::path& path, const std::vector<T>& records) {
  return write_jsonl(path, std::span<const T>(records));
}

// Writes `content` to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

std::string read_file(const std::filesystem::path& path);

}  // namespace q2d
