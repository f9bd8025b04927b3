#include "q2d/textmetrics.hpp"

#include <unicode/uchar.h>
#include <unicode/utf8.h>

#include <algorithm>
#include <cstdint>
#include <unordered_map>

namespace q2d {
namespace {

bool is_word_char(UChar32 c) { return u_isalnum(c) != 0; }

bool is_mark(UChar32 c) { return (U_GET_GC_MASK(c) & U_GC_M_MASK) != 0; }

void append_utf8(std::string& out, UChar32 c) {
  char buf[U8_MAX_LENGTH];
  int32_t len = 0;
  UBool err = false;
  U8_APPEND(buf, len, U8_MAX_LENGTH, c, err);
  if (!err) out.append(buf, static_cast<std::size_t>(len));
}

}  // namespace

TokenSeq tokenize(std::string_view text) {
  TokenSeq seq;
  std::string current;
  const auto* s = reinterpret_cast<const uint8_t*>(text.data());
  const auto length = static_cast<int32_t>(text.size());
  int32_t i = 0;
  while (i < length) {
    UChar32 c = 0;
    U8_NEXT(s, i, length, c);
    if (c >= 0 && (is_word_char(c) || (!current.empty() && is_mark(c)))) {
      append_utf8(current, u_tolower(c));
    } else if (!current.empty()) {
      seq.tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) seq.tokens.push_back(std::move(current));
  return seq;
}

double rouge1_recall(const TokenSeq& reference, const TokenSeq& candidate) {
  if (reference.empty()) return 0.0;
  std::unordered_map<std::string_view, std::size_t> cand_counts;
  for (const auto& t : candidate.tokens) ++cand_counts[t];
  std::size_t overlap = 0;
  for (const auto& t : reference.tokens) {
    auto it = cand_counts.find(t);
    if (it != cand_counts.end() && it->second > 0) {
      --it->second;
      ++overlap;
    }
  }
  return static_cast<double>(overlap) / static_cast<double>(reference.size());
}

double rouge1_recall(std::string_view reference, std::string_view candidate) {
  return rouge1_recall(tokenize(reference), tokenize(candidate));
}

double contains_overlap(std::string_view haystack, std::string_view needle) {
  return rouge1_recall(needle, haystack);
}

}  // namespace q2d
