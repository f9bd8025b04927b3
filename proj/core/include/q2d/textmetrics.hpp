#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace q2d {

// Lowercased tokens; never contains an empty string.
struct TokenSeq {
  std::vector<std::string> tokens;

  std::size_t size() const noexcept { return tokens.size(); }
  bool empty() const noexcept { return tokens.empty(); }
  bool operator==(const TokenSeq&) const = default;
};

// Lowercases and splits on every maximal run of characters that are not
// Unicode letters or digits. Combining marks stay attached to the token they
// follow. Invalid UTF-8 bytes act as separators.
TokenSeq tokenize(std::string_view text);

// Clipped unigram overlap over the reference length:
//   sum_w min(count_ref(w), count_cand(w)) / |ref|
// Zero when the reference has no tokens.
double rouge1_recall(std::string_view reference, std::string_view candidate);
double rouge1_recall(const TokenSeq& reference, const TokenSeq& candidate);

// Fraction of the needle's tokens covered by the haystack, i.e.
// rouge1_recall(needle, haystack). Zero for an empty needle.
double contains_overlap(std::string_view haystack, std::string_view needle);

}  // namespace q2d
