#pragma once

#include <string>
#include <vector>

namespace cellforge::tmpl {

/// Lowercase, strip punctuation, split on whitespace.
std::vector<std::string> tokenize(const std::string& text);

/// ROUGE-L F-measure (beta = 1) over token sequences: P = LCS/|cand|,
/// R = LCS/|ref|, F = 2PR/(P+R); 0 when either side is empty.
double rouge_l(const std::string& candidate, const std::string& reference);

/// Whitespace-token count (placeholders count as one word).
std::size_t word_count(const std::string& text);

}  // namespace cellforge::tmpl
