#include "cellforge/tmpl/rouge.hpp"

#include <algorithm>
#include <cctype>

namespace cellforge::tmpl {

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> tokens;
    std::string cur;
    for (char c : text) {
        unsigned char uc = static_cast<unsigned char>(c);
        if (std::isspace(uc)) {
            if (!cur.empty()) {
                tokens.push_back(cur);
                cur.clear();
            }
        } else if (std::isalnum(uc)) {
            cur.push_back(static_cast<char>(std::tolower(uc)));
        }
        // punctuation is stripped, not treated as a separator
    }
    if (!cur.empty()) tokens.push_back(cur);
    return tokens;
}

double rouge_l(const std::string& candidate, const std::string& reference) {
    std::vector<std::string> c = tokenize(candidate);
    std::vector<std::string> r = tokenize(reference);
    if (c.empty() || r.empty()) return 0.0;
    std::size_t n = c.size(), m = r.size();
    // Rolling-row LCS dynamic program.
    std::vector<std::size_t> prev(m + 1, 0), cur(m + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        for (std::size_t j = 1; j <= m; ++j) {
            if (c[i - 1] == r[j - 1])
                cur[j] = prev[j - 1] + 1;
            else
                cur[j] = std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    double lcs = static_cast<double>(prev[m]);
    if (lcs == 0.0) return 0.0;
    double p = lcs / static_cast<double>(n);
    double rr = lcs / static_cast<double>(m);
    return 2.0 * p * rr / (p + rr);
}

std::size_t word_count(const std::string& text) {
    std::size_t count = 0;
    bool in_word = false;
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            in_word = false;
        } else if (!in_word) {
            in_word = true;
            ++count;
        }
    }
    return count;
}

}  // namespace cellforge::tmpl
