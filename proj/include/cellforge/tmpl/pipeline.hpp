#pragma once

#include <map>
#include <string>
#include <vector>

#include "cellforge/num/rng.hpp"
#include "cellforge/tmpl/records.hpp"
#include "cellforge/tmpl/source.hpp"

namespace cellforge::tmpl {

/// Value pools the trait sampler draws from; loaded from plain text files
/// (one value per line).
struct TraitPools {
    std::vector<std::string> personalities;
    std::vector<std::string> motivations;
    std::vector<std::string> proficiencies;

    static TraitPools load_dir(const std::string& dir);
    void validate() const;
};

/// Trait-mixture sampler: subset size with probabilities
/// (3: 0.27, 2: 0.45, 1: 0.18, 0: 0.10), kinds uniform over size-k subsets,
/// values uniform from the pools; option placeholder requested with
/// probability 0.5 for CTA/DSP.
TraitSample sample_traits(num::Rng& rng, Task task, const TraitPools& pools);

struct FilterDecision {
    bool accept = false;
    std::string reason;  // empty when accepted
};

/// Required instruction placeholders per task: CTA needs {cell}; DSP needs
/// {cell} and {drug}; CPCG needs {cell_type}.
const std::vector<std::string>& required_placeholders(Task task);

/// Reject when over max_words whitespace tokens or any required placeholder
/// is missing. Pure function of the text.
FilterDecision filter_template(const std::string& instruction, Task task,
                               std::size_t max_words = 70);

/// Response-side rules: word limit; CPCG responses must end with {output}
/// (trailing whitespace ignored) and avoid ambiguous entities ("gene x" /
/// "gene 12" patterns, case-insensitive).
FilterDecision filter_response(const std::string& response, Task task,
                               std::size_t max_words = 70);

struct DedupStats {
    std::size_t accepted = 0;
    std::size_t rejected_filter = 0;
    std::size_t rejected_response = 0;
    std::size_t discarded_similarity = 0;
    std::size_t rewrites = 0;
    bool exhausted = false;
};

/// Pull candidates from the source until target_count accepted or the
/// source runs dry. Candidates too similar (max pairwise ROUGE-L over the
/// accepted set above `threshold`) are rewritten up to max_rewrites times,
/// then discarded.
std::vector<TemplateRecord> dedup_pipeline(TemplateSource& source, Task task,
                                           std::size_t target_count, double threshold,
                                           std::size_t max_rewrites, const TraitPools& pools,
                                           std::uint64_t seed, DedupStats* stats,
                                           std::size_t max_words = 70);

/// Substitute placeholders. {cell} becomes the opaque marker; {option}
/// renders the labels as a seeded-shuffle comma list; optional placeholders
/// without a value are elided without doubling whitespace. Missing required
/// attributes are an error naming the placeholder.
std::pair<std::string, std::string> fill_template(
    const TemplateRecord& t, const std::map<std::string, std::string>& attributes,
    const std::string& cell_marker, const std::vector<std::string>& option_labels,
    num::Rng& rng);

std::vector<TemplateRecord> split_templates(std::vector<TemplateRecord> records, double train,
                                            double valid, double test, std::uint64_t seed);

}  // namespace cellforge::tmpl
