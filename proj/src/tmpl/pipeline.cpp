#include "cellforge/tmpl/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <regex>

#include "cellforge/expr/transform.hpp"
#include "cellforge/tmpl/rouge.hpp"
#include "cellforge/util/errors.hpp"

namespace cellforge::tmpl {

namespace {

std::vector<std::string> load_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open trait pool file: " + path);
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
        if (!line.empty()) out.push_back(line);
    }
    return out;
}

}  // namespace

TraitPools TraitPools::load_dir(const std::string& dir) {
    TraitPools p;
    p.personalities = load_lines(dir + "/personality.txt");
    p.motivations = load_lines(dir + "/motivation.txt");
    p.proficiencies = load_lines(dir + "/proficiency.txt");
    p.validate();
    return p;
}

void TraitPools::validate() const {
    if (personalities.empty() || motivations.empty() || proficiencies.empty())
        throw ValidationError("trait pools must be non-empty");
}

TraitSample sample_traits(num::Rng& rng, Task task, const TraitPools& pools) {
    pools.validate();
    double u = rng.uniform();
    std::size_t size;
    if (u < 0.27)
        size = 3;
    else if (u < 0.27 + 0.45)
        size = 2;
    else if (u < 0.27 + 0.45 + 0.18)
        size = 1;
    else
        size = 0;

    static const std::vector<std::vector<TraitKind>> kSubsets[4] = {
        {{}},
        {{TraitKind::kPersonality}, {TraitKind::kMotivation}, {TraitKind::kProficiency}},
        {{TraitKind::kPersonality, TraitKind::kMotivation},
         {TraitKind::kPersonality, TraitKind::kProficiency},
         {TraitKind::kMotivation, TraitKind::kProficiency}},
        {{TraitKind::kPersonality, TraitKind::kMotivation, TraitKind::kProficiency}},
    };
    const auto& choices = kSubsets[size];
    const auto& kinds = choices[choices.size() == 1 ? 0 : rng.uniform_index(choices.size())];

    TraitSample sample;
    for (TraitKind kind : kinds) {
        const std::vector<std::string>* pool = nullptr;
        switch (kind) {
            case TraitKind::kPersonality: pool = &pools.personalities; break;
            case TraitKind::kMotivation: pool = &pools.motivations; break;
            case TraitKind::kProficiency: pool = &pools.proficiencies; break;
        }
        sample.values[kind] = (*pool)[rng.uniform_index(pool->size())];
    }
    if (task == Task::kCta || task == Task::kDsp) sample.want_options = rng.uniform() < 0.5;
    return sample;
}

const std::vector<std::string>& required_placeholders(Task task) {
    static const std::vector<std::string> kCta = {"{cell}"};
    static const std::vector<std::string> kDsp = {"{cell}", "{drug}"};
    static const std::vector<std::string> kCpcg = {"{cell_type}"};
    switch (task) {
        case Task::kCta: return kCta;
        case Task::kDsp: return kDsp;
        case Task::kCpcg: return kCpcg;
    }
    return kCta;
}

FilterDecision filter_template(const std::string& instruction, Task task,
                               std::size_t max_words) {
    if (word_count(instruction) > max_words)
        return {false, "length: over " + std::to_string(max_words) + " words"};
    for (const std::string& ph : required_placeholders(task))
        if (instruction.find(ph) == std::string::npos)
            return {false, "placeholder: missing " + ph};
    return {true, ""};
}

FilterDecision filter_response(const std::string& response, Task task, std::size_t max_words) {
    if (response.find("{output}") == std::string::npos)
        return {false, "placeholder: missing {output}"};
    if (word_count(response) > max_words)
        return {false, "length: over " + std::to_string(max_words) + " words"};
    if (task == Task::kCpcg) {
        std::string trimmed = response;
        while (!trimmed.empty() && std::isspace(static_cast<unsigned char>(trimmed.back())))
            trimmed.pop_back();
        const std::string kTail = "{output}";
        if (trimmed.size() < kTail.size() ||
            trimmed.compare(trimmed.size() - kTail.size(), kTail.size(), kTail) != 0)
            return {false, "ending: response must end with {output}"};
        // ambiguous entities like "gene a" or "gene 12"
        static const std::regex kBanned("\\bgene\\s+([a-z]\\b|[0-9]+\\b)",
                                        std::regex::icase);
        if (std::regex_search(response, kBanned))
            return {false, "entity: ambiguous gene placeholder name"};
    }
    return {true, ""};
}

std::vector<TemplateRecord> dedup_pipeline(TemplateSource& source, Task task,
                                           std::size_t target_count, double threshold,
                                           std::size_t max_rewrites, const TraitPools& pools,
                                           std::uint64_t seed, DedupStats* stats,
                                           std::size_t max_words) {
    if (!(threshold > 0.0 && threshold <= 1.0))
        throw ValidationError("dedup threshold must be in (0, 1]");
    DedupStats local;
    DedupStats& st = stats ? *stats : local;
    st = DedupStats{};
    num::Rng rng(seed);
    std::vector<TemplateRecord> accepted;

    auto max_similarity = [&](const std::string& instruction) {
        double mx = 0.0;
        for (const TemplateRecord& r : accepted)
            mx = std::max(mx, rouge_l(instruction, r.instruction));
        return mx;
    };

    while (accepted.size() < target_count) {
        TraitSample traits = sample_traits(rng, task, pools);
        std::optional<Candidate> cand = source.next(task, traits, rng);
        if (!cand) {
            st.exhausted = true;
            break;
        }
        bool settled = false;
        std::size_t rewrites_used = 0;
        while (!settled) {
            FilterDecision fd = filter_template(cand->instruction, task, max_words);
            if (!fd.accept) {
                ++st.rejected_filter;
                break;  // next synthesis round
            }
            if (max_similarity(cand->instruction) > threshold) {
                if (rewrites_used == max_rewrites) {
                    ++st.discarded_similarity;
                    break;
                }
                ++rewrites_used;
                ++st.rewrites;
                std::optional<Candidate> rewritten = source.rewrite(task, *cand, traits, rng);
                if (!rewritten) {
                    st.exhausted = true;
                    settled = true;  // fall through to outer exhaustion
                    break;
                }
                cand = std::move(rewritten);
                continue;
            }
            FilterDecision rd = filter_response(cand->response, task, max_words);
            if (!rd.accept) {
                ++st.rejected_response;
                break;
            }
            TemplateRecord rec;
            rec.task = task;
            rec.instruction = cand->instruction;
            rec.response = cand->response;
            rec.traits = traits;
            rec.has_options = cand->instruction.find("{option}") != std::string::npos;
            accepted.push_back(std::move(rec));
            ++st.accepted;
            settled = true;
        }
        if (st.exhausted) break;
    }
    if (accepted.size() < target_count) st.exhausted = true;
    return accepted;
}

namespace {

/// Replace every occurrence of `from`; when elide is set, also swallow one
/// adjacent space so optional placeholders vanish cleanly.
void replace_all(std::string& text, const std::string& from, const std::string& to) {
    std::size_t pos = 0;
    while ((pos = text.find(from, pos)) != std::string::npos) {
        text.replace(pos, from.size(), to);
        pos += to.size();
    }
}

void collapse_whitespace(std::string& text) {
    std::string out;
    out.reserve(text.size());
    bool prev_space = false;
    for (char c : text) {
        bool sp = c == ' ' || c == '\t';
        if (sp && prev_space) continue;
        out.push_back(sp ? ' ' : c);
        prev_space = sp;
    }
    // trim
    std::size_t b = out.find_first_not_of(' ');
    std::size_t e = out.find_last_not_of(' ');
    text = b == std::string::npos ? "" : out.substr(b, e - b + 1);
    // no space before sentence punctuation left behind by elisions
    replace_all(text, " .", ".");
    replace_all(text, " ,", ",");
    replace_all(text, " ?", "?");
    replace_all(text, " !", "!");
}

std::vector<std::string> placeholders_in(const std::string& text) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while ((pos = text.find('{', pos)) != std::string::npos) {
        std::size_t end = text.find('}', pos);
        if (end == std::string::npos) break;
        out.push_back(text.substr(pos, end - pos + 1));
        pos = end + 1;
    }
    return out;
}

}  // namespace

std::pair<std::string, std::string> fill_template(
    const TemplateRecord& t, const std::map<std::string, std::string>& attributes,
    const std::string& cell_marker, const std::vector<std::string>& option_labels,
    num::Rng& rng) {
    const std::vector<std::string>& required = required_placeholders(t.task);
    auto fill = [&](std::string text, bool is_response) {
        for (const std::string& ph : placeholders_in(text)) {
            std::string key = ph.substr(1, ph.size() - 2);
            if (ph == "{cell}") {
                replace_all(text, ph, cell_marker);
            } else if (ph == "{option}") {
                std::vector<std::string> opts = option_labels;
                rng.shuffle(opts);
                std::string joined;
                for (std::size_t i = 0; i < opts.size(); ++i) {
                    if (i) joined += ", ";
                    joined += opts[i];
                }
                replace_all(text, ph, joined);
            } else if (auto it = attributes.find(key); it != attributes.end()) {
                replace_all(text, ph, it->second);
            } else {
                bool is_required =
                    (!is_response &&
                     std::find(required.begin(), required.end(), ph) != required.end()) ||
                    (is_response && ph == "{output}");
                if (is_required)
                    throw ValidationError("fill_template: missing required attribute " + ph);
                replace_all(text, ph, "");  // optional attribute: elide
            }
        }
        collapse_whitespace(text);
        return text;
    };
    return {fill(t.instruction, false), fill(t.response, true)};
}

std::vector<TemplateRecord> split_templates(std::vector<TemplateRecord> records, double train,
                                            double valid, double test, std::uint64_t seed) {
    std::vector<expr::Split> tags =
        expr::make_split(records.size(), train, valid, test, seed);
    for (std::size_t i = 0; i < records.size(); ++i) records[i].split = tags[i];
    return records;
}

}  // namespace cellforge::tmpl
