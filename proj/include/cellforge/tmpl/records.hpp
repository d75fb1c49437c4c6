#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cellforge/expr/matrix.hpp"

namespace cellforge::tmpl {

enum class Task { kCta, kDsp, kCpcg };

const char* task_name(Task t);
Task task_from_name(const std::string& name);

enum class TraitKind { kPersonality, kMotivation, kProficiency };

struct TraitSample {
    // Chosen trait values keyed by kind; absent kind = not included.
    std::map<TraitKind, std::string> values;
    bool want_options = false;

    std::size_t size() const { return values.size(); }
};

struct TemplateRecord {
    Task task = Task::kCta;
    std::string instruction;  // text with placeholders
    std::string response;     // contains {output}
    TraitSample traits;
    bool has_options = false;
    std::optional<expr::Split> split;
};

/// JSON lines: {task, instruction, response, traits, has_options, split}.
std::vector<TemplateRecord> load_records_jsonl(const std::string& path);
void save_records_jsonl(const std::vector<TemplateRecord>& records, const std::string& path);

const char* trait_kind_name(TraitKind k);

}  // namespace cellforge::tmpl
