#include "cellforge/tmpl/records.hpp"

#include <fstream>

#include <json.hpp>

#include "cellforge/util/errors.hpp"

namespace cellforge::tmpl {

using json = nlohmann::json;

const char* task_name(Task t) {
    switch (t) {
        case Task::kCta: return "CTA";
        case Task::kDsp: return "DSP";
        case Task::kCpcg: return "CPCG";
    }
    return "CTA";
}

Task task_from_name(const std::string& name) {
    if (name == "CTA" || name == "cta") return Task::kCta;
    if (name == "DSP" || name == "dsp") return Task::kDsp;
    if (name == "CPCG" || name == "cpcg") return Task::kCpcg;
    throw ValidationError("unknown task: " + name);
}

const char* trait_kind_name(TraitKind k) {
    switch (k) {
        case TraitKind::kPersonality: return "personality";
        case TraitKind::kMotivation: return "motivation";
        case TraitKind::kProficiency: return "proficiency";
    }
    return "personality";
}

namespace {

TraitKind trait_kind_from_name(const std::string& name) {
    if (name == "personality") return TraitKind::kPersonality;
    if (name == "motivation") return TraitKind::kMotivation;
    if (name == "proficiency") return TraitKind::kProficiency;
    throw ValidationError("unknown trait kind: " + name);
}

}  // namespace

std::vector<TemplateRecord> load_records_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open template file: " + path);
    std::vector<TemplateRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw ValidationError("bad JSON at line " + std::to_string(lineno) + " of " + path +
                                  ": " + e.what());
        }
        TemplateRecord r;
        r.task = task_from_name(j.value("task", "CTA"));
        r.instruction = j.at("instruction").get<std::string>();
        r.response = j.value("response", "");
        r.has_options = j.value("has_options", false);
        if (j.contains("traits") && j["traits"].is_object()) {
            for (auto it = j["traits"].begin(); it != j["traits"].end(); ++it)
                r.traits.values[trait_kind_from_name(it.key())] = it.value().get<std::string>();
        }
        if (j.contains("split") && j["split"].is_string())
            r.split = expr::split_from_name(j["split"].get<std::string>());
        out.push_back(std::move(r));
    }
    return out;
}

void save_records_jsonl(const std::vector<TemplateRecord>& records, const std::string& path) {
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out) throw IoError("cannot write template file: " + path);
    for (const TemplateRecord& r : records) {
        json j;
        j["task"] = task_name(r.task);
        j["instruction"] = r.instruction;
        j["response"] = r.response;
        j["has_options"] = r.has_options;
        json traits = json::object();
        for (const auto& [kind, value] : r.traits.values) traits[trait_kind_name(kind)] = value;
        j["traits"] = traits;
        if (r.split) j["split"] = expr::split_name(*r.split);
        out << j.dump() << "\n";
    }
    if (!out) throw IoError("write failed: " + path);
}

}  // namespace cellforge::tmpl
