#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cellforge/num/rng.hpp"
#include "cellforge/tmpl/records.hpp"

namespace cellforge::tmpl {

struct Candidate {
    std::string instruction;
    std::string response;
};

/// Seam between the pipeline and whatever produces candidate templates.
/// The canned reader is fully offline and deterministic; the HTTP source
/// talks to an external generation service.
class TemplateSource {
public:
    virtual ~TemplateSource() = default;
    /// Next fresh candidate, or nullopt when exhausted.
    virtual std::optional<Candidate> next(Task task, const TraitSample& traits,
                                          num::Rng& rng) = 0;
    /// Rephrased candidate after a similarity conflict.
    virtual std::optional<Candidate> rewrite(Task task, const Candidate& previous,
                                             const TraitSample& traits, num::Rng& rng) = 0;
};

/// Sequential reader over a fixed candidate list; rewrite() consumes the
/// next entry (a rewrite is a fresh phrasing).
class CannedSource : public TemplateSource {
public:
    explicit CannedSource(std::vector<Candidate> candidates);
    static CannedSource from_jsonl(const std::string& path);

    std::optional<Candidate> next(Task task, const TraitSample& traits, num::Rng& rng) override;
    std::optional<Candidate> rewrite(Task task, const Candidate& previous,
                                     const TraitSample& traits, num::Rng& rng) override;

    std::size_t consumed() const { return pos_; }

private:
    std::vector<Candidate> candidates_;
    std::size_t pos_ = 0;
};

struct HttpSourceConfig {
    std::string endpoint;       // e.g. http://127.0.0.1:8080
    std::string path = "/v1/templates";
    std::string auth_env;       // env var holding the bearer token; may be empty
    int timeout_ms = 10000;
    std::string request_log;    // JSONL request/response log; empty disables
};

/// POSTs {task, traits, want_options, mode, previous?} and expects
/// {instruction, response}.
class HttpSource : public TemplateSource {
public:
    explicit HttpSource(HttpSourceConfig cfg);
    ~HttpSource() override;

    std::optional<Candidate> next(Task task, const TraitSample& traits, num::Rng& rng) override;
    std::optional<Candidate> rewrite(Task task, const Candidate& previous,
                                     const TraitSample& traits, num::Rng& rng) override;

private:
    std::optional<Candidate> request(Task task, const TraitSample& traits, const char* mode,
                                     const Candidate* previous);
    HttpSourceConfig cfg_;
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace cellforge::tmpl
