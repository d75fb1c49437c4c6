#include "cellforge/tmpl/source.hpp"

#include <cstdlib>
#include <fstream>

#include <httplib.h>
#include <json.hpp>

#include "cellforge/util/errors.hpp"

namespace cellforge::tmpl {

using json = nlohmann::json;

CannedSource::CannedSource(std::vector<Candidate> candidates)
    : candidates_(std::move(candidates)) {}

CannedSource CannedSource::from_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open canned template corpus: " + path);
    std::vector<Candidate> out;
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
        out.push_back({j.at("instruction").get<std::string>(), j.value("response", "")});
    }
    return CannedSource(std::move(out));
}

std::optional<Candidate> CannedSource::next(Task, const TraitSample&, num::Rng&) {
    if (pos_ >= candidates_.size()) return std::nullopt;
    return candidates_[pos_++];
}

std::optional<Candidate> CannedSource::rewrite(Task task, const Candidate&,
                                               const TraitSample& traits, num::Rng& rng) {
    return next(task, traits, rng);
}

struct HttpSource::Impl {
    explicit Impl(const std::string& endpoint) : client(endpoint) {}
    httplib::Client client;
};

HttpSource::HttpSource(HttpSourceConfig cfg) : cfg_(std::move(cfg)) {
    impl_ = std::make_unique<Impl>(cfg_.endpoint);
    impl_->client.set_connection_timeout(0, cfg_.timeout_ms * 1000);
    impl_->client.set_read_timeout(0, cfg_.timeout_ms * 1000);
    if (!cfg_.auth_env.empty()) {
        const char* token = std::getenv(cfg_.auth_env.c_str());
        if (token == nullptr || *token == '\0')
            throw ValidationError("template source auth env var is unset: " + cfg_.auth_env);
        impl_->client.set_bearer_token_auth(token);
    }
}

HttpSource::~HttpSource() = default;

std::optional<Candidate> HttpSource::request(Task task, const TraitSample& traits,
                                             const char* mode, const Candidate* previous) {
    json body;
    body["task"] = task_name(task);
    body["mode"] = mode;
    body["want_options"] = traits.want_options;
    json jt = json::object();
    for (const auto& [kind, value] : traits.values) jt[trait_kind_name(kind)] = value;
    body["traits"] = jt;
    if (previous) {
        body["previous"] = {{"instruction", previous->instruction},
                            {"response", previous->response}};
    }
    auto res = impl_->client.Post(cfg_.path, body.dump(), "application/json");
    if (!res)
        throw IoError("template source request failed: " + httplib::to_string(res.error()));
    if (res->status != 200)
        throw IoError("template source returned HTTP " + std::to_string(res->status));
    json reply;
    try {
        reply = json::parse(res->body);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("template source returned bad JSON: ") + e.what());
    }
    if (!cfg_.request_log.empty()) {
        std::ofstream log(cfg_.request_log, std::ios::app);
        json entry;
        entry["request"] = body;
        entry["response"] = reply;
        log << entry.dump() << "\n";
    }
    if (reply.contains("exhausted") && reply["exhausted"].get<bool>()) return std::nullopt;
    return Candidate{reply.at("instruction").get<std::string>(),
                     reply.value("response", "")};
}

std::optional<Candidate> HttpSource::next(Task task, const TraitSample& traits, num::Rng&) {
    return request(task, traits, "new", nullptr);
}

std::optional<Candidate> HttpSource::rewrite(Task task, const Candidate& previous,
                                             const TraitSample& traits, num::Rng&) {
    return request(task, traits, "rewrite", &previous);
}

}  // namespace cellforge::tmpl
