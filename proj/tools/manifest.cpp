#include "manifest.hpp"

#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "cellforge/util/errors.hpp"
#include "cellforge/util/hash.hpp"

namespace cellforge::cli {

using json = nlohmann::json;

RunManifest::RunManifest(std::string command)
    : command_(std::move(command)), start_(std::chrono::steady_clock::now()) {}

void RunManifest::flag(const std::string& name, const std::string& value) {
    flags_[name] = value;
}

void RunManifest::flag(const std::string& name, double value) {
    flags_[name] = json(value).dump();
}

void RunManifest::flag(const std::string& name, long long value) {
    flags_[name] = std::to_string(value);
}

void RunManifest::seed(std::uint64_t seed) { seeds_.push_back(seed); }

void RunManifest::input(const std::string& path) {
    input_digests_[path] = util::hex64(util::digest_file(path));
}

void RunManifest::write(const std::string& path) const {
    json j;
    j["command"] = command_;
    j["flags"] = flags_;
    j["seeds"] = seeds_;
    j["inputs"] = input_digests_;
    j["version"] = kVersion;
    auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                  std::chrono::steady_clock::now() - start_)
                  .count();
    j["duration_ms"] = ms;
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write manifest: " + path);
    out << j.dump(2) << "\n";
}

OutputGuard::~OutputGuard() {
    if (committed_) return;
    for (const std::string& p : paths_) std::remove(p.c_str());
}

void OutputGuard::track(const std::string& path) { paths_.push_back(path); }

}  // namespace cellforge::cli
