#pragma once

#include <chrono>
#include <map>
#include <string>
#include <vector>

namespace cellforge::cli {

/// Every command stamps one manifest next to its primary output: the
/// command, its full flag set, seeds, content digests of the inputs, the
/// tool version and wall-clock duration.
class RunManifest {
public:
    RunManifest(std::string command);

    void flag(const std::string& name, const std::string& value);
    void flag(const std::string& name, double value);
    void flag(const std::string& name, long long value);
    void seed(std::uint64_t seed);
    void input(const std::string& path);

    void write(const std::string& path) const;

private:
    std::string command_;
    std::map<std::string, std::string> flags_;
    std::vector<std::uint64_t> seeds_;
    std::map<std::string, std::string> input_digests_;
    std::chrono::steady_clock::time_point start_;
};

/// Deletes registered paths unless commit() is called, so failed commands
/// leave no partial outputs behind.
class OutputGuard {
public:
    ~OutputGuard();
    void track(const std::string& path);
    void commit() { committed_ = true; }

private:
    std::vector<std::string> paths_;
    bool committed_ = false;
};

inline constexpr const char* kVersion = "0.1.0";

}  // namespace cellforge::cli
