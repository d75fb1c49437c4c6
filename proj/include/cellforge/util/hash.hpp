#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace cellforge::util {

// 64-bit FNV-1a. Used for manifest input digests and vocabulary hashes;
// not a cryptographic hash.
inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t digest_file(const std::string& path);

std::string hex64(std::uint64_t v);

}  // namespace cellforge::util
