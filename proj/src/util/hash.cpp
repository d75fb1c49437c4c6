#include "cellforge/util/hash.hpp"

#include <array>
#include <cstdio>
#include <fstream>

#include "cellforge/util/errors.hpp"

namespace cellforge::util {

std::uint64_t digest_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file for digest: " + path);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    std::array<char, 65536> buf;
    while (in) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        h = fnv1a64(std::string_view(buf.data(), static_cast<std::size_t>(in.gcount())), h);
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char out[17];
    std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(v));
    return std::string(out);
}

}  // namespace cellforge::util
