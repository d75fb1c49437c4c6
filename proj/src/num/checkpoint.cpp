#include "cellforge/num/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "cellforge/util/errors.hpp"

namespace cellforge::num {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {

template <typename T>
void write_pod(std::ofstream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in, const std::string& path) {
    T v;
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw IoError("truncated checkpoint: " + path);
    return v;
}

}  // namespace

void save_params(const ParamStore& store, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open checkpoint for writing: " + path);
    out.write("CFP1", 4);
    for (const auto& [name, entry] : store.entries) {
        write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(entry.value.shape.size()));
        for (std::size_t d : entry.value.shape) write_pod<std::uint64_t>(out, d);
        out.write(reinterpret_cast<const char*>(entry.value.data.data()),
                  static_cast<std::streamsize>(entry.value.size() * sizeof(double)));
    }
    if (!out) throw IoError("write failed: " + path);
}

ParamStore load_params(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "CFP1", 4) != 0)
        throw IoError("not a CFP1 checkpoint: " + path);
    ParamStore store;
    while (true) {
        std::uint32_t name_len;
        in.read(reinterpret_cast<char*>(&name_len), sizeof(name_len));
        if (in.eof()) break;
        if (!in) throw IoError("truncated checkpoint: " + path);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        auto rank = read_pod<std::uint32_t>(in, path);
        std::vector<std::size_t> shape(rank);
        std::size_t total = 1;
        for (std::uint32_t i = 0; i < rank; ++i) {
            shape[i] = static_cast<std::size_t>(read_pod<std::uint64_t>(in, path));
            total *= shape[i];
        }
        Tensor t = Tensor::zeros(shape);
        in.read(reinterpret_cast<char*>(t.data.data()),
                static_cast<std::streamsize>(total * sizeof(double)));
        if (!in) throw IoError("truncated checkpoint: " + path);
        store.add(name, std::move(t));
    }
    return store;
}

}  // namespace cellforge::num
