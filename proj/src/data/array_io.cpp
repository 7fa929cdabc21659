#include "f2i/data/array_io.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>
#include <vector>

#include "f2i/core/errors.hpp"

namespace f2i {

using json = nlohmann::json;

void write_array(const std::string& path, const Tensor& t, const std::string& role) {
    if (t.rank() < 1 || t.rank() > 4)
        throw DataError("write_array: rank must be 1..4, got " + std::to_string(t.rank()));
    if (!t.all_finite()) throw DataError("write_array: non-finite payload: " + path);

    json header = {{"dtype", "float32"}, {"shape", t.shape()}, {"role", role}};
    std::string hs = header.dump();
    uint32_t hlen = static_cast<uint32_t>(hs.size());

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("write_array: cannot open " + path);
    unsigned char lenb[4] = {static_cast<unsigned char>(hlen & 0xff),
                             static_cast<unsigned char>((hlen >> 8) & 0xff),
                             static_cast<unsigned char>((hlen >> 16) & 0xff),
                             static_cast<unsigned char>((hlen >> 24) & 0xff)};
    f.write(reinterpret_cast<const char*>(lenb), 4);
    f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    // host is little-endian; floats are written verbatim
    f.write(reinterpret_cast<const char*>(t.data()),
            static_cast<std::streamsize>(t.numel() * sizeof(float)));
    if (!f) throw DataError("write_array: write failed: " + path);
}

Tensor read_array(const std::string& path, std::string* role_out) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("read_array: cannot open " + path);

    unsigned char lenb[4];
    if (!f.read(reinterpret_cast<char*>(lenb), 4))
        throw DataError("read_array: corrupt header (truncated length): " + path);
    uint32_t hlen = static_cast<uint32_t>(lenb[0]) | (static_cast<uint32_t>(lenb[1]) << 8) |
                    (static_cast<uint32_t>(lenb[2]) << 16) | (static_cast<uint32_t>(lenb[3]) << 24);
    if (hlen == 0 || hlen > (1u << 20))
        throw DataError("read_array: corrupt header (bad length): " + path);

    std::string hs(hlen, '\0');
    if (!f.read(hs.data(), hlen))
        throw DataError("read_array: corrupt header (truncated): " + path);

    json header;
    try {
        header = json::parse(hs);
    } catch (const json::exception&) {
        throw DataError("read_array: corrupt header (bad JSON): " + path);
    }
    if (!header.contains("dtype") || !header.contains("shape"))
        throw DataError("read_array: corrupt header (missing fields): " + path);
    if (header["dtype"].get<std::string>() != "float32")
        throw DataError("read_array: unsupported dtype: " + path);
    std::vector<int64_t> shape = header["shape"].get<std::vector<int64_t>>();
    if (shape.empty() || shape.size() > 4)
        throw DataError("read_array: corrupt header (rank): " + path);
    for (int64_t d : shape)
        if (d <= 0) throw DataError("read_array: corrupt header (dimension): " + path);
    if (role_out && header.contains("role")) *role_out = header["role"].get<std::string>();

    int64_t n = 1;
    for (int64_t d : shape) n *= d;

    Tensor::Buffer data(static_cast<size_t>(n));
    f.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(n * sizeof(float)));
    if (f.gcount() != static_cast<std::streamsize>(n * sizeof(float)))
        throw DataError("read_array: shape/payload mismatch: " + path);
    char extra;
    if (f.read(&extra, 1))
        throw DataError("read_array: shape/payload mismatch (trailing bytes): " + path);

    Tensor t(shape, std::move(data));
    if (!t.all_finite()) throw DataError("read_array: non-finite payload: " + path);
    return t;
}

}  // namespace f2i
