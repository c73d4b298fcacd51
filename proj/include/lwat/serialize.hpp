#ifndef LWAT_SERIALIZE_HPP
#define LWAT_SERIALIZE_HPP

#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "lwat/errors.hpp"
#include "lwat/tensor.hpp"

// Tensor wire format: magic "LWAT", u8 version=1, u8 rank,
// u32 little-endian extents, then raw little-endian f32 payload.

namespace lwat {

namespace wire {

inline void put_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw FormatError("tensor: truncated stream while reading u32");
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

inline void put_f32(std::ostream& os, float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(os, bits);
}

inline float get_f32(std::istream& is) {
    const uint32_t bits = get_u32(is);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

} // namespace wire

inline constexpr char kTensorMagic[4] = {'L', 'W', 'A', 'T'};
inline constexpr uint8_t kTensorVersion = 1;

inline void save_tensor(std::ostream& os, const Tensor& t) {
    os.write(kTensorMagic, 4);
    os.put(static_cast<char>(kTensorVersion));
    os.put(static_cast<char>(t.rank()));
    for (int64_t i = 0; i < t.rank(); ++i) wire::put_u32(os, static_cast<uint32_t>(t.extent(i)));
    for (int64_t i = 0; i < t.size(); ++i) wire::put_f32(os, t[i]);
    if (!os) throw IoError("tensor: write failed");
}

inline Tensor load_tensor(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kTensorMagic, 4) != 0)
        throw FormatError("tensor: bad magic (expected LWAT)");
    const int version = is.get();
    if (version != kTensorVersion)
        throw FormatError("tensor: unsupported version " + std::to_string(version));
    const int rank = is.get();
    if (rank < 1 || !is) throw FormatError("tensor: bad rank");
    Shape shape(rank);
    for (int i = 0; i < rank; ++i) {
        shape[i] = wire::get_u32(is);
        if (shape[i] < 1) throw FormatError("tensor: extent < 1");
    }
    Tensor t(shape);
    for (int64_t i = 0; i < t.size(); ++i) {
        t[i] = wire::get_f32(is);
        if (!is) throw FormatError("tensor: truncated payload");
    }
    return t;
}

inline void save_tensor_file(const std::string& path, const Tensor& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for write: " + path);
    save_tensor(os, t);
}

inline Tensor load_tensor_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open for read: " + path);
    return load_tensor(is);
}

} // namespace lwat

#endif // LWAT_SERIALIZE_HPP
