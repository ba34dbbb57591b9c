// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "dfpo/error.hpp"

namespace dfpo::binary {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

inline std::uint64_t to_little(std::uint64_t v)
{
    if constexpr (std::endian::native == std::endian::little) return v;
    std::uint64_t r = 0;
    for (int i = 0; i < 8; ++i) r |= ((v >> (8 * i)) & 0xffu) << (8 * (7 - i));
    return r;
}

inline void put_u64(std::ostream& os, std::uint64_t v)
{
    const std::uint64_t le = to_little(v);
    os.write(reinterpret_cast<const char*>(&le), sizeof le);
}

inline void put_f64(std::ostream& os, double v)
{
    put_u64(os, std::bit_cast<std::uint64_t>(v));
}

inline std::uint64_t get_u64(std::istream& is, const std::string& path)
{
    std::uint64_t le = 0;
    if (!is.read(reinterpret_cast<char*>(&le), sizeof le))
        throw ChecksumError(path + ": unexpected end of file");
    return to_little(le);
}

inline double get_f64(std::istream& is, const std::string& path)
{
    return std::bit_cast<double>(get_u64(is, path));
}

/// 64-bit FNV-1a.
class Fnv1a {
public:
    void update(const void* data, std::size_t n)
    {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            hash_ ^= p[i];
            hash_ *= 0x100000001b3ULL;
        }
    }
    void update_u64(std::uint64_t v)
    {
        const std::uint64_t le = to_little(v);
        update(&le, sizeof le);
    }
    std::uint64_t digest() const { return hash_; }

private:
    std::uint64_t hash_ = 0xcbf29ce484222325ULL;
};

}  // namespace dfpo::binary
