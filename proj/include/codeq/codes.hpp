#pragma once

#include <cstdint>
#include <cstddef>
#include <vector>

#include "codeq/common.hpp"

namespace codeq {

inline bool valid_code_bits(std::size_t bits) {
    return bits == 1 || bits == 4 || bits == 8 || bits == 16;
}

// Packed per-vector subindices. Layout is vector-major: vector v owns bytes
// [v*code_size, (v+1)*code_size) and subindex i sits at bit offset i*bits of
// that span, little-endian within bytes. code_size = ceil(m*bits/8).
struct CodeArray {
    std::size_t n = 0;
    std::size_t m = 0;
    std::size_t bits = 0;
    std::vector<std::uint8_t> payload;

    CodeArray() = default;

    CodeArray(std::size_t n_, std::size_t m_, std::size_t bits_)
            : n(n_), m(m_), bits(bits_) {
        CODEQ_REQUIRE(valid_code_bits(bits), "CodeArray: bits must be one of {1,4,8,16}, got ", bits);
        payload.assign(n * code_size(), 0);
    }

    std::size_t code_size() const { return (m * bits + 7) / 8; }

    std::uint32_t get(std::size_t vec, std::size_t sub) const {
        const std::uint8_t* base = payload.data() + vec * code_size();
        std::size_t bit = sub * bits;
        std::uint32_t out = 0;
        for (std::size_t b = 0; b < bits; ++b, ++bit) {
            out |= static_cast<std::uint32_t>((base[bit >> 3] >> (bit & 7)) & 1u) << b;
        }
        return out;
    }

    void set(std::size_t vec, std::size_t sub, std::uint32_t value) {
        std::uint8_t* base = payload.data() + vec * code_size();
        std::size_t bit = sub * bits;
        for (std::size_t b = 0; b < bits; ++b, ++bit) {
            std::uint8_t mask = static_cast<std::uint8_t>(1u << (bit & 7));
            if ((value >> b) & 1u) {
                base[bit >> 3] |= mask;
            } else {
                base[bit >> 3] &= static_cast<std::uint8_t>(~mask);
            }
        }
    }
};

// indices is an n x m table, row-major.
inline CodeArray pack_codes(const std::vector<std::uint32_t>& indices,
                            std::size_t n, std::size_t m, std::size_t bits) {
    CODEQ_REQUIRE(indices.size() == n * m, "pack_codes: expected ", n * m,
                  " indices, got ", indices.size());
    CodeArray out(n, m, bits);
    const std::uint32_t limit = bits >= 32 ? 0u : (1u << bits);
    for (std::size_t v = 0; v < n; ++v) {
        for (std::size_t i = 0; i < m; ++i) {
            std::uint32_t k = indices[v * m + i];
            CODEQ_REQUIRE(k < limit, "pack_codes: index ", k, " >= 2^", bits,
                          " at vector ", v, ", subquantizer ", i);
            out.set(v, i, k);
        }
    }
    return out;
}

inline std::vector<std::uint32_t> unpack_codes(const CodeArray& codes) {
    std::vector<std::uint32_t> out(codes.n * codes.m);
    for (std::size_t v = 0; v < codes.n; ++v) {
        for (std::size_t i = 0; i < codes.m; ++i) {
            out[v * codes.m + i] = codes.get(v, i);
        }
    }
    return out;
}

} // namespace codeq
