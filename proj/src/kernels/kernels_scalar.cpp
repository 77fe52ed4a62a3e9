#include "kernels_internal.hpp"

#include <algorithm>

namespace dla::kernels {
namespace scalar {

int32_t dot_s8(const int8_t* a, const int8_t* b, size_t n) {
    uint32_t acc = 0;
    for (size_t i = 0; i < n; ++i) acc += static_cast<uint32_t>(int32_t{a[i]} * int32_t{b[i]});
    return static_cast<int32_t>(acc);
}

void requantize_s32(const int32_t* src, int8_t* dst, size_t n, int32_t multiplier, int32_t shift, int32_t lo,
                    int32_t hi) {
    const uint64_t half = shift > 0 ? uint64_t{1} << (shift - 1) : 0;
    for (size_t i = 0; i < n; ++i) {
        // |acc| * multiplier < 2^62, so the magnitude path never overflows.
        const int64_t product = int64_t{src[i]} * multiplier;
        const uint64_t magnitude = product < 0 ? uint64_t(-product) : uint64_t(product);
        const int64_t rounded = static_cast<int64_t>((magnitude + half) >> shift);
        const int64_t value = product < 0 ? -rounded : rounded;
        dst[i] = static_cast<int8_t>(std::clamp<int64_t>(value, lo, hi));
    }
}

void add_sat_s8(const int8_t* a, const int8_t* b, int8_t* dst, size_t n) {
    for (size_t i = 0; i < n; ++i) dst[i] = static_cast<int8_t>(std::clamp(int32_t{a[i]} + b[i], -128, 127));
}

void min_s8(const int8_t* a, const int8_t* b, int8_t* dst, size_t n) {
    for (size_t i = 0; i < n; ++i) dst[i] = std::min(a[i], b[i]);
}

void max_s8(const int8_t* a, const int8_t* b, int8_t* dst, size_t n) {
    for (size_t i = 0; i < n; ++i) dst[i] = std::max(a[i], b[i]);
}

void add_wrap_s32(const int32_t* a, const int32_t* b, int32_t* dst, size_t n) {
    for (size_t i = 0; i < n; ++i) {
        dst[i] = static_cast<int32_t>(static_cast<uint32_t>(a[i]) + static_cast<uint32_t>(b[i]));
    }
}

void abs_sat_s8(const int8_t* src, int8_t* dst, size_t n) {
    for (size_t i = 0; i < n; ++i) {
        const int32_t v = src[i];
        dst[i] = static_cast<int8_t>(std::min(v < 0 ? -v : v, 127));
    }
}

void relu_s8(const int8_t* src, int8_t* dst, size_t n) {
    for (size_t i = 0; i < n; ++i) dst[i] = std::max<int8_t>(src[i], 0);
}

}  // namespace scalar

const KernelTable& scalar_table() {
    static const KernelTable table{Isa::Scalar,        scalar::dot_s8, scalar::requantize_s32,
                                   scalar::add_sat_s8, scalar::min_s8, scalar::max_s8,
                                   scalar::add_wrap_s32, scalar::abs_sat_s8, scalar::relu_s8};
    return table;
}

}  // namespace dla::kernels
