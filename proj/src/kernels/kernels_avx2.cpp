// Built with -mavx2; only reached through the runtime dispatcher after a CPU check.
#include "kernels_internal.hpp"

#include <immintrin.h>

#include <algorithm>
#include <cstring>

namespace dla::kernels {
namespace avx2 {
namespace {

inline int32_t hsum_epi32(__m256i v) {
    __m128i sum = _mm_add_epi32(_mm256_castsi256_si128(v), _mm256_extracti128_si256(v, 1));
    sum = _mm_add_epi32(sum, _mm_shuffle_epi32(sum, _MM_SHUFFLE(1, 0, 3, 2)));
    sum = _mm_add_epi32(sum, _mm_shuffle_epi32(sum, _MM_SHUFFLE(2, 3, 0, 1)));
    return _mm_cvtsi128_si32(sum);
}

inline __m256i load_s8_as_s16(const int8_t* p) {
    return _mm256_cvtepi8_epi16(_mm_loadu_si128(reinterpret_cast<const __m128i*>(p)));
}

}  // namespace

int32_t dot_s8(const int8_t* a, const int8_t* b, size_t n) {
    __m256i acc0 = _mm256_setzero_si256();
    __m256i acc1 = _mm256_setzero_si256();
    size_t i = 0;
    for (; i + 32 <= n; i += 32) {
        acc0 = _mm256_add_epi32(acc0, _mm256_madd_epi16(load_s8_as_s16(a + i), load_s8_as_s16(b + i)));
        acc1 = _mm256_add_epi32(acc1, _mm256_madd_epi16(load_s8_as_s16(a + i + 16), load_s8_as_s16(b + i + 16)));
    }
    for (; i + 16 <= n; i += 16) {
        acc0 = _mm256_add_epi32(acc0, _mm256_madd_epi16(load_s8_as_s16(a + i), load_s8_as_s16(b + i)));
    }
    auto acc = static_cast<uint32_t>(hsum_epi32(_mm256_add_epi32(acc0, acc1)));
    for (; i < n; ++i) acc += static_cast<uint32_t>(int32_t{a[i]} * int32_t{b[i]});
    return static_cast<int32_t>(acc);
}

void requantize_s32(const int32_t* src, int8_t* dst, size_t n, int32_t multiplier, int32_t shift, int32_t lo,
                    int32_t hi) {
    const __m256i mult = _mm256_set1_epi64x(multiplier);
    const __m256i half = _mm256_set1_epi64x(shift > 0 ? int64_t{1} << (shift - 1) : 0);
    const __m128i count = _mm_cvtsi32_si128(shift);
    const __m256i cap = _mm256_set1_epi64x(255);
    const __m256i vlo = _mm256_set1_epi32(lo);
    const __m256i vhi = _mm256_set1_epi32(hi);
    const __m256i zero = _mm256_setzero_si256();

    size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256i v = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(src + i));
        const __m256i negative = _mm256_cmpgt_epi32(zero, v);
        // abs(INT32_MIN) stays 0x80000000, which is the right magnitude as u32.
        const __m256i magnitude = _mm256_abs_epi32(v);

        __m256i even = _mm256_mul_epu32(magnitude, mult);
        __m256i odd = _mm256_mul_epu32(_mm256_srli_epi64(magnitude, 32), mult);
        even = _mm256_srl_epi64(_mm256_add_epi64(even, half), count);
        odd = _mm256_srl_epi64(_mm256_add_epi64(odd, half), count);
        even = _mm256_blendv_epi8(even, cap, _mm256_cmpgt_epi64(even, cap));
        odd = _mm256_blendv_epi8(odd, cap, _mm256_cmpgt_epi64(odd, cap));

        __m256i r = _mm256_blend_epi32(even, _mm256_slli_epi64(odd, 32), 0b10101010);
        r = _mm256_sub_epi32(_mm256_xor_si256(r, negative), negative);
        r = _mm256_min_epi32(_mm256_max_epi32(r, vlo), vhi);

        const __m256i words = _mm256_packs_epi32(r, r);
        const __m256i bytes = _mm256_packs_epi16(words, words);
        const int32_t low = _mm_cvtsi128_si32(_mm256_castsi256_si128(bytes));
        const int32_t high = _mm_cvtsi128_si32(_mm256_extracti128_si256(bytes, 1));
        std::memcpy(dst + i, &low, 4);
        std::memcpy(dst + i + 4, &high, 4);
    }
    if (i < n) scalar_table().requantize_s32(src + i, dst + i, n - i, multiplier, shift, lo, hi);
}

template <typename Op>
inline void binary_s8(const int8_t* a, const int8_t* b, int8_t* dst, size_t n, Op op, BinaryS8Fn tail) {
    size_t i = 0;
    for (; i + 32 <= n; i += 32) {
        const __m256i va = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(a + i));
        const __m256i vb = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(b + i));
        _mm256_storeu_si256(reinterpret_cast<__m256i*>(dst + i), op(va, vb));
    }
    if (i < n) tail(a + i, b + i, dst + i, n - i);
}

void add_sat_s8(const int8_t* a, const int8_t* b, int8_t* dst, size_t n) {
    binary_s8(a, b, dst, n, [](__m256i x, __m256i y) { return _mm256_adds_epi8(x, y); }, scalar_table().add_sat_s8);
}

void min_s8(const int8_t* a, const int8_t* b, int8_t* dst, size_t n) {
    binary_s8(a, b, dst, n, [](__m256i x, __m256i y) { return _mm256_min_epi8(x, y); }, scalar_table().min_s8);
}

void max_s8(const int8_t* a, const int8_t* b, int8_t* dst, size_t n) {
    binary_s8(a, b, dst, n, [](__m256i x, __m256i y) { return _mm256_max_epi8(x, y); }, scalar_table().max_s8);
}

void add_wrap_s32(const int32_t* a, const int32_t* b, int32_t* dst, size_t n) {
    size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256i va = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(a + i));
        const __m256i vb = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(b + i));
        _mm256_storeu_si256(reinterpret_cast<__m256i*>(dst + i), _mm256_add_epi32(va, vb));
    }
    if (i < n) scalar_table().add_wrap_s32(a + i, b + i, dst + i, n - i);
}

void abs_sat_s8(const int8_t* src, int8_t* dst, size_t n) {
    const __m256i limit = _mm256_set1_epi8(127);
    size_t i = 0;
    for (; i + 32 <= n; i += 32) {
        const __m256i v = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(src + i));
        // abs(-128) wraps to 0x80; unsigned min folds it onto 127.
        _mm256_storeu_si256(reinterpret_cast<__m256i*>(dst + i), _mm256_min_epu8(_mm256_abs_epi8(v), limit));
    }
    if (i < n) scalar_table().abs_sat_s8(src + i, dst + i, n - i);
}

void relu_s8(const int8_t* src, int8_t* dst, size_t n) {
    const __m256i zero = _mm256_setzero_si256();
    size_t i = 0;
    for (; i + 32 <= n; i += 32) {
        const __m256i v = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(src + i));
        _mm256_storeu_si256(reinterpret_cast<__m256i*>(dst + i), _mm256_max_epi8(v, zero));
    }
    if (i < n) scalar_table().relu_s8(src + i, dst + i, n - i);
}

}  // namespace avx2

const KernelTable& avx2_table_impl() {
    static const KernelTable table{Isa::Avx2,        avx2::dot_s8, avx2::requantize_s32,
                                   avx2::add_sat_s8, avx2::min_s8, avx2::max_s8,
                                   avx2::add_wrap_s32, avx2::abs_sat_s8, avx2::relu_s8};
    return table;
}

}  // namespace dla::kernels
