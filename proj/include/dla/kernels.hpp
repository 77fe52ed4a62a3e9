#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

namespace dla::kernels {

/// Instruction-set level a kernel table was built for.
enum class Isa : uint8_t { Scalar, Avx2 };

const char* to_string(Isa isa);

// All kernels use two's-complement wrapping for i32 accumulation and the
// round-half-away-from-zero rescale shared with the reference interpreter.

/// sum(a[i] * b[i]) accumulated with 32-bit wrap-around.
using DotS8Fn = int32_t (*)(const int8_t* a, const int8_t* b, size_t n);

/// dst[i] = clamp(rshift_round(src[i] * multiplier, shift), lo, hi)
using RequantizeS32Fn = void (*)(const int32_t* src, int8_t* dst, size_t n, int32_t multiplier, int32_t shift,
                                 int32_t lo, int32_t hi);

/// Elementwise ops over i8: saturating add, min, max.
using BinaryS8Fn = void (*)(const int8_t* a, const int8_t* b, int8_t* dst, size_t n);
/// Wrapping i32 add.
using BinaryS32Fn = void (*)(const int32_t* a, const int32_t* b, int32_t* dst, size_t n);
/// Saturating abs (|-128| -> 127) and relu.
using UnaryS8Fn = void (*)(const int8_t* src, int8_t* dst, size_t n);

struct KernelTable {
    Isa isa;
    DotS8Fn dot_s8;
    RequantizeS32Fn requantize_s32;
    BinaryS8Fn add_sat_s8;
    BinaryS8Fn min_s8;
    BinaryS8Fn max_s8;
    BinaryS32Fn add_wrap_s32;
    UnaryS8Fn abs_sat_s8;
    UnaryS8Fn relu_s8;
};

const KernelTable& scalar_table();

/// nullptr when the binary was built without AVX2 kernels.
const KernelTable* avx2_table();

bool cpu_supports(Isa isa);

/// Best table for the running CPU. Setting DLA_KERNELS=scalar in the
/// environment forces the portable kernels.
const KernelTable& active_table();

/// Table for a specific ISA; throws if the CPU or build lacks it.
const KernelTable& table_for(Isa isa);

}  // namespace dla::kernels
