#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace dla {

enum class ErrorCode {
    Schema,
    Validation,
    Shape,
    WeightOverrun,
    Dtype,
    InsufficientSram,
    UnsupportedOpcode,
    Device,
    Io,
};

const char* to_string(ErrorCode code);

/// Error raised by every stage of the toolchain. `node()` names the graph node
/// (or stream unit) the failure is attributed to, when there is one.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message, std::string node = {});

    ErrorCode code() const noexcept { return code_; }
    const std::string& node() const noexcept { return node_; }

private:
    ErrorCode code_;
    std::string node_;
};

/// Integer multiplier/shift pair used for every fixed-point rescale:
/// value * multiplier / 2^shift, rounded to nearest with ties away from zero.
struct Requant {
    int32_t multiplier = 1;
    int32_t shift = 0;

    bool operator==(const Requant&) const = default;
};

inline constexpr int32_t kMaxShift = 62;

/// Picks (multiplier, shift) approximating a positive real ratio with a
/// multiplier in [2^30, 2^31).
Requant quantize_multiplier(double ratio);

template <typename T>
constexpr T ceil_div(T a, T b) {
    return (a + b - 1) / b;
}

}  // namespace dla
