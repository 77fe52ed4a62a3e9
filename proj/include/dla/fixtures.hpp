#pragma once

#include <cstdint>

#include "dla/graph.hpp"

namespace dla {

inline constexpr uint32_t kFixtureSeed = 0x5eed1234u;

/// Small quantized MNIST classifier: two conv/requant/relu/maxpool stages and
/// a dense layer. Every requantize is a barrier, no final activation.
Graph build_mnist_fixture(uint32_t seed = kFixtureSeed);

/// MobileNetV1 (width 1.0, 224x224x3 input) with batch norm folded into the
/// conv weights. Every conv/depthwise/dense emits i32 and is followed by a
/// barrier requantize, clamped at zero where the network has ReLU. The graph
/// does not depend on how depthwise layers will later be mapped.
Graph build_mobilenet_v1_fixture(uint32_t seed = kFixtureSeed);

}  // namespace dla
