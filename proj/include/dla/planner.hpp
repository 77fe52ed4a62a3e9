#pragma once

#include <span>
#include <string>
#include <vector>

#include "dla/graph.hpp"
#include "dla/isa.hpp"

namespace dla {

/// SRAM bytes an op needs for a tile of `c` output channels:
/// fixed + per_channel * c.
struct Footprint {
    int64_t fixed = 0;
    int64_t per_channel = 0;

    int64_t bytes(int64_t channels) const { return fixed + per_channel * channels; }
};

Footprint op_footprint(const NodeKind& kind, std::span<const TensorDesc> inputs, const TensorDesc& output);

/// Output-channel split of one operation.
struct TilingPlan {
    int32_t channels = 0;      ///< C_out
    int32_t tile_channels = 0; ///< C_t
    std::vector<int32_t> tiles;
    Footprint footprint;
};

/// Largest C_t <= C_out whose footprint fits the variant's SRAM, rounded down
/// to a multiple of P when C_t >= P and the op does not fit in one tile.
/// Throws InsufficientSram naming `node` when even one channel does not fit.
TilingPlan plan_tiles(const NodeKind& kind, std::span<const TensorDesc> inputs, const TensorDesc& output,
                      const IsaVariant& variant, const std::string& node = {});

}  // namespace dla
