#include "dla/planner.hpp"

#include <algorithm>

namespace dla {

Footprint op_footprint(const NodeKind& kind, std::span<const TensorDesc> inputs, const TensorDesc& output) {
    const TensorDesc& in = inputs.front();
    const int64_t in_pixels = int64_t{in.shape.h()} * in.shape.w();
    const int64_t out_pixels = int64_t{output.shape.h()} * output.shape.w();
    const int64_t out_eb = element_bytes(output.dtype);
    return std::visit(
        [&](const auto& op) -> Footprint {
            using T = std::decay_t<decltype(op)>;
            if constexpr (std::is_same_v<T, Conv2D>) {
                const int64_t taps = int64_t{op.kernel_h} * op.kernel_w;
                return {in_pixels * in.shape.c(), taps * in.shape.c() + 4 + out_eb * out_pixels};
            } else if constexpr (std::is_same_v<T, Dense>) {
                const int64_t k = in.shape.elements();
                return {k, k + 4 + out_eb};
            } else if constexpr (std::is_same_v<T, DepthwiseConv2D>) {
                const int64_t taps = int64_t{op.kernel_h} * op.kernel_w;
                return {0, in_pixels + taps + 4 + out_eb * out_pixels};
            } else if constexpr (std::is_same_v<T, MaxPool> || std::is_same_v<T, AvgPool>) {
                return {0, in_pixels + out_pixels};
            } else {
                int64_t per_pixel = out_eb;
                for (const auto& operand : inputs) per_pixel += element_bytes(operand.dtype);
                return {0, in_pixels * per_pixel};
            }
        },
        kind);
}

TilingPlan plan_tiles(const NodeKind& kind, std::span<const TensorDesc> inputs, const TensorDesc& output,
                      const IsaVariant& variant, const std::string& node) {
    TilingPlan plan;
    plan.channels = output.shape.c();
    plan.footprint = op_footprint(kind, inputs, output);
    const Footprint& fp = plan.footprint;
    const int64_t budget = variant.sram_bytes - fp.fixed;
    const int64_t fit = budget < 0 ? 0 : budget / fp.per_channel;
    if (fit < 1) {
        throw Error(ErrorCode::InsufficientSram,
                    std::string(kind_name(kind)) + " needs " + std::to_string(fp.bytes(1)) +
                        " bytes of SRAM for a single output channel, have " + std::to_string(variant.sram_bytes),
                    node);
    }
    int64_t ct = std::min<int64_t>(fit, plan.channels);
    if (ct < plan.channels && ct >= variant.pe_count) ct -= ct % variant.pe_count;
    plan.tile_channels = static_cast<int32_t>(ct);
    for (int32_t c0 = 0; c0 < plan.channels; c0 += plan.tile_channels) {
        plan.tiles.push_back(std::min(plan.tile_channels, plan.channels - c0));
    }
    return plan;
}

}  // namespace dla
