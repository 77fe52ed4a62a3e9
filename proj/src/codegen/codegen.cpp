#include "dla/codegen.hpp"

#include <map>

#include "dla/planner.hpp"

namespace dla {

namespace {

SubgraphKind op_kind(const NodeKind& kind) {
    if (std::holds_alternative<Conv2D>(kind) || std::holds_alternative<Dense>(kind)) return SubgraphKind::Conv;
    if (std::holds_alternative<DepthwiseConv2D>(kind)) return SubgraphKind::Depth;
    if (std::holds_alternative<Requantize>(kind)) return SubgraphKind::Requant;
    return SubgraphKind::Other;
}

bool loads_full_input(const NodeKind& kind) {
    return std::holds_alternative<Conv2D>(kind) || std::holds_alternative<Dense>(kind);
}

uint32_t u32(int64_t value) { return static_cast<uint32_t>(value); }

/// SRAM placement of one op invocation.
struct Placement {
    std::array<int64_t, 2> in{0, 0};
    int64_t out = 0;
    int64_t weight = 0;
    int64_t bias = 0;
};

class Lowering {
public:
    Lowering(const SubgraphArtifact& artifact, const IsaVariant& variant, const CodegenOptions& options)
        : artifact_(artifact), variant_(variant), options_(options) {
        stream_.variant = variant;
        stream_.subgraph_id = artifact.id;
        stream_.kind = artifact.kind;
        for (const auto& desc : artifact.tensors) stream_.tensors.push_back({desc.name, desc.bytes()});
    }

    CommandStream run() {
        for (const auto& op : artifact_.ops) {
            if (std::holds_alternative<DepthwiseConv2D>(op.kind) && variant_.dw_mode == DwMode::Fallback) {
                throw Error(ErrorCode::UnsupportedOpcode,
                            "depthwise convolution has no lowering when dw_mode is fallback", op.node);
            }
        }
        if (resident_footprint(artifact_) <= variant_.sram_bytes) {
            stream_.resident = true;
            lower_resident();
        } else {
            lower_streaming();
        }
        return std::move(stream_);
    }

private:
    uint32_t handle(const std::string& name) const {
        for (size_t i = 0; i < stream_.tensors.size(); ++i) {
            if (stream_.tensors[i].name == name) return static_cast<uint32_t>(i + 1);
        }
        throw Error(ErrorCode::Validation, "stream has no tensor '" + name + "'");
    }

    void emit(Opcode op, const std::vector<RegWrite>& wanted, SubgraphKind kind, const std::string& node) {
        CommandUnit unit{{}, op, kind, node};
        for (const auto& w : wanted) {
            if (options_.dedup_registers && shadow_.written(w.reg) && shadow_.get(w.reg) == w.value) continue;
            shadow_.write(w.reg, w.value);
            unit.regs.push_back(w);
        }
        stream_.units.push_back(std::move(unit));
    }

    void dma(Opcode op, uint32_t tensor, int64_t sys_offset, int64_t sram, int64_t row_bytes, int64_t row_stride,
             int64_t rows, int32_t elem_bytes, SubgraphKind kind, const std::string& node) {
        emit(op,
             {{Reg::DmaTensor, tensor},
              {Reg::DmaSysOffset, u32(sys_offset)},
              {Reg::DmaSramAddr, u32(sram)},
              {Reg::DmaRowBytes, u32(row_bytes)},
              {Reg::DmaRowStride, u32(row_stride)},
              {Reg::DmaRows, u32(rows)},
              {Reg::DmaElemBytes, u32(elem_bytes)}},
             kind, node);
    }

    void dma_full(Opcode op, const std::string& name, int64_t sram, SubgraphKind kind, const std::string& node) {
        const TensorDesc& desc = artifact_.tensor(name);
        dma(op, handle(name), 0, sram, desc.bytes(), desc.bytes(), 1, element_bytes(desc.dtype), kind, node);
    }

    /// DMA of channels [c0, c0 + ct) of every pixel, packed in SRAM.
    void dma_slice(Opcode op, const std::string& name, int64_t sram, int32_t c0, int32_t ct, SubgraphKind kind,
                   const std::string& node) {
        const TensorDesc& desc = artifact_.tensor(name);
        const int64_t eb = element_bytes(desc.dtype);
        dma(op, handle(name), c0 * eb, sram, ct * eb, desc.shape.c() * eb,
            int64_t{desc.shape.h()} * desc.shape.w(), static_cast<int32_t>(eb), kind, node);
    }

    /// Kernel and bias rows for output channels [c0, c0 + ct).
    void dma_weights(const ArtifactOp& op, const Placement& at, int32_t c0, int32_t ct) {
        const int64_t channels = artifact_.tensor(op.output).shape.c();
        const int64_t per_channel = (op.weight.length - 4 * channels) / channels;
        const SubgraphKind kind = op_kind(op.kind);
        dma(Opcode::DmaRead, kWeightsHandle, op.weight.offset + c0 * per_channel, at.weight, ct * per_channel,
            ct * per_channel, 1, 1, kind, op.node);
        dma(Opcode::DmaRead, kWeightsHandle, op.weight.offset + channels * per_channel + 4 * c0, at.bias, 4 * ct,
            4 * ct, 1, 4, kind, op.node);
    }

    static std::vector<RegWrite> requant_regs(const std::optional<Requant>& rq) {
        if (!rq) return {{Reg::ReqEnable, 0}};
        return {{Reg::ReqEnable, 1}, {Reg::ReqMult, u32(rq->multiplier)}, {Reg::ReqShift, u32(rq->shift)}};
    }

    /// Compute unit(s) for output channels of one tile; `ct` channels are
    /// packed per pixel at the output (and at the input for channel-wise ops).
    void emit_compute(const ArtifactOp& op, const Placement& at, int32_t ct) {
        const TensorDesc& in = artifact_.tensor(op.inputs.front());
        const TensorDesc& out = artifact_.tensor(op.output);
        const SubgraphKind kind = op_kind(op.kind);
        const uint32_t in_h = u32(in.shape.h());
        const uint32_t in_w = u32(in.shape.w());
        const uint32_t out_h = u32(out.shape.h());
        const uint32_t out_w = u32(out.shape.w());
        const uint32_t count = u32(int64_t{in.shape.h()} * in.shape.w() * ct);
        const int64_t out_eb = element_bytes(out.dtype);

        auto spatial = [&](int32_t kh, int32_t kw, int32_t stride, Padding pad) {
            const PadAmounts p = resolve_padding(pad, in.shape.h(), in.shape.w(), kh, kw, stride);
            return std::vector<RegWrite>{{Reg::InH, in_h},         {Reg::InW, in_w},
                                         {Reg::OutH, out_h},       {Reg::OutW, out_w},
                                         {Reg::KernelH, u32(kh)},  {Reg::KernelW, u32(kw)},
                                         {Reg::Stride, u32(stride)}, {Reg::PadTop, u32(p.top)},
                                         {Reg::PadLeft, u32(p.left)}};
        };
        auto append = [](std::vector<RegWrite> a, const std::vector<RegWrite>& b) {
            a.insert(a.end(), b.begin(), b.end());
            return a;
        };
        auto pointwise = [&](Opcode opcode, std::vector<RegWrite> extra) {
            std::vector<RegWrite> regs{{Reg::Src0Addr, u32(at.in[0])}, {Reg::DstAddr, u32(at.out)}, {Reg::Count, count}};
            if (op.inputs.size() == 2) regs.push_back({Reg::Src1Addr, u32(at.in[1])});
            emit(opcode, append(std::move(regs), extra), kind, op.node);
        };

        std::visit(
            [&](const auto& k) {
                using T = std::decay_t<decltype(k)>;
                if constexpr (std::is_same_v<T, Conv2D>) {
                    std::vector<RegWrite> regs{{Reg::InAddr, u32(at.in[0])},      {Reg::InC, u32(in.shape.c())},
                                               {Reg::InPixelStride, u32(in.shape.c())}, {Reg::OutAddr, u32(at.out)},
                                               {Reg::OutC, u32(ct)},             {Reg::OutPixelStride, u32(ct)},
                                               {Reg::WeightAddr, u32(at.weight)}, {Reg::BiasAddr, u32(at.bias)}};
                    regs = append(std::move(regs), spatial(k.kernel_h, k.kernel_w, k.stride, k.pad));
                    if (k.fuse_relu) {
                        regs = append(std::move(regs), {{Reg::ReqMult, u32(k.requant->multiplier)},
                                                        {Reg::ReqShift, u32(k.requant->shift)}});
                        emit(Opcode::ConvRelu, regs, kind, op.node);
                    } else {
                        emit(Opcode::Conv, append(std::move(regs), requant_regs(k.requant)), kind, op.node);
                    }
                } else if constexpr (std::is_same_v<T, Dense>) {
                    const uint32_t depth = u32(in.shape.elements());
                    if (k.output_dtype == DType::I32) {
                        emit(Opcode::MatMul,
                             {{Reg::InAddr, u32(at.in[0])}, {Reg::InC, depth}, {Reg::OutAddr, u32(at.out)},
                              {Reg::OutC, u32(ct)}, {Reg::WeightAddr, u32(at.weight)}, {Reg::BiasAddr, u32(at.bias)}},
                             kind, op.node);
                    } else {
                        std::vector<RegWrite> regs{{Reg::InAddr, u32(at.in[0])}, {Reg::InH, 1}, {Reg::InW, 1},
                                                   {Reg::InC, depth},            {Reg::InPixelStride, depth},
                                                   {Reg::OutAddr, u32(at.out)},  {Reg::OutH, 1}, {Reg::OutW, 1},
                                                   {Reg::OutC, u32(ct)},         {Reg::OutPixelStride, u32(ct)},
                                                   {Reg::KernelH, 1},            {Reg::KernelW, 1},
                                                   {Reg::Stride, 1},             {Reg::PadTop, 0},
                                                   {Reg::PadLeft, 0},            {Reg::WeightAddr, u32(at.weight)},
                                                   {Reg::BiasAddr, u32(at.bias)}};
                        emit(Opcode::Conv, append(std::move(regs), requant_regs(k.requant)), kind, op.node);
                    }
                } else if constexpr (std::is_same_v<T, DepthwiseConv2D>) {
                    const auto shape = spatial(k.kernel_h, k.kernel_w, k.stride, k.pad);
                    if (variant_.dw_mode == DwMode::Native) {
                        std::vector<RegWrite> regs{{Reg::InAddr, u32(at.in[0])},  {Reg::InPixelStride, u32(ct)},
                                                   {Reg::OutAddr, u32(at.out)},   {Reg::OutC, u32(ct)},
                                                   {Reg::OutPixelStride, u32(ct)}, {Reg::WeightAddr, u32(at.weight)},
                                                   {Reg::BiasAddr, u32(at.bias)}};
                        regs = append(append(std::move(regs), shape), requant_regs(k.requant));
                        emit(Opcode::DepthConv, regs, kind, op.node);
                        return;
                    }
                    const int64_t taps = int64_t{k.kernel_h} * k.kernel_w;
                    for (int32_t c = 0; c < ct; ++c) {
                        std::vector<RegWrite> regs{{Reg::InAddr, u32(at.in[0] + c)},
                                                   {Reg::InC, 1},
                                                   {Reg::InPixelStride, u32(ct)},
                                                   {Reg::OutAddr, u32(at.out + c * out_eb)},
                                                   {Reg::OutC, 1},
                                                   {Reg::OutPixelStride, u32(ct)},
                                                   {Reg::WeightAddr, u32(at.weight + c * taps)},
                                                   {Reg::BiasAddr, u32(at.bias + 4 * c)}};
                        regs = append(append(std::move(regs), shape), requant_regs(k.requant));
                        emit(Opcode::Conv, regs, kind, op.node);
                    }
                } else if constexpr (std::is_same_v<T, MaxPool> || std::is_same_v<T, AvgPool>) {
                    std::vector<RegWrite> regs{{Reg::InAddr, u32(at.in[0])},   {Reg::InH, in_h},
                                               {Reg::InW, in_w},               {Reg::InPixelStride, u32(ct)},
                                               {Reg::OutAddr, u32(at.out)},    {Reg::OutH, out_h},
                                               {Reg::OutW, out_w},             {Reg::OutC, u32(ct)},
                                               {Reg::OutPixelStride, u32(ct)}, {Reg::KernelH, u32(k.k)},
                                               {Reg::KernelW, u32(k.k)},       {Reg::Stride, u32(k.stride)}};
                    if constexpr (std::is_same_v<T, AvgPool>) {
                        regs = append(std::move(regs), {{Reg::PoolMode, u32(int64_t(PoolModeValue::Avg))},
                                                        {Reg::ReqMult, u32(k.divisor.multiplier)},
                                                        {Reg::ReqShift, u32(k.divisor.shift)}});
                    } else {
                        regs.push_back({Reg::PoolMode, u32(int64_t(PoolModeValue::Max))});
                    }
                    emit(Opcode::Pool, regs, kind, op.node);
                } else if constexpr (std::is_same_v<T, Requantize>) {
                    pointwise(Opcode::Requant, {{Reg::ReqMult, u32(k.rq.multiplier)},
                                                {Reg::ReqShift, u32(k.rq.shift)},
                                                {Reg::ClampLo, u32(k.clamp_lo)},
                                                {Reg::ClampHi, u32(k.clamp_hi)}});
                } else if constexpr (std::is_same_v<T, Relu>) {
                    pointwise(Opcode::ActRelu, {});
                } else if constexpr (std::is_same_v<T, LeakyRelu>) {
                    pointwise(Opcode::ActLRelu,
                              {{Reg::ReqMult, u32(k.negative.multiplier)}, {Reg::ReqShift, u32(k.negative.shift)}});
                } else if constexpr (std::is_same_v<T, EwAdd>) {
                    pointwise(Opcode::EAdd, {});
                } else if constexpr (std::is_same_v<T, EwAdd32>) {
                    pointwise(Opcode::E32Add, {});
                } else if constexpr (std::is_same_v<T, EwAbs>) {
                    pointwise(Opcode::EAbs, {});
                } else if constexpr (std::is_same_v<T, EwMin>) {
                    pointwise(Opcode::CMin, {});
                } else if constexpr (std::is_same_v<T, EwMax>) {
                    pointwise(Opcode::CMax, {});
                }
            },
            op.kind);
    }

    void lower_resident() {
        std::map<std::string, int64_t> address;
        int64_t next = 0;
        for (const auto& desc : artifact_.tensors) {
            address[desc.name] = next;
            next += desc.bytes();
        }
        for (const auto& name : artifact_.inputs) {
            dma_full(Opcode::DmaRead, name, address.at(name), artifact_.kind, {});
        }
        for (const auto& op : artifact_.ops) {
            Placement at;
            for (size_t i = 0; i < op.inputs.size(); ++i) at.in[i] = address.at(op.inputs[i]);
            at.out = address.at(op.output);
            const int32_t channels = artifact_.tensor(op.output).shape.c();
            if (has_weights(op.kind)) {
                at.weight = next;
                at.bias = next + op.weight.length - 4 * int64_t{channels};
                next += op.weight.length;
                dma_weights(op, at, 0, channels);
            }
            emit_compute(op, at, channels);
        }
        for (const auto& name : artifact_.outputs) {
            dma_full(Opcode::DmaWrite, name, address.at(name), artifact_.kind, {});
        }
    }

    void lower_streaming() {
        for (const auto& op : artifact_.ops) {
            std::vector<TensorDesc> inputs;
            for (const auto& name : op.inputs) inputs.push_back(artifact_.tensor(name));
            const TensorDesc& out = artifact_.tensor(op.output);
            const TilingPlan plan = plan_tiles(op.kind, inputs, out, variant_, op.node);
            const SubgraphKind kind = op_kind(op.kind);
            const int64_t out_eb = element_bytes(out.dtype);
            const int64_t out_pixels = int64_t{out.shape.h()} * out.shape.w();
            const int64_t channels = out.shape.c();
            const int64_t per_channel_weights = has_weights(op.kind) ? (op.weight.length - 4 * channels) / channels : 0;

            int64_t base = 0;
            if (loads_full_input(op.kind)) {
                dma_full(Opcode::DmaRead, op.inputs.front(), 0, kind, op.node);
                base = inputs.front().bytes();
            }
            int32_t c0 = 0;
            for (int32_t ct : plan.tiles) {
                Placement at;
                int64_t next = base;
                if (!loads_full_input(op.kind)) {
                    for (size_t i = 0; i < op.inputs.size(); ++i) {
                        at.in[i] = next;
                        dma_slice(Opcode::DmaRead, op.inputs[i], next, c0, ct, kind, op.node);
                        next += int64_t{inputs[i].shape.h()} * inputs[i].shape.w() * ct *
                                element_bytes(inputs[i].dtype);
                    }
                }
                if (has_weights(op.kind)) {
                    at.weight = next;
                    at.bias = next + ct * per_channel_weights;
                    next = at.bias + 4 * int64_t{ct};
                    dma_weights(op, at, c0, ct);
                }
                at.out = next;
                emit_compute(op, at, ct);
                dma(Opcode::DmaWrite, handle(op.output), c0 * out_eb, at.out, ct * out_eb, channels * out_eb,
                    out_pixels, static_cast<int32_t>(out_eb), kind, op.node);
                c0 += ct;
            }
        }
    }

    const SubgraphArtifact& artifact_;
    const IsaVariant& variant_;
    CodegenOptions options_;
    CommandStream stream_;
    RegisterFile shadow_;
};

}  // namespace

size_t CommandStream::register_writes() const {
    size_t total = 0;
    for (const auto& unit : units) total += unit.regs.size();
    return total;
}

int64_t resident_footprint(const SubgraphArtifact& artifact) {
    int64_t total = 0;
    for (const auto& desc : artifact.tensors) total += desc.bytes();
    for (const auto& op : artifact.ops) total += op.weight.length;
    return total;
}

CommandStream generate_command_stream(const SubgraphArtifact& artifact, const IsaVariant& variant,
                                      const CodegenOptions& options) {
    variant.validate();
    return Lowering(artifact, variant, options).run();
}

nlohmann::json stream_to_json(const CommandStream& stream) {
    using nlohmann::json;
    json tensors = json::array();
    for (const auto& t : stream.tensors) tensors.push_back(json{{"name", t.name}, {"bytes", t.bytes}});
    json units = json::array();
    for (const auto& unit : stream.units) {
        json regs = json::array();
        for (const auto& w : unit.regs) regs.push_back(json::array({static_cast<int>(w.reg), w.value}));
        units.push_back(json{{"regs", regs}, {"op", mnemonic(unit.op)}, {"kind", to_string(unit.kind)},
                             {"node", unit.node}});
    }
    return json{{"variant", variant_to_json(stream.variant)},
                {"subgraph", stream.subgraph_id},
                {"kind", to_string(stream.kind)},
                {"resident", stream.resident},
                {"tensors", tensors},
                {"units", units}};
}

CommandStream stream_from_json(const nlohmann::json& j) {
    try {
        CommandStream stream;
        stream.variant = variant_from_json(j.at("variant"));
        stream.subgraph_id = j.at("subgraph").get<int>();
        stream.kind = parse_subgraph_kind(j.at("kind").get<std::string>());
        stream.resident = j.value("resident", false);
        for (const auto& t : j.at("tensors")) {
            stream.tensors.push_back({t.at("name").get<std::string>(), t.at("bytes").get<int64_t>()});
        }
        for (const auto& u : j.at("units")) {
            CommandUnit unit;
            unit.op = parse_mnemonic(u.at("op").get<std::string>());
            unit.kind = parse_subgraph_kind(u.value("kind", std::string("OTHER")));
            unit.node = u.value("node", std::string());
            for (const auto& w : u.at("regs")) {
                const int id = w.at(0).get<int>();
                if (id < 0 || id >= static_cast<int>(kRegisterCount)) {
                    throw Error(ErrorCode::Schema, "unknown register id " + std::to_string(id));
                }
                unit.regs.push_back({static_cast<Reg>(id), w.at(1).get<uint32_t>()});
            }
            stream.units.push_back(std::move(unit));
        }
        return stream;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::Schema, std::string("bad command stream: ") + e.what());
    }
}

std::string stream_file_name(int subgraph_id) { return "stream_" + std::to_string(subgraph_id) + ".json"; }

std::vector<StreamDiagnostic> validate_stream(const CommandStream& stream) {
    std::vector<StreamDiagnostic> diags;
    RegisterFile regs;
    const auto limit = static_cast<uint64_t>(stream.variant.sram_bytes);
    for (size_t i = 0; i < stream.units.size(); ++i) {
        const CommandUnit& unit = stream.units[i];
        for (const auto& w : unit.regs) regs.write(w.reg, w.value);
        bool complete = true;
        for (Reg reg : registers_read(unit.op, regs)) {
            if (!regs.written(reg)) {
                diags.push_back({i, std::string(mnemonic(unit.op)) + " reads " + register_name(reg) +
                                        " before any write"});
                complete = false;
            }
        }
        if (!complete) continue;
        for (const auto& range : sram_ranges(unit.op, regs)) {
            if (range.end > limit || range.begin > range.end) {
                diags.push_back({i, std::string(mnemonic(unit.op)) + " touches SRAM [" + std::to_string(range.begin) +
                                        ", " + std::to_string(range.end) + ") outside [0, " + std::to_string(limit) +
                                        ")"});
            }
        }
        if (is_dma(unit.op)) {
            const uint32_t handle = regs.get(Reg::DmaTensor);
            if (handle > stream.tensors.size()) {
                diags.push_back({i, "DMA names unknown tensor handle " + std::to_string(handle)});
            }
            const uint32_t elem = regs.get(Reg::DmaElemBytes);
            if (elem != 1 && elem != 4) diags.push_back({i, "DMA element size must be 1 or 4"});
        }
    }
    return diags;
}

}  // namespace dla
