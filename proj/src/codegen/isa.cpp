#include "dla/isa.hpp"

#include <cctype>
#include <charconv>
#include <sstream>

namespace dla {

const char* to_string(ParallelMode mode) {
    return mode == ParallelMode::InputParallel ? "input" : "output";
}

ParallelMode parse_parallel_mode(std::string_view text) {
    if (text == "input" || text == "I") return ParallelMode::InputParallel;
    if (text == "output" || text == "O") return ParallelMode::OutputParallel;
    throw Error(ErrorCode::Schema, "unknown parallel mode '" + std::string(text) + "'");
}

void IsaVariant::validate() const {
    if (pe_count < 1 || pe_count > 4096) {
        throw Error(ErrorCode::Validation, "pe_count must be in [1, 4096], got " + std::to_string(pe_count));
    }
    if (sram_bytes < kKiB) throw Error(ErrorCode::Validation, "sram_bytes must be at least 1 KiB");
    if (sram_bytes > int64_t{0xFFFFFFFF}) throw Error(ErrorCode::Validation, "sram_bytes exceeds 32-bit addressing");
    if (bus_bytes_per_cycle < 1) throw Error(ErrorCode::Validation, "bus_bytes_per_cycle must be positive");
    if (requant_lane_divisor < 1) throw Error(ErrorCode::Validation, "requant_lane_divisor must be positive");
    if (requant_setup_cycles < 0) throw Error(ErrorCode::Validation, "requant_setup_cycles must be non-negative");
}

std::string IsaVariant::label() const {
    return format_byte_size(sram_bytes) + "-" + std::to_string(pe_count) +
           (parallel_mode == ParallelMode::InputParallel ? "I" : "O");
}

nlohmann::json variant_to_json(const IsaVariant& v) {
    return nlohmann::json{{"pe_count", v.pe_count},
                          {"sram_bytes", v.sram_bytes},
                          {"parallel_mode", to_string(v.parallel_mode)},
                          {"dw_mode", to_string(v.dw_mode)},
                          {"bus_bytes_per_cycle", v.bus_bytes_per_cycle},
                          {"requant_lane_divisor", v.requant_lane_divisor},
                          {"requant_setup_cycles", v.requant_setup_cycles}};
}

IsaVariant variant_from_json(const nlohmann::json& j) {
    try {
        IsaVariant v;
        v.pe_count = j.at("pe_count").get<int32_t>();
        v.sram_bytes = j.at("sram_bytes").get<int64_t>();
        v.parallel_mode = parse_parallel_mode(j.at("parallel_mode").get<std::string>());
        v.dw_mode = parse_dw_mode(j.at("dw_mode").get<std::string>());
        v.bus_bytes_per_cycle = j.value("bus_bytes_per_cycle", 16);
        v.requant_lane_divisor = j.value("requant_lane_divisor", 16);
        v.requant_setup_cycles = j.value("requant_setup_cycles", 64);
        v.validate();
        return v;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::Schema, std::string("bad variant record: ") + e.what());
    }
}

int64_t parse_byte_size(std::string_view text) {
    size_t digits = 0;
    while (digits < text.size() && std::isdigit(static_cast<unsigned char>(text[digits]))) ++digits;
    int64_t value = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + digits, value);
    if (digits == 0 || ec != std::errc{}) throw Error(ErrorCode::Schema, "bad byte size '" + std::string(text) + "'");
    const std::string_view suffix = text.substr(digits);
    int64_t unit = 1;
    if (suffix.empty() || suffix == "B") {
        unit = 1;
    } else if (suffix == "KiB" || suffix == "K" || suffix == "k") {
        unit = kKiB;
    } else if (suffix == "MiB" || suffix == "M") {
        unit = kMiB;
    } else if (suffix == "GiB" || suffix == "G") {
        unit = 1024 * kMiB;
    } else {
        throw Error(ErrorCode::Schema, "bad byte size suffix in '" + std::string(text) + "'");
    }
    return value * unit;
}

std::string format_byte_size(int64_t bytes) {
    if (bytes >= kMiB && bytes % kMiB == 0) return std::to_string(bytes / kMiB) + "MiB";
    if (bytes >= kKiB && bytes % kKiB == 0) return std::to_string(bytes / kKiB) + "KiB";
    return std::to_string(bytes) + "B";
}

namespace {

constexpr const char* kMnemonics[kOpcodeCount] = {
    "OP_CONV",  "OP_CONV_RELU", "OP_DEPTH_CONV", "OP_MAT_MUL", "OP_ACT_RELU",  "OP_ACT_LRELU", "OP_POOL", "OP_E_ABS",
    "OP_C_MIN", "OP_C_MAX",     "OP_E_ADD",      "OP_E32_ADD", "OP_DMA_READ", "OP_DMA_WRITE", "OP_REQUANT"};

constexpr const char* kRegisterNames[kRegisterCount] = {
    "IN_ADDR",     "IN_H",        "IN_W",       "IN_C",     "IN_PIXEL_STRIDE", "OUT_ADDR",       "OUT_H",
    "OUT_W",       "OUT_C",       "OUT_PIXEL_STRIDE", "KERNEL_H", "KERNEL_W",   "STRIDE",         "PAD_TOP",
    "PAD_LEFT",    "WEIGHT_ADDR", "BIAS_ADDR",  "REQ_ENABLE", "REQ_MULT",     "REQ_SHIFT",      "CLAMP_LO",
    "CLAMP_HI",    "POOL_MODE",   "SRC0_ADDR",  "SRC1_ADDR", "DST_ADDR",      "COUNT",          "DMA_TENSOR",
    "DMA_SYS_OFFSET", "DMA_SRAM_ADDR", "DMA_ROW_BYTES", "DMA_ROW_STRIDE", "DMA_ROWS", "DMA_ELEM_BYTES"};

uint64_t u(const RegisterFile& regs, Reg reg) { return regs.get(reg); }

uint64_t pixel_span(uint64_t h, uint64_t w, uint64_t pixel_stride, uint64_t channels) {
    if (h == 0 || w == 0 || channels == 0) return 0;
    return (h * w - 1) * pixel_stride + channels;
}

bool conv_requantizes(Opcode op, const RegisterFile& regs) {
    return op == Opcode::ConvRelu || (op != Opcode::MatMul && regs.get(Reg::ReqEnable) != 0);
}

}  // namespace

const char* mnemonic(Opcode op) { return kMnemonics[static_cast<size_t>(op)]; }

Opcode parse_mnemonic(std::string_view text) {
    for (size_t i = 0; i < kOpcodeCount; ++i) {
        if (text == kMnemonics[i]) return static_cast<Opcode>(i);
    }
    throw Error(ErrorCode::Schema, "unknown opcode '" + std::string(text) + "'");
}

bool is_dma(Opcode op) { return op == Opcode::DmaRead || op == Opcode::DmaWrite; }

const char* register_name(Reg reg) { return kRegisterNames[static_cast<size_t>(reg)]; }

std::vector<Reg> registers_read(Opcode op, const RegisterFile& regs) {
    using R = Reg;
    switch (op) {
        case Opcode::Conv:
        case Opcode::DepthConv: {
            std::vector<Reg> read{R::InAddr,  R::InH,     R::InW,    R::InPixelStride, R::OutAddr, R::OutH,
                                  R::OutW,    R::OutC,    R::OutPixelStride, R::KernelH, R::KernelW, R::Stride,
                                  R::PadTop,  R::PadLeft, R::WeightAddr, R::BiasAddr,  R::ReqEnable};
            if (op == Opcode::Conv) read.push_back(R::InC);
            if (regs.written(R::ReqEnable) && regs.get(R::ReqEnable) != 0) {
                read.push_back(R::ReqMult);
                read.push_back(R::ReqShift);
            }
            return read;
        }
        case Opcode::ConvRelu:
            return {R::InAddr,  R::InH,     R::InW,        R::InC,      R::InPixelStride, R::OutAddr,
                    R::OutH,    R::OutW,    R::OutC,       R::OutPixelStride, R::KernelH, R::KernelW,
                    R::Stride,  R::PadTop,  R::PadLeft,    R::WeightAddr, R::BiasAddr, R::ReqMult, R::ReqShift};
        case Opcode::MatMul:
            return {R::InAddr, R::InC, R::OutAddr, R::OutC, R::WeightAddr, R::BiasAddr};
        case Opcode::Pool: {
            std::vector<Reg> read{R::InAddr,  R::InH,  R::InW,  R::InPixelStride, R::OutAddr, R::OutH,  R::OutW,
                                  R::OutC,    R::OutPixelStride, R::KernelH, R::KernelW, R::Stride, R::PoolMode};
            if (regs.written(R::PoolMode) && regs.get(R::PoolMode) == uint32_t(PoolModeValue::Avg)) {
                read.push_back(R::ReqMult);
                read.push_back(R::ReqShift);
            }
            return read;
        }
        case Opcode::ActRelu:
        case Opcode::EAbs:
            return {R::Src0Addr, R::DstAddr, R::Count};
        case Opcode::ActLRelu:
            return {R::Src0Addr, R::DstAddr, R::Count, R::ReqMult, R::ReqShift};
        case Opcode::CMin:
        case Opcode::CMax:
        case Opcode::EAdd:
        case Opcode::E32Add:
            return {R::Src0Addr, R::Src1Addr, R::DstAddr, R::Count};
        case Opcode::Requant:
            return {R::Src0Addr, R::DstAddr, R::Count, R::ReqMult, R::ReqShift, R::ClampLo, R::ClampHi};
        case Opcode::DmaRead:
        case Opcode::DmaWrite:
            return {R::DmaTensor, R::DmaSysOffset, R::DmaSramAddr, R::DmaRowBytes,
                    R::DmaRowStride, R::DmaRows, R::DmaElemBytes};
    }
    return {};
}

std::vector<SramRange> sram_ranges(Opcode op, const RegisterFile& regs) {
    using R = Reg;
    std::vector<SramRange> ranges;
    auto add = [&](uint64_t begin, uint64_t length, int32_t elem, RangeUse use) {
        ranges.push_back(SramRange{begin, begin + length, elem, use});
    };
    switch (op) {
        case Opcode::Conv:
        case Opcode::ConvRelu:
        case Opcode::DepthConv: {
            const bool depthwise = op == Opcode::DepthConv;
            const uint64_t in_c = depthwise ? u(regs, R::OutC) : u(regs, R::InC);
            const uint64_t taps = u(regs, R::KernelH) * u(regs, R::KernelW);
            const uint64_t out_c = u(regs, R::OutC);
            const int32_t out_elem = conv_requantizes(op, regs) ? 1 : 4;
            add(u(regs, R::InAddr), pixel_span(u(regs, R::InH), u(regs, R::InW), u(regs, R::InPixelStride), in_c), 1,
                RangeUse::Read);
            add(u(regs, R::WeightAddr), out_c * taps * (depthwise ? 1 : in_c), 1, RangeUse::Read);
            add(u(regs, R::BiasAddr), 4 * out_c, 4, RangeUse::Read);
            add(u(regs, R::OutAddr),
                out_elem * pixel_span(u(regs, R::OutH), u(regs, R::OutW), u(regs, R::OutPixelStride), out_c), out_elem,
                RangeUse::Write);
            break;
        }
        case Opcode::MatMul:
            add(u(regs, R::InAddr), u(regs, R::InC), 1, RangeUse::Read);
            add(u(regs, R::WeightAddr), u(regs, R::InC) * u(regs, R::OutC), 1, RangeUse::Read);
            add(u(regs, R::BiasAddr), 4 * u(regs, R::OutC), 4, RangeUse::Read);
            add(u(regs, R::OutAddr), 4 * u(regs, R::OutC), 4, RangeUse::Write);
            break;
        case Opcode::Pool:
            add(u(regs, R::InAddr), pixel_span(u(regs, R::InH), u(regs, R::InW), u(regs, R::InPixelStride), u(regs, R::OutC)),
                1, RangeUse::Read);
            add(u(regs, R::OutAddr),
                pixel_span(u(regs, R::OutH), u(regs, R::OutW), u(regs, R::OutPixelStride), u(regs, R::OutC)), 1,
                RangeUse::Write);
            break;
        case Opcode::ActRelu:
        case Opcode::ActLRelu:
        case Opcode::EAbs:
            add(u(regs, R::Src0Addr), u(regs, R::Count), 1, RangeUse::Read);
            add(u(regs, R::DstAddr), u(regs, R::Count), 1, RangeUse::Write);
            break;
        case Opcode::CMin:
        case Opcode::CMax:
        case Opcode::EAdd:
            add(u(regs, R::Src0Addr), u(regs, R::Count), 1, RangeUse::Read);
            add(u(regs, R::Src1Addr), u(regs, R::Count), 1, RangeUse::Read);
            add(u(regs, R::DstAddr), u(regs, R::Count), 1, RangeUse::Write);
            break;
        case Opcode::E32Add:
            add(u(regs, R::Src0Addr), 4 * u(regs, R::Count), 4, RangeUse::Read);
            add(u(regs, R::Src1Addr), 4 * u(regs, R::Count), 4, RangeUse::Read);
            add(u(regs, R::DstAddr), 4 * u(regs, R::Count), 4, RangeUse::Write);
            break;
        case Opcode::Requant:
            add(u(regs, R::Src0Addr), 4 * u(regs, R::Count), 4, RangeUse::Read);
            add(u(regs, R::DstAddr), u(regs, R::Count), 1, RangeUse::Write);
            break;
        case Opcode::DmaRead:
        case Opcode::DmaWrite: {
            const auto elem = static_cast<int32_t>(u(regs, R::DmaElemBytes));
            add(u(regs, R::DmaSramAddr), u(regs, R::DmaRows) * u(regs, R::DmaRowBytes), elem,
                op == Opcode::DmaRead ? RangeUse::Write : RangeUse::Read);
            break;
        }
    }
    return ranges;
}

ShapeParams shape_params(Opcode op, const RegisterFile& regs) {
    using R = Reg;
    ShapeParams p;
    switch (op) {
        case Opcode::Conv:
        case Opcode::ConvRelu:
        case Opcode::DepthConv:
        case Opcode::Pool:
            p.out_h = regs.get(R::OutH);
            p.out_w = regs.get(R::OutW);
            p.kernel_h = regs.get(R::KernelH);
            p.kernel_w = regs.get(R::KernelW);
            p.in_channels = op == Opcode::Conv || op == Opcode::ConvRelu ? regs.get(R::InC) : 1;
            p.out_channels = regs.get(R::OutC);
            break;
        case Opcode::MatMul:
            p.in_channels = regs.get(R::InC);
            p.out_channels = regs.get(R::OutC);
            break;
        case Opcode::DmaRead:
        case Opcode::DmaWrite:
            p.bytes = int64_t(regs.get(R::DmaRows)) * regs.get(R::DmaRowBytes);
            break;
        default:
            p.elements = regs.get(R::Count);
            break;
    }
    return p;
}

UnitCost cycle_cost(Opcode op, const ShapeParams& s, const IsaVariant& variant) {
    const auto pes = static_cast<uint64_t>(variant.pe_count);
    const auto ceil_pe = [&](int64_t n) { return ceil_div<uint64_t>(static_cast<uint64_t>(n), pes); };
    const uint64_t window = static_cast<uint64_t>(s.out_h * s.out_w * s.kernel_h * s.kernel_w);
    UnitCost cost;
    switch (op) {
        case Opcode::Conv:
        case Opcode::ConvRelu:
        case Opcode::MatMul:
            cost.macs = window * static_cast<uint64_t>(s.in_channels * s.out_channels);
            cost.cycles = variant.parallel_mode == ParallelMode::OutputParallel
                              ? window * static_cast<uint64_t>(s.in_channels) * ceil_pe(s.out_channels)
                              : window * static_cast<uint64_t>(s.out_channels) * ceil_pe(s.in_channels);
            break;
        case Opcode::DepthConv:
            cost.macs = window * static_cast<uint64_t>(s.out_channels);
            cost.cycles = window * ceil_pe(s.out_channels);
            break;
        case Opcode::Pool:
            cost.cycles = window * ceil_pe(s.out_channels);
            break;
        case Opcode::Requant:
            cost.cycles = ceil_pe(s.elements * variant.requant_lane_divisor) +
                          static_cast<uint64_t>(variant.requant_setup_cycles);
            break;
        case Opcode::DmaRead:
        case Opcode::DmaWrite:
            cost.dma_cycles = ceil_div<uint64_t>(static_cast<uint64_t>(s.bytes),
                                                 static_cast<uint64_t>(variant.bus_bytes_per_cycle));
            break;
        default:
            cost.cycles = ceil_pe(s.elements);
            break;
    }
    return cost;
}

}  // namespace dla
