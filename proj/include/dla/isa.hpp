#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dla/partition.hpp"

namespace dla {

enum class ParallelMode : uint8_t { InputParallel, OutputParallel };

const char* to_string(ParallelMode mode);
ParallelMode parse_parallel_mode(std::string_view text);

inline constexpr int64_t kKiB = 1024;
inline constexpr int64_t kMiB = 1024 * kKiB;

/// One concrete accelerator configuration targeted by load-time codegen.
struct IsaVariant {
    int32_t pe_count = 128;
    int64_t sram_bytes = 256 * kMiB;
    ParallelMode parallel_mode = ParallelMode::OutputParallel;
    DwMode dw_mode = DwMode::Native;
    int32_t bus_bytes_per_cycle = 16;
    int32_t requant_lane_divisor = 16;
    int32_t requant_setup_cycles = 64;

    /// Throws Validation when P is outside [1, 4096], M < 1 KiB or M does
    /// not fit a 32-bit address register.
    void validate() const;
    std::string label() const;

    bool operator==(const IsaVariant&) const = default;
};

nlohmann::json variant_to_json(const IsaVariant& variant);
IsaVariant variant_from_json(const nlohmann::json& j);

/// Accepts plain byte counts or KiB/MiB/GiB suffixed values ("512KiB").
int64_t parse_byte_size(std::string_view text);
std::string format_byte_size(int64_t bytes);

enum class Opcode : uint8_t {
    Conv,
    ConvRelu,
    DepthConv,
    MatMul,
    ActRelu,
    ActLRelu,
    Pool,
    EAbs,
    CMin,
    CMax,
    EAdd,
    E32Add,
    DmaRead,
    DmaWrite,
    Requant,
};

inline constexpr size_t kOpcodeCount = 15;

const char* mnemonic(Opcode op);
Opcode parse_mnemonic(std::string_view text);
bool is_dma(Opcode op);

/// Register ids are part of the stream format and never renumbered.
enum class Reg : uint16_t {
    InAddr = 0x00,
    InH = 0x01,
    InW = 0x02,
    InC = 0x03,
    InPixelStride = 0x04,
    OutAddr = 0x05,
    OutH = 0x06,
    OutW = 0x07,
    OutC = 0x08,
    OutPixelStride = 0x09,
    KernelH = 0x0A,
    KernelW = 0x0B,
    Stride = 0x0C,
    PadTop = 0x0D,
    PadLeft = 0x0E,
    WeightAddr = 0x0F,
    BiasAddr = 0x10,
    ReqEnable = 0x11,
    ReqMult = 0x12,
    ReqShift = 0x13,
    ClampLo = 0x14,
    ClampHi = 0x15,
    PoolMode = 0x16,
    Src0Addr = 0x17,
    Src1Addr = 0x18,
    DstAddr = 0x19,
    Count = 0x1A,
    DmaTensor = 0x1B,
    DmaSysOffset = 0x1C,
    DmaSramAddr = 0x1D,
    DmaRowBytes = 0x1E,
    DmaRowStride = 0x1F,
    DmaRows = 0x20,
    DmaElemBytes = 0x21,
};

inline constexpr size_t kRegisterCount = 0x22;
const char* register_name(Reg reg);

enum class PoolModeValue : uint32_t { Max = 0, Avg = 1 };

/// Accelerator-visible configuration registers plus a written-once mask.
class RegisterFile {
public:
    void write(Reg reg, uint32_t value) {
        values_[index(reg)] = value;
        written_[index(reg)] = true;
    }
    bool written(Reg reg) const { return written_[index(reg)]; }
    uint32_t get(Reg reg) const { return values_[index(reg)]; }
    int32_t get_signed(Reg reg) const { return static_cast<int32_t>(values_[index(reg)]); }

private:
    static size_t index(Reg reg) { return static_cast<size_t>(reg); }

    std::array<uint32_t, kRegisterCount> values_{};
    std::array<bool, kRegisterCount> written_{};
};

/// Registers an opcode reads, given the current register contents (the set
/// depends on mode registers such as ReqEnable and PoolMode).
std::vector<Reg> registers_read(Opcode op, const RegisterFile& regs);

enum class RangeUse : uint8_t { Read, Write };

/// A contiguous SRAM byte range an instruction touches, with the element
/// type it expects there (1 = i8, 4 = i32).
struct SramRange {
    uint64_t begin = 0;
    uint64_t end = 0;
    int32_t elem_bytes = 1;
    RangeUse use = RangeUse::Read;
};

std::vector<SramRange> sram_ranges(Opcode op, const RegisterFile& regs);

/// Tile-level parameters the cost model consumes.
struct ShapeParams {
    int64_t out_h = 1;
    int64_t out_w = 1;
    int64_t kernel_h = 1;
    int64_t kernel_w = 1;
    int64_t in_channels = 1;
    int64_t out_channels = 1;
    int64_t elements = 0;  ///< elementwise/requant element count
    int64_t bytes = 0;     ///< DMA transfer size
};

struct UnitCost {
    uint64_t cycles = 0;      ///< compute cycles
    uint64_t macs = 0;
    uint64_t dma_cycles = 0;  ///< bus cycles, reported separately
};

UnitCost cycle_cost(Opcode op, const ShapeParams& shape, const IsaVariant& variant);
ShapeParams shape_params(Opcode op, const RegisterFile& regs);

}  // namespace dla
