#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "dla/artifact.hpp"
#include "dla/isa.hpp"

namespace dla {

/// System-memory tensor a stream addresses by handle (index + 1; handle 0 is
/// the shared weight blob).
struct StreamTensor {
    std::string name;
    int64_t bytes = 0;

    bool operator==(const StreamTensor&) const = default;
};

inline constexpr uint32_t kWeightsHandle = 0;

struct RegWrite {
    Reg reg;
    uint32_t value;

    bool operator==(const RegWrite&) const = default;
};

/// Register writes followed by one opcode.
struct CommandUnit {
    std::vector<RegWrite> regs;
    Opcode op = Opcode::Conv;
    SubgraphKind kind = SubgraphKind::Other;  ///< metrics bucket
    std::string node;                         ///< originating node, empty for boundary DMA

    bool operator==(const CommandUnit&) const = default;
};

struct CommandStream {
    IsaVariant variant;
    int subgraph_id = 0;
    SubgraphKind kind = SubgraphKind::Other;
    bool resident = false;  ///< whole subgraph kept in SRAM
    std::vector<StreamTensor> tensors;
    std::vector<CommandUnit> units;

    size_t register_writes() const;
    bool operator==(const CommandStream&) const = default;
};

struct CodegenOptions {
    bool dedup_registers = true;
};

/// Plans SRAM residency and tiling for every op, then lowers the artifact to
/// a register-file command stream for `variant`. Throws InsufficientSram or
/// UnsupportedOpcode naming the offending node.
CommandStream generate_command_stream(const SubgraphArtifact& artifact, const IsaVariant& variant,
                                      const CodegenOptions& options = {});

/// SRAM bytes the subgraph needs to run without leaving SRAM.
int64_t resident_footprint(const SubgraphArtifact& artifact);

nlohmann::json stream_to_json(const CommandStream& stream);
CommandStream stream_from_json(const nlohmann::json& j);
std::string stream_file_name(int subgraph_id);

struct StreamDiagnostic {
    size_t unit = 0;
    std::string message;
};

/// Static checks: every register an opcode reads was written earlier, every
/// SRAM range lies in [0, M), DMA handles and element sizes are valid.
std::vector<StreamDiagnostic> validate_stream(const CommandStream& stream);

}  // namespace dla
