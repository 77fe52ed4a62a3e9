#pragma once

#include <span>
#include <vector>

#include "dla/artifact.hpp"
#include "dla/interp.hpp"
#include "dla/sim.hpp"

namespace dla {

/// Partition plus per-subgraph artifacts for one graph.
struct CompiledModel {
    DwMode dw_mode = DwMode::Native;
    PartitionedGraph partition;
    std::vector<SubgraphArtifact> artifacts;  ///< parallel to partition.subgraphs
};

CompiledModel compile_model(const Graph& graph, DwMode dw_mode, bool barrier_mode);

/// Load-time code generation for every subgraph of a compiled model.
std::vector<CommandStream> generate_streams(std::span<const SubgraphArtifact> artifacts, const IsaVariant& variant,
                                            const CodegenOptions& options = {});

/// Little-endian system-memory image of a tensor and back.
std::vector<uint8_t> encode_tensor(const TensorValue& value);
TensorValue decode_tensor(const TensorDesc& desc, std::span<const uint8_t> bytes);

struct RunOptions {
    bool functional = true;
    CodegenOptions codegen;
    const kernels::KernelTable* kernels = nullptr;
};

struct RunResult {
    std::vector<TensorValue> outputs;  ///< empty in cost-only runs
    Metrics metrics;
};

/// Executes the schedule: subgraphs on the simulator, CPU nodes on the
/// reference interpreter, all tensors exchanged through system memory.
RunResult run_end_to_end(const Graph& graph, const PartitionedGraph& pg, std::span<const CommandStream> streams,
                         std::span<const TensorValue> inputs, const RunOptions& options = {});

/// Generates the streams for `variant` first.
RunResult run_end_to_end(const Graph& graph, const PartitionedGraph& pg, std::span<const SubgraphArtifact> artifacts,
                         const IsaVariant& variant, std::span<const TensorValue> inputs,
                         const RunOptions& options = {});

/// Deterministic pseudo-random i8 inputs for every graph input.
std::vector<TensorValue> random_inputs(const Graph& graph, uint64_t seed);

}  // namespace dla
