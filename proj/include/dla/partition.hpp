#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dla/graph.hpp"

namespace dla {

/// How depthwise convolutions reach the accelerator.
enum class DwMode : uint8_t {
    Fallback,  ///< not supported, executed by the CPU runtime
    Emulated,  ///< lowered to one single-channel OP_CONV per channel
    Native,    ///< dedicated OP_DEPTH_CONV instruction
};

const char* to_string(DwMode mode);
DwMode parse_dw_mode(std::string_view text);

enum class SubgraphKind : uint8_t { Conv, Depth, Requant, Other };

inline constexpr size_t kSubgraphKindCount = 4;
const char* to_string(SubgraphKind kind);
SubgraphKind parse_subgraph_kind(std::string_view text);

struct Subgraph {
    int id = 0;
    SubgraphKind kind = SubgraphKind::Other;
    std::vector<size_t> nodes;  ///< indices into Graph::nodes(), in execution order
    std::vector<TensorId> inputs;
    std::vector<TensorId> outputs;
};

struct ScheduleEntry {
    enum class Type : uint8_t { Subgraph, CpuNode };
    Type type;
    size_t index;  ///< subgraph position or node index

    bool operator==(const ScheduleEntry&) const = default;
};

struct PartitionedGraph {
    std::vector<Subgraph> subgraphs;
    std::vector<size_t> cpu_nodes;
    std::vector<ScheduleEntry> schedule;
    bool barrier_mode = true;

    size_t compute_subgraph_count() const;
    size_t count(SubgraphKind kind) const;
};

/// Per-node support flags for the given depthwise mapping.
std::vector<bool> annotate(const Graph& graph, DwMode dw_mode);

/// Merges consecutive supported nodes (in topological order) into subgraphs.
/// With `barrier_mode`, a barrier Requantize closes the open region and forms
/// its own REQUANT subgraph.
PartitionedGraph partition(const Graph& graph, const std::vector<bool>& supported, bool barrier_mode);

SubgraphKind classify(const Graph& graph, const std::vector<size_t>& nodes);

/// Recomputes a subgraph's boundary tensors from its node set.
void compute_boundary(const Graph& graph, Subgraph& subgraph);

struct PartitionDiagnostic {
    enum class Code : uint8_t { Coverage, Disjointness, Schedule, Barrier, Kind, Boundary };
    Code code;
    std::string message;
};

/// Empty result means the partition satisfies every invariant.
std::vector<PartitionDiagnostic> verify_partition(const PartitionedGraph& pg, const Graph& graph);

nlohmann::json partition_report(const PartitionedGraph& pg, const Graph& graph);

/// Rebuilds a partition from its report, resolving node and tensor names
/// against `graph`. Throws Schema on unknown names.
PartitionedGraph partition_from_json(const nlohmann::json& report, const Graph& graph);

}  // namespace dla
