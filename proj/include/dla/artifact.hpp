#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "dla/graph.hpp"
#include "dla/partition.hpp"

namespace dla {

/// Hardware-neutral description of one operation inside a subgraph.
struct ArtifactOp {
    std::string node;
    NodeKind kind;
    std::vector<std::string> inputs;
    std::string output;
    WeightRef weight;

    bool operator==(const ArtifactOp&) const = default;
};

/// Portable subgraph manifest. Holds shapes, quantization parameters and
/// weight references; nothing in it depends on the target variant.
struct SubgraphArtifact {
    int id = 0;
    SubgraphKind kind = SubgraphKind::Other;
    std::vector<TensorDesc> tensors;  ///< every tensor the ops touch
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    std::vector<ArtifactOp> ops;

    const TensorDesc& tensor(const std::string& name) const;
    bool operator==(const SubgraphArtifact&) const = default;
};

SubgraphArtifact emit_subgraph_artifact(const Subgraph& sg, const Graph& graph);

nlohmann::json artifact_to_json(const SubgraphArtifact& artifact);
SubgraphArtifact artifact_from_json(const nlohmann::json& j);

/// File name used for an artifact inside a compiled model directory.
std::string artifact_file_name(int subgraph_id);

}  // namespace dla
