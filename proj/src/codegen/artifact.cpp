#include "dla/artifact.hpp"

#include <set>

#include "dla/model_io.hpp"

namespace dla {

const TensorDesc& SubgraphArtifact::tensor(const std::string& name) const {
    for (const auto& desc : tensors) {
        if (desc.name == name) return desc;
    }
    throw Error(ErrorCode::Validation, "artifact " + std::to_string(id) + " has no tensor '" + name + "'");
}

SubgraphArtifact emit_subgraph_artifact(const Subgraph& sg, const Graph& graph) {
    SubgraphArtifact artifact;
    artifact.id = sg.id;
    artifact.kind = sg.kind;
    std::set<TensorId> touched;
    auto touch = [&](TensorId id) {
        if (touched.insert(id).second) artifact.tensors.push_back(graph.tensor(id));
    };
    for (TensorId id : sg.inputs) touch(id);
    for (size_t index : sg.nodes) {
        const Node& node = graph.nodes().at(index);
        if (node.weight.offset < 0 || node.weight.length < 0 ||
            node.weight.offset + node.weight.length > static_cast<int64_t>(graph.weights().size())) {
            throw Error(ErrorCode::WeightOverrun, "weight reference outside the blob", node.id);
        }
        ArtifactOp op{node.id, node.kind, {}, graph.tensor(node.output).name, node.weight};
        for (TensorId in : node.inputs) {
            touch(in);
            op.inputs.push_back(graph.tensor(in).name);
        }
        touch(node.output);
        artifact.ops.push_back(std::move(op));
    }
    for (TensorId id : sg.inputs) artifact.inputs.push_back(graph.tensor(id).name);
    for (TensorId id : sg.outputs) artifact.outputs.push_back(graph.tensor(id).name);
    return artifact;
}

nlohmann::json artifact_to_json(const SubgraphArtifact& artifact) {
    using nlohmann::json;
    json tensors = json::array();
    for (const auto& desc : artifact.tensors) tensors.push_back(tensor_to_json(desc));
    json ops = json::array();
    for (const auto& op : artifact.ops) {
        ops.push_back(json{{"id", op.node},
                           {"kind", kind_name(op.kind)},
                           {"attrs", node_kind_to_json(op.kind)},
                           {"inputs", op.inputs},
                           {"output", op.output},
                           {"weight", {{"offset", op.weight.offset}, {"len", op.weight.length}}}});
    }
    return json{{"id", artifact.id},         {"kind", to_string(artifact.kind)}, {"tensors", tensors},
                {"inputs", artifact.inputs}, {"outputs", artifact.outputs},       {"ops", ops}};
}

SubgraphArtifact artifact_from_json(const nlohmann::json& j) {
    try {
        SubgraphArtifact artifact;
        artifact.id = j.at("id").get<int>();
        artifact.kind = parse_subgraph_kind(j.at("kind").get<std::string>());
        for (const auto& t : j.at("tensors")) artifact.tensors.push_back(tensor_from_json(t));
        artifact.inputs = j.at("inputs").get<std::vector<std::string>>();
        artifact.outputs = j.at("outputs").get<std::vector<std::string>>();
        for (const auto& o : j.at("ops")) {
            ArtifactOp op;
            op.node = o.at("id").get<std::string>();
            op.kind = node_kind_from_json(o.at("kind").get<std::string>(), o.at("attrs"), op.node);
            op.inputs = o.at("inputs").get<std::vector<std::string>>();
            op.output = o.at("output").get<std::string>();
            op.weight.offset = o.at("weight").at("offset").get<int64_t>();
            op.weight.length = o.at("weight").at("len").get<int64_t>();
            artifact.ops.push_back(std::move(op));
        }
        for (const auto& op : artifact.ops) {
            for (const auto& name : op.inputs) artifact.tensor(name);
            artifact.tensor(op.output);
        }
        return artifact;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::Schema, std::string("bad subgraph artifact: ") + e.what());
    }
}

std::string artifact_file_name(int subgraph_id) { return "subgraph_" + std::to_string(subgraph_id) + ".json"; }

}  // namespace dla
