#include "dla/runtime.hpp"

#include <cstring>
#include <random>

namespace dla {

CompiledModel compile_model(const Graph& graph, DwMode dw_mode, bool barrier_mode) {
    CompiledModel model;
    model.dw_mode = dw_mode;
    model.partition = partition(graph, annotate(graph, dw_mode), barrier_mode);
    for (const auto& sg : model.partition.subgraphs) model.artifacts.push_back(emit_subgraph_artifact(sg, graph));
    return model;
}

std::vector<CommandStream> generate_streams(std::span<const SubgraphArtifact> artifacts, const IsaVariant& variant,
                                            const CodegenOptions& options) {
    std::vector<CommandStream> streams;
    streams.reserve(artifacts.size());
    for (const auto& artifact : artifacts) streams.push_back(generate_command_stream(artifact, variant, options));
    return streams;
}

std::vector<uint8_t> encode_tensor(const TensorValue& value) {
    std::vector<uint8_t> bytes(static_cast<size_t>(value.desc.bytes()));
    if (value.desc.dtype == DType::I8) {
        for (size_t i = 0; i < value.data.size(); ++i) bytes[i] = static_cast<uint8_t>(static_cast<int8_t>(value.data[i]));
    } else {
        for (size_t i = 0; i < value.data.size(); ++i) write_i32_le(bytes.data() + 4 * i, value.data[i]);
    }
    return bytes;
}

TensorValue decode_tensor(const TensorDesc& desc, std::span<const uint8_t> bytes) {
    if (bytes.size() != static_cast<size_t>(desc.bytes())) {
        throw Error(ErrorCode::Device, "tensor '" + desc.name + "' has " + std::to_string(bytes.size()) +
                                           " bytes, expected " + std::to_string(desc.bytes()));
    }
    TensorValue value = make_tensor(desc);
    if (desc.dtype == DType::I8) {
        for (size_t i = 0; i < value.data.size(); ++i) value.data[i] = static_cast<int8_t>(bytes[i]);
    } else {
        for (size_t i = 0; i < value.data.size(); ++i) value.data[i] = read_i32_le(bytes.data() + 4 * i);
    }
    return value;
}

RunResult run_end_to_end(const Graph& graph, const PartitionedGraph& pg, std::span<const CommandStream> streams,
                         std::span<const TensorValue> inputs, const RunOptions& options) {
    if (streams.size() != pg.subgraphs.size()) {
        throw Error(ErrorCode::Validation, "expected one stream per subgraph");
    }
    IsaVariant device_variant = streams.empty() ? IsaVariant{} : streams.front().variant;
    for (const auto& s : streams) device_variant.sram_bytes = std::max(device_variant.sram_bytes, s.variant.sram_bytes);
    DeviceState device(device_variant);
    device.memory.weights = graph.weights();

    if (options.functional) {
        if (inputs.size() != graph.inputs().size()) {
            throw Error(ErrorCode::Validation, "expected " + std::to_string(graph.inputs().size()) + " input tensors");
        }
        for (size_t i = 0; i < inputs.size(); ++i) {
            const TensorDesc& desc = graph.tensor(graph.inputs()[i]);
            if (inputs[i].desc.shape != desc.shape || inputs[i].desc.dtype != desc.dtype) {
                throw Error(ErrorCode::Shape, "input " + std::to_string(i) + " does not match '" + desc.name + "'");
            }
            check_tensor(inputs[i]);
            device.memory.tensors[desc.name] = encode_tensor(inputs[i]);
        }
    }

    RunResult result;
    result.metrics.pe_count = device_variant.pe_count;
    ExecOptions exec{options.functional, options.kernels};
    for (const auto& entry : pg.schedule) {
        if (entry.type == ScheduleEntry::Type::Subgraph) {
            result.metrics += execute_stream(streams[entry.index], device, exec);
            continue;
        }
        const Node& node = graph.nodes().at(entry.index);
        result.metrics.cpu_fallback_node_count += 1;
        if (!options.functional) continue;
        std::vector<TensorValue> operands;
        for (TensorId id : node.inputs) {
            const TensorDesc& desc = graph.tensor(id);
            const auto found = device.memory.tensors.find(desc.name);
            if (found == device.memory.tensors.end()) {
                throw Error(ErrorCode::Device, "tensor '" + desc.name + "' is not in system memory", node.id);
            }
            operands.push_back(decode_tensor(desc, found->second));
        }
        TensorValue out = eval_node(node.kind, operands, graph.weights_of(node), node.id);
        out.desc = graph.tensor(node.output);
        device.memory.tensors[out.desc.name] = encode_tensor(out);
    }

    if (options.functional) {
        for (TensorId id : graph.outputs()) {
            const TensorDesc& desc = graph.tensor(id);
            const auto found = device.memory.tensors.find(desc.name);
            if (found == device.memory.tensors.end()) {
                throw Error(ErrorCode::Device, "graph output '" + desc.name + "' was never written");
            }
            result.outputs.push_back(decode_tensor(desc, found->second));
        }
    }
    return result;
}

RunResult run_end_to_end(const Graph& graph, const PartitionedGraph& pg, std::span<const SubgraphArtifact> artifacts,
                         const IsaVariant& variant, std::span<const TensorValue> inputs, const RunOptions& options) {
    const auto streams = generate_streams(artifacts, variant, options.codegen);
    auto result = run_end_to_end(graph, pg, streams, inputs, options);
    result.metrics.pe_count = variant.pe_count;
    return result;
}

std::vector<TensorValue> random_inputs(const Graph& graph, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int32_t> dist(-128, 127);
    std::vector<TensorValue> values;
    for (TensorId id : graph.inputs()) {
        TensorValue value = make_tensor(graph.tensor(id));
        for (auto& v : value.data) v = dist(rng);
        values.push_back(std::move(value));
    }
    return values;
}

}  // namespace dla
