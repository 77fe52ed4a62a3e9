#include "dla/model_io.hpp"

#include <fstream>
#include <iterator>
#include <unordered_map>

namespace dla {

using nlohmann::json;

namespace {

json requant_to_json(const Requant& rq) { return json{{"multiplier", rq.multiplier}, {"shift", rq.shift}}; }

const char* padding_name(Padding pad) { return pad == Padding::Same ? "same" : "valid"; }

[[noreturn]] void schema_error(const std::string& node, const std::string& message) {
    throw Error(ErrorCode::Schema, message, node);
}

const json& field(const json& object, const char* key, const std::string& node) {
    if (!object.is_object() || !object.contains(key)) schema_error(node, std::string("missing field '") + key + "'");
    return object.at(key);
}

template <typename T>
T get_int(const json& object, const char* key, const std::string& node) {
    const json& value = field(object, key, node);
    if (!value.is_number_integer()) schema_error(node, std::string("field '") + key + "' must be an integer");
    const auto wide = value.get<int64_t>();
    if (wide < std::numeric_limits<T>::min() || wide > std::numeric_limits<T>::max()) {
        schema_error(node, std::string("field '") + key + "' out of range");
    }
    return static_cast<T>(wide);
}

bool get_bool(const json& object, const char* key, const std::string& node) {
    const json& value = field(object, key, node);
    if (!value.is_boolean()) schema_error(node, std::string("field '") + key + "' must be a boolean");
    return value.get<bool>();
}

std::string get_string(const json& object, const char* key, const std::string& node) {
    const json& value = field(object, key, node);
    if (!value.is_string()) schema_error(node, std::string("field '") + key + "' must be a string");
    return value.get<std::string>();
}

Requant requant_from_json(const json& j, const std::string& node) {
    return Requant{get_int<int32_t>(j, "multiplier", node), get_int<int32_t>(j, "shift", node)};
}

std::optional<Requant> optional_requant(const json& attrs, const std::string& node) {
    if (!attrs.contains("requant") || attrs.at("requant").is_null()) return std::nullopt;
    return requant_from_json(attrs.at("requant"), node);
}

Padding padding_from(const json& attrs, const std::string& node) {
    const std::string text = get_string(attrs, "pad", node);
    if (text == "same") return Padding::Same;
    if (text == "valid") return Padding::Valid;
    schema_error(node, "pad must be 'same' or 'valid'");
}

DType dtype_from(const json& attrs, const char* key, const std::string& node) {
    try {
        return parse_dtype(get_string(attrs, key, node));
    } catch (const Error& e) {
        schema_error(node, e.what());
    }
}

}  // namespace

json node_kind_to_json(const NodeKind& kind) {
    return std::visit(
        [](const auto& op) -> json {
            using T = std::decay_t<decltype(op)>;
            json attrs = json::object();
            if constexpr (std::is_same_v<T, Conv2D>) {
                attrs = {{"kernel_h", op.kernel_h}, {"kernel_w", op.kernel_w}, {"stride", op.stride},
                         {"pad", padding_name(op.pad)}, {"out_channels", op.out_channels},
                         {"fuse_relu", op.fuse_relu}, {"output_dtype", to_string(op.output_dtype)}};
                if (op.requant) attrs["requant"] = requant_to_json(*op.requant);
            } else if constexpr (std::is_same_v<T, DepthwiseConv2D>) {
                attrs = {{"kernel_h", op.kernel_h}, {"kernel_w", op.kernel_w}, {"stride", op.stride},
                         {"pad", padding_name(op.pad)}, {"output_dtype", to_string(op.output_dtype)}};
                if (op.requant) attrs["requant"] = requant_to_json(*op.requant);
            } else if constexpr (std::is_same_v<T, Dense>) {
                attrs = {{"out_features", op.out_features}, {"output_dtype", to_string(op.output_dtype)}};
                if (op.requant) attrs["requant"] = requant_to_json(*op.requant);
            } else if constexpr (std::is_same_v<T, Requantize>) {
                attrs = {{"multiplier", op.rq.multiplier}, {"shift", op.rq.shift}, {"clamp_lo", op.clamp_lo},
                         {"clamp_hi", op.clamp_hi}, {"barrier", op.barrier}};
            } else if constexpr (std::is_same_v<T, LeakyRelu>) {
                attrs = {{"multiplier_neg", op.negative.multiplier}, {"shift_neg", op.negative.shift}};
            } else if constexpr (std::is_same_v<T, MaxPool>) {
                attrs = {{"k", op.k}, {"stride", op.stride}};
            } else if constexpr (std::is_same_v<T, AvgPool>) {
                attrs = {{"k", op.k}, {"stride", op.stride}, {"multiplier_div", op.divisor.multiplier},
                         {"shift_div", op.divisor.shift}};
            }
            return attrs;
        },
        kind);
}

NodeKind node_kind_from_json(std::string_view kind, const json& attrs, const std::string& node) {
    if (!attrs.is_object()) schema_error(node, "attrs must be an object");
    if (kind == "Conv2D") {
        return Conv2D{get_int<int32_t>(attrs, "kernel_h", node), get_int<int32_t>(attrs, "kernel_w", node),
                      get_int<int32_t>(attrs, "stride", node),   padding_from(attrs, node),
                      get_int<int32_t>(attrs, "out_channels", node), get_bool(attrs, "fuse_relu", node),
                      dtype_from(attrs, "output_dtype", node),   optional_requant(attrs, node)};
    }
    if (kind == "DepthwiseConv2D") {
        return DepthwiseConv2D{get_int<int32_t>(attrs, "kernel_h", node), get_int<int32_t>(attrs, "kernel_w", node),
                               get_int<int32_t>(attrs, "stride", node),   padding_from(attrs, node),
                               dtype_from(attrs, "output_dtype", node),   optional_requant(attrs, node)};
    }
    if (kind == "Dense") {
        return Dense{get_int<int32_t>(attrs, "out_features", node), dtype_from(attrs, "output_dtype", node),
                     optional_requant(attrs, node)};
    }
    if (kind == "Requantize") {
        return Requantize{Requant{get_int<int32_t>(attrs, "multiplier", node), get_int<int32_t>(attrs, "shift", node)},
                          get_int<int8_t>(attrs, "clamp_lo", node), get_int<int8_t>(attrs, "clamp_hi", node),
                          get_bool(attrs, "barrier", node)};
    }
    if (kind == "Relu") return Relu{};
    if (kind == "LeakyRelu") {
        return LeakyRelu{Requant{get_int<int32_t>(attrs, "multiplier_neg", node),
                                 get_int<int32_t>(attrs, "shift_neg", node)}};
    }
    if (kind == "MaxPool") return MaxPool{get_int<int32_t>(attrs, "k", node), get_int<int32_t>(attrs, "stride", node)};
    if (kind == "AvgPool") {
        return AvgPool{get_int<int32_t>(attrs, "k", node), get_int<int32_t>(attrs, "stride", node),
                       Requant{get_int<int32_t>(attrs, "multiplier_div", node),
                               get_int<int32_t>(attrs, "shift_div", node)}};
    }
    if (kind == "EwAdd") return EwAdd{};
    if (kind == "EwAdd32") return EwAdd32{};
    if (kind == "EwAbs") return EwAbs{};
    if (kind == "EwMin") return EwMin{};
    if (kind == "EwMax") return EwMax{};
    schema_error(node, "unknown node kind '" + std::string(kind) + "'");
}

json tensor_to_json(const TensorDesc& desc) {
    return json{{"name", desc.name},
                {"shape", desc.shape.dims},
                {"dtype", to_string(desc.dtype)},
                {"scale", desc.scale}};
}

TensorDesc tensor_from_json(const json& j) {
    const std::string name = j.is_object() && j.contains("name") && j.at("name").is_string()
                                 ? j.at("name").get<std::string>()
                                 : std::string{};
    if (name.empty()) throw Error(ErrorCode::Schema, "tensor entry without a name");
    TensorDesc desc;
    desc.name = name;
    if (j.contains("shape") && !j.at("shape").is_null()) {
        const json& shape = j.at("shape");
        if (!shape.is_array() || shape.size() != 4) {
            throw Error(ErrorCode::Schema, "tensor '" + name + "' shape must have 4 extents");
        }
        for (size_t i = 0; i < 4; ++i) {
            if (!shape[i].is_number_integer()) throw Error(ErrorCode::Schema, "tensor '" + name + "' shape must be integers");
            desc.shape.dims[i] = shape[i].get<int32_t>();
        }
    } else {
        desc.shape.dims = {0, 0, 0, 0};
    }
    try {
        desc.dtype = parse_dtype(j.value("dtype", std::string("i8")));
    } catch (const Error& e) {
        throw Error(ErrorCode::Schema, "tensor '" + name + "': " + e.what());
    }
    if (j.contains("scale")) {
        if (!j.at("scale").is_number()) throw Error(ErrorCode::Schema, "tensor '" + name + "' scale must be a number");
        desc.scale = j.at("scale").get<double>();
    }
    return desc;
}

Graph load_model(std::string_view json_text, std::vector<uint8_t> weights) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::Schema, std::string("model.json is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw Error(ErrorCode::Schema, "model root must be an object");
    for (const char* key : {"tensors", "nodes", "inputs", "outputs"}) {
        if (!doc.contains(key) || !doc.at(key).is_array()) {
            throw Error(ErrorCode::Schema, std::string("model field '") + key + "' must be an array");
        }
    }

    Graph graph;
    std::unordered_map<std::string, TensorId> by_name;
    std::vector<bool> shape_given;
    for (const auto& entry : doc.at("tensors")) {
        TensorDesc desc = tensor_from_json(entry);
        if (by_name.count(desc.name)) throw Error(ErrorCode::Schema, "duplicate tensor '" + desc.name + "'");
        shape_given.push_back(desc.shape.dims[0] != 0);
        const std::string name = desc.name;
        by_name.emplace(name, graph.add_tensor(std::move(desc)));
    }
    auto resolve = [&](const json& ref, const std::string& node) -> TensorId {
        if (!ref.is_string()) schema_error(node, "tensor reference must be a string");
        const auto name = ref.get<std::string>();
        const auto it = by_name.find(name);
        if (it == by_name.end()) {
            throw Error(ErrorCode::Validation, "undefined tensor '" + name + "'", node);
        }
        return it->second;
    };

    for (const auto& entry : doc.at("nodes")) {
        if (!entry.is_object()) throw Error(ErrorCode::Schema, "node entry must be an object");
        Node node;
        node.id = entry.contains("id") && entry.at("id").is_string() ? entry.at("id").get<std::string>() : "";
        if (node.id.empty()) throw Error(ErrorCode::Schema, "node entry without an id");
        const std::string kind = get_string(entry, "kind", node.id);
        node.kind = node_kind_from_json(kind, entry.value("attrs", json::object()), node.id);
        const json& inputs = field(entry, "inputs", node.id);
        if (!inputs.is_array()) schema_error(node.id, "inputs must be an array");
        for (const auto& ref : inputs) node.inputs.push_back(resolve(ref, node.id));
        node.output = resolve(field(entry, "output", node.id), node.id);
        if (entry.contains("weight") && !entry.at("weight").is_null()) {
            const json& w = entry.at("weight");
            node.weight = WeightRef{get_int<int64_t>(w, "offset", node.id), get_int<int64_t>(w, "len", node.id)};
        }
        graph.nodes().push_back(std::move(node));
    }
    for (const auto& ref : doc.at("inputs")) graph.inputs().push_back(resolve(ref, "inputs"));
    for (const auto& ref : doc.at("outputs")) graph.outputs().push_back(resolve(ref, "outputs"));
    graph.weights() = std::move(weights);

    for (TensorId input : graph.inputs()) {
        if (!shape_given[input]) {
            throw Error(ErrorCode::Schema, "graph input '" + graph.tensor(input).name + "' needs a shape");
        }
    }

    // Fill omitted shapes, then validate declared ones against inference.
    std::vector<TensorDesc> declared = graph.tensors();
    Graph inferred = infer_shapes(graph);
    for (size_t i = 0; i < declared.size(); ++i) {
        if (!shape_given[i]) continue;
        if (declared[i].shape != inferred.tensors()[i].shape) {
            const auto producers = inferred.producers();
            const std::string node = producers[i] ? inferred.nodes()[*producers[i]].id : std::string{};
            throw Error(ErrorCode::Shape,
                        "tensor '" + declared[i].name + "' declared " + to_string(declared[i].shape) +
                            " but inferred " + to_string(inferred.tensors()[i].shape),
                        node);
        }
        if (declared[i].dtype != inferred.tensors()[i].dtype) {
            throw Error(ErrorCode::Dtype, "tensor '" + declared[i].name + "' declared dtype disagrees with inference");
        }
    }
    validate(inferred);
    return inferred;
}

ModelFiles save_model(const Graph& graph) {
    json doc;
    json tensors = json::array();
    for (const auto& desc : graph.tensors()) tensors.push_back(tensor_to_json(desc));
    json nodes = json::array();
    for (const auto& node : graph.nodes()) {
        json entry{{"id", node.id}, {"kind", kind_name(node.kind)}, {"attrs", node_kind_to_json(node.kind)}};
        json inputs = json::array();
        for (TensorId input : node.inputs) inputs.push_back(graph.tensor(input).name);
        entry["inputs"] = std::move(inputs);
        entry["output"] = graph.tensor(node.output).name;
        if (node.weight.length > 0) entry["weight"] = {{"offset", node.weight.offset}, {"len", node.weight.length}};
        nodes.push_back(std::move(entry));
    }
    json inputs = json::array();
    for (TensorId id : graph.inputs()) inputs.push_back(graph.tensor(id).name);
    json outputs = json::array();
    for (TensorId id : graph.outputs()) outputs.push_back(graph.tensor(id).name);
    doc["tensors"] = std::move(tensors);
    doc["nodes"] = std::move(nodes);
    doc["inputs"] = std::move(inputs);
    doc["outputs"] = std::move(outputs);
    return ModelFiles{doc.dump(2) + "\n", graph.weights()};
}

std::vector<uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open '" + path.string() + "'");
    return std::vector<uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

std::string read_file_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open '" + path.string() + "'");
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::Io, "cannot write '" + path.string() + "'");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
}

void write_file(const std::filesystem::path& path, const std::vector<uint8_t>& contents) {
    write_file(path, std::string_view(reinterpret_cast<const char*>(contents.data()), contents.size()));
}

Graph load_model_path(const std::filesystem::path& path) {
    std::filesystem::path json_path = path;
    if (std::filesystem::is_directory(path)) json_path = path / "model.json";
    if (!std::filesystem::exists(json_path)) throw Error(ErrorCode::Io, "model not found: '" + path.string() + "'");
    const auto weights_path = json_path.parent_path() / "weights.bin";
    std::vector<uint8_t> weights;
    if (std::filesystem::exists(weights_path)) weights = read_file_bytes(weights_path);
    return load_model(read_file_text(json_path), std::move(weights));
}

void save_model_dir(const Graph& graph, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const ModelFiles files = save_model(graph);
    write_file(dir / "model.json", files.json);
    write_file(dir / "weights.bin", files.weights);
}

}  // namespace dla
