#include "dla/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <queue>
#include <sstream>

namespace dla {

const char* to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::Schema: return "schema";
        case ErrorCode::Validation: return "validation";
        case ErrorCode::Shape: return "shape";
        case ErrorCode::WeightOverrun: return "weight-overrun";
        case ErrorCode::Dtype: return "dtype";
        case ErrorCode::InsufficientSram: return "insufficient-sram";
        case ErrorCode::UnsupportedOpcode: return "unsupported-opcode";
        case ErrorCode::Device: return "device";
        case ErrorCode::Io: return "io";
    }
    return "unknown";
}

namespace {

std::string format_error(const std::string& message, const std::string& node) {
    if (node.empty()) return message;
    return "node " + node + ": " + message;
}

}  // namespace

Error::Error(ErrorCode code, const std::string& message, std::string node)
    : std::runtime_error(format_error(message, node)), code_(code), node_(std::move(node)) {}

Requant quantize_multiplier(double ratio) {
    if (!(ratio > 0.0) || !std::isfinite(ratio)) {
        throw Error(ErrorCode::Validation, "requant ratio must be positive and finite");
    }
    int exponent = 0;
    const double mantissa = std::frexp(ratio, &exponent);  // ratio = mantissa * 2^exponent
    auto multiplier = static_cast<int64_t>(std::llround(mantissa * double(1LL << 31)));
    if (multiplier == (1LL << 31)) {
        multiplier /= 2;
        ++exponent;
    }
    int32_t shift = 31 - exponent;
    while (shift > kMaxShift) {
        multiplier = std::max<int64_t>(1, (multiplier + 1) / 2);
        --shift;
    }
    if (shift < 0) throw Error(ErrorCode::Validation, "requant ratio too large");
    return Requant{static_cast<int32_t>(multiplier), shift};
}

const char* to_string(DType dtype) { return dtype == DType::I8 ? "i8" : "i32"; }

DType parse_dtype(std::string_view text) {
    if (text == "i8") return DType::I8;
    if (text == "i32") return DType::I32;
    throw Error(ErrorCode::Schema, "unknown dtype '" + std::string(text) + "'");
}

std::string to_string(const Shape& shape) {
    std::ostringstream out;
    out << shape.dims[0] << 'x' << shape.dims[1] << 'x' << shape.dims[2] << 'x' << shape.dims[3];
    return out.str();
}

const char* kind_name(const NodeKind& kind) {
    static constexpr const char* kNames[] = {
        "Conv2D", "DepthwiseConv2D", "Dense", "Requantize", "Relu",  "LeakyRelu", "MaxPool",
        "AvgPool", "EwAdd", "EwAdd32", "EwAbs", "EwMin", "EwMax"};
    return kNames[kind.index()];
}

int input_arity(const NodeKind& kind) {
    if (std::holds_alternative<EwAdd>(kind) || std::holds_alternative<EwAdd32>(kind) ||
        std::holds_alternative<EwMin>(kind) || std::holds_alternative<EwMax>(kind)) {
        return 2;
    }
    return 1;
}

bool has_weights(const NodeKind& kind) {
    return std::holds_alternative<Conv2D>(kind) || std::holds_alternative<DepthwiseConv2D>(kind) ||
           std::holds_alternative<Dense>(kind);
}

bool is_barrier(const NodeKind& kind) {
    const auto* rq = std::get_if<Requantize>(&kind);
    return rq != nullptr && rq->barrier;
}

int64_t weight_bytes(const NodeKind& kind, const Shape& input) {
    if (const auto* conv = std::get_if<Conv2D>(&kind)) {
        return int64_t{conv->out_channels} * conv->kernel_h * conv->kernel_w * input.c() +
               4 * int64_t{conv->out_channels};
    }
    if (const auto* dw = std::get_if<DepthwiseConv2D>(&kind)) {
        return int64_t{input.c()} * dw->kernel_h * dw->kernel_w + 4 * int64_t{input.c()};
    }
    if (const auto* dense = std::get_if<Dense>(&kind)) {
        const int64_t k = int64_t{input.h()} * input.w() * input.c();
        return int64_t{dense->out_features} * k + 4 * int64_t{dense->out_features};
    }
    return 0;
}

PadAmounts resolve_padding(Padding pad, int32_t in_h, int32_t in_w, int32_t kernel_h,
                           int32_t kernel_w, int32_t stride) {
    PadAmounts result;
    if (pad == Padding::Valid) {
        result.out_h = in_h >= kernel_h ? (in_h - kernel_h) / stride + 1 : 0;
        result.out_w = in_w >= kernel_w ? (in_w - kernel_w) / stride + 1 : 0;
        return result;
    }
    result.out_h = ceil_div(in_h, stride);
    result.out_w = ceil_div(in_w, stride);
    const int32_t total_h = std::max((result.out_h - 1) * stride + kernel_h - in_h, 0);
    const int32_t total_w = std::max((result.out_w - 1) * stride + kernel_w - in_w, 0);
    result.top = total_h / 2;
    result.left = total_w / 2;
    return result;
}

namespace {

[[noreturn]] void shape_error(const std::string& node, const std::string& message) {
    throw Error(ErrorCode::Shape, message, node);
}

[[noreturn]] void dtype_error(const std::string& node, const std::string& message) {
    throw Error(ErrorCode::Dtype, message, node);
}

void require_dtype(const TensorDesc& desc, DType dtype, const std::string& node) {
    if (desc.dtype != dtype) {
        dtype_error(node, "input '" + desc.name + "' must be " + to_string(dtype) + ", got " +
                              to_string(desc.dtype));
    }
}

void check_requant(const Requant& rq, const std::string& node) {
    if (rq.multiplier <= 0) throw Error(ErrorCode::Validation, "requant multiplier must be positive", node);
    if (rq.shift < 0 || rq.shift > kMaxShift) {
        throw Error(ErrorCode::Validation, "requant shift must be in [0, 62]", node);
    }
}

void check_output_quant(DType output, const std::optional<Requant>& requant, const std::string& node) {
    if (output == DType::I8 && !requant) {
        throw Error(ErrorCode::Validation, "i8 output requires requant parameters", node);
    }
    if (output == DType::I32 && requant) {
        throw Error(ErrorCode::Validation, "i32 output must not carry requant parameters", node);
    }
    if (requant) check_requant(*requant, node);
}

void check_window(int32_t kernel_h, int32_t kernel_w, int32_t stride, const std::string& node) {
    if (kernel_h < 1 || kernel_w < 1) shape_error(node, "kernel extents must be >= 1");
    if (stride < 1) shape_error(node, "stride must be >= 1");
}

TensorDesc spatial_output(const TensorDesc& in, Padding pad, int32_t kh, int32_t kw, int32_t stride,
                          int32_t channels, DType dtype, const std::string& node) {
    check_window(kh, kw, stride, node);
    const int32_t padded_h = pad == Padding::Same ? std::max(in.shape.h(), kh) : in.shape.h();
    const int32_t padded_w = pad == Padding::Same ? std::max(in.shape.w(), kw) : in.shape.w();
    if (kh > padded_h || kw > padded_w) {
        shape_error(node, "kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                              " larger than padded input " + to_string(in.shape));
    }
    const PadAmounts amounts = resolve_padding(pad, in.shape.h(), in.shape.w(), kh, kw, stride);
    TensorDesc out;
    out.shape.dims = {1, amounts.out_h, amounts.out_w, channels};
    out.dtype = dtype;
    return out;
}

}  // namespace

TensorDesc infer_output(const NodeKind& kind, std::span<const TensorDesc> inputs,
                        const std::string& node) {
    const int arity = input_arity(kind);
    if (static_cast<int>(inputs.size()) != arity) {
        shape_error(node, std::string(kind_name(kind)) + " expects " + std::to_string(arity) +
                              " input(s), got " + std::to_string(inputs.size()));
    }
    const TensorDesc& in = inputs[0];

    return std::visit(
        [&](const auto& op) -> TensorDesc {
            using T = std::decay_t<decltype(op)>;
            if constexpr (std::is_same_v<T, Conv2D>) {
                require_dtype(in, DType::I8, node);
                check_output_quant(op.output_dtype, op.requant, node);
                if (op.fuse_relu && op.output_dtype != DType::I8) {
                    throw Error(ErrorCode::Validation, "fuse_relu requires i8 output", node);
                }
                if (op.out_channels < 1) shape_error(node, "out_channels must be >= 1");
                return spatial_output(in, op.pad, op.kernel_h, op.kernel_w, op.stride,
                                      op.out_channels, op.output_dtype, node);
            } else if constexpr (std::is_same_v<T, DepthwiseConv2D>) {
                require_dtype(in, DType::I8, node);
                check_output_quant(op.output_dtype, op.requant, node);
                return spatial_output(in, op.pad, op.kernel_h, op.kernel_w, op.stride, in.shape.c(),
                                      op.output_dtype, node);
            } else if constexpr (std::is_same_v<T, Dense>) {
                require_dtype(in, DType::I8, node);
                check_output_quant(op.output_dtype, op.requant, node);
                if (op.out_features < 1) shape_error(node, "out_features must be >= 1");
                TensorDesc out;
                out.shape.dims = {1, 1, 1, op.out_features};
                out.dtype = op.output_dtype;
                return out;
            } else if constexpr (std::is_same_v<T, Requantize>) {
                require_dtype(in, DType::I32, node);
                check_requant(op.rq, node);
                if (op.clamp_lo > op.clamp_hi) {
                    throw Error(ErrorCode::Validation, "clamp_lo must not exceed clamp_hi", node);
                }
                TensorDesc out{.shape = in.shape, .dtype = DType::I8};
                return out;
            } else if constexpr (std::is_same_v<T, MaxPool> || std::is_same_v<T, AvgPool>) {
                require_dtype(in, DType::I8, node);
                if constexpr (std::is_same_v<T, AvgPool>) check_requant(op.divisor, node);
                return spatial_output(in, Padding::Valid, op.k, op.k, op.stride, in.shape.c(),
                                      DType::I8, node);
            } else if constexpr (std::is_same_v<T, EwAdd32>) {
                require_dtype(inputs[0], DType::I32, node);
                require_dtype(inputs[1], DType::I32, node);
                if (inputs[0].shape != inputs[1].shape) {
                    shape_error(node, "operand shapes differ: " + to_string(inputs[0].shape) + " vs " +
                                          to_string(inputs[1].shape));
                }
                return TensorDesc{.shape = in.shape, .dtype = DType::I32};
            } else {
                for (const auto& operand : inputs) require_dtype(operand, DType::I8, node);
                if constexpr (std::is_same_v<T, LeakyRelu>) check_requant(op.negative, node);
                if (inputs.size() == 2 && inputs[0].shape != inputs[1].shape) {
                    shape_error(node, "operand shapes differ: " + to_string(inputs[0].shape) + " vs " +
                                          to_string(inputs[1].shape));
                }
                return TensorDesc{.shape = in.shape, .dtype = DType::I8};
            }
        },
        kind);
}

TensorId Graph::add_tensor(TensorDesc desc) {
    tensors_.push_back(std::move(desc));
    return static_cast<TensorId>(tensors_.size() - 1);
}

TensorId Graph::add_node(std::string id, NodeKind kind, std::vector<TensorId> inputs,
                         std::string output_name, WeightRef weight, double output_scale) {
    std::vector<TensorDesc> descs;
    descs.reserve(inputs.size());
    for (TensorId input : inputs) descs.push_back(tensors_.at(input));
    TensorDesc out = infer_output(kind, descs, id);
    out.name = std::move(output_name);
    out.scale = output_scale;
    const TensorId out_id = add_tensor(std::move(out));
    nodes_.push_back(Node{std::move(id), std::move(kind), std::move(inputs), out_id, weight});
    return out_id;
}

WeightRef Graph::append_weights(std::span<const uint8_t> bytes) {
    WeightRef ref{static_cast<int64_t>(weights_.size()), static_cast<int64_t>(bytes.size())};
    weights_.insert(weights_.end(), bytes.begin(), bytes.end());
    return ref;
}

std::optional<TensorId> Graph::find_tensor(std::string_view name) const {
    for (size_t i = 0; i < tensors_.size(); ++i) {
        if (tensors_[i].name == name) return static_cast<TensorId>(i);
    }
    return std::nullopt;
}

const Node* Graph::find_node(std::string_view id) const {
    for (const auto& node : nodes_) {
        if (node.id == id) return &node;
    }
    return nullptr;
}

std::span<const uint8_t> Graph::weights_of(const Node& node) const {
    if (node.weight.length == 0) return {};
    return std::span<const uint8_t>(weights_).subspan(static_cast<size_t>(node.weight.offset),
                                                      static_cast<size_t>(node.weight.length));
}

std::vector<std::optional<size_t>> Graph::producers() const {
    std::vector<std::optional<size_t>> result(tensors_.size());
    for (size_t i = 0; i < nodes_.size(); ++i) result.at(nodes_[i].output) = i;
    return result;
}

std::vector<std::vector<size_t>> Graph::consumers() const {
    std::vector<std::vector<size_t>> result(tensors_.size());
    for (size_t i = 0; i < nodes_.size(); ++i) {
        for (TensorId input : nodes_[i].inputs) {
            auto& list = result.at(input);
            if (list.empty() || list.back() != i) list.push_back(i);
        }
    }
    return result;
}

std::vector<size_t> Graph::topological_order() const {
    const auto producer = producers();
    std::vector<int> pending(nodes_.size(), 0);
    std::vector<std::vector<size_t>> successors(nodes_.size());
    for (size_t i = 0; i < nodes_.size(); ++i) {
        for (TensorId input : nodes_[i].inputs) {
            if (input >= producer.size()) continue;
            if (const auto& p = producer[input]) {
                successors[*p].push_back(i);
                ++pending[i];
            }
        }
    }
    std::priority_queue<size_t, std::vector<size_t>, std::greater<>> ready;
    for (size_t i = 0; i < nodes_.size(); ++i) {
        if (pending[i] == 0) ready.push(i);
    }
    std::vector<size_t> order;
    order.reserve(nodes_.size());
    while (!ready.empty()) {
        const size_t next = ready.top();
        ready.pop();
        order.push_back(next);
        for (size_t succ : successors[next]) {
            if (--pending[succ] == 0) ready.push(succ);
        }
    }
    if (order.size() != nodes_.size()) {
        for (size_t i = 0; i < nodes_.size(); ++i) {
            if (pending[i] > 0) throw Error(ErrorCode::Validation, "graph contains a cycle", nodes_[i].id);
        }
    }
    return order;
}

void validate(const Graph& graph) {
    const auto& tensors = graph.tensors();
    for (const auto& desc : tensors) {
        for (int32_t extent : desc.shape.dims) {
            if (extent < 1) {
                throw Error(ErrorCode::Shape, "tensor '" + desc.name + "' has non-positive extent");
            }
        }
        if (desc.shape.n() != 1) throw Error(ErrorCode::Shape, "tensor '" + desc.name + "' batch must be 1");
        if (!(desc.scale > 0.0)) throw Error(ErrorCode::Validation, "tensor '" + desc.name + "' scale must be positive");
    }

    std::vector<int> producer_count(tensors.size(), 0);
    for (TensorId input : graph.inputs()) {
        if (input >= tensors.size()) throw Error(ErrorCode::Validation, "graph input id out of range");
        ++producer_count[input];
        if (tensors[input].dtype != DType::I8) {
            throw Error(ErrorCode::Dtype, "graph input '" + tensors[input].name + "' must be i8");
        }
    }
    for (const auto& node : graph.nodes()) {
        for (TensorId input : node.inputs) {
            if (input >= tensors.size()) throw Error(ErrorCode::Validation, "dangling input tensor", node.id);
        }
        if (node.output >= tensors.size()) throw Error(ErrorCode::Validation, "dangling output tensor", node.id);
        if (++producer_count[node.output] > 1) {
            throw Error(ErrorCode::Validation,
                        "tensor '" + tensors[node.output].name + "' has more than one producer", node.id);
        }
    }
    for (size_t i = 0; i < tensors.size(); ++i) {
        if (producer_count[i] == 0) {
            throw Error(ErrorCode::Validation,
                        "tensor '" + tensors[i].name + "' has no producer and is not a graph input");
        }
    }
    for (TensorId output : graph.outputs()) {
        if (output >= tensors.size()) throw Error(ErrorCode::Validation, "graph output id out of range");
    }

    std::unordered_map<std::string, int> ids;
    for (const auto& node : graph.nodes()) {
        if (++ids[node.id] > 1) throw Error(ErrorCode::Validation, "duplicate node id", node.id);
    }

    (void)graph.topological_order();

    for (const auto& node : graph.nodes()) {
        std::vector<TensorDesc> in;
        for (TensorId id : node.inputs) in.push_back(tensors[id]);
        const TensorDesc expected = infer_output(node.kind, in, node.id);
        const TensorDesc& actual = tensors[node.output];
        if (expected.shape != actual.shape) {
            throw Error(ErrorCode::Shape,
                        "output '" + actual.name + "' declared " + to_string(actual.shape) +
                            " but inferred " + to_string(expected.shape),
                        node.id);
        }
        if (expected.dtype != actual.dtype) {
            throw Error(ErrorCode::Dtype, "output '" + actual.name + "' dtype mismatch", node.id);
        }
        const int64_t need = in.empty() ? 0 : weight_bytes(node.kind, in[0].shape);
        if (need != node.weight.length) {
            throw Error(ErrorCode::WeightOverrun,
                        "weight reference length " + std::to_string(node.weight.length) + " but kind needs " +
                            std::to_string(need),
                        node.id);
        }
        if (node.weight.offset < 0 ||
            node.weight.offset + node.weight.length > static_cast<int64_t>(graph.weights().size())) {
            throw Error(ErrorCode::WeightOverrun,
                        "weight reference [" + std::to_string(node.weight.offset) + ", +" +
                            std::to_string(node.weight.length) + ") exceeds blob of " +
                            std::to_string(graph.weights().size()) + " bytes",
                        node.id);
        }
    }
}

Graph infer_shapes(Graph graph) {
    const auto order = graph.topological_order();
    for (size_t index : order) {
        auto& node = graph.nodes()[index];
        std::vector<TensorDesc> in;
        for (TensorId id : node.inputs) in.push_back(graph.tensors().at(id));
        TensorDesc inferred = infer_output(node.kind, in, node.id);
        auto& out = graph.tensors().at(node.output);
        out.shape = inferred.shape;
        out.dtype = inferred.dtype;
    }
    return graph;
}

int32_t read_i32_le(const uint8_t* bytes) {
    const uint32_t value = uint32_t{bytes[0]} | (uint32_t{bytes[1]} << 8) | (uint32_t{bytes[2]} << 16) |
                           (uint32_t{bytes[3]} << 24);
    return static_cast<int32_t>(value);
}

void write_i32_le(uint8_t* bytes, int32_t value) {
    const auto bits = static_cast<uint32_t>(value);
    bytes[0] = static_cast<uint8_t>(bits);
    bytes[1] = static_cast<uint8_t>(bits >> 8);
    bytes[2] = static_cast<uint8_t>(bits >> 16);
    bytes[3] = static_cast<uint8_t>(bits >> 24);
}

}  // namespace dla
