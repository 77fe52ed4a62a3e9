#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include "dla/common.hpp"

namespace dla {

enum class DType : uint8_t { I8, I32 };

const char* to_string(DType dtype);
DType parse_dtype(std::string_view text);
inline int32_t element_bytes(DType dtype) { return dtype == DType::I8 ? 1 : 4; }

/// NHWC extents; N is always 1.
struct Shape {
    std::array<int32_t, 4> dims{1, 1, 1, 1};

    int32_t n() const { return dims[0]; }
    int32_t h() const { return dims[1]; }
    int32_t w() const { return dims[2]; }
    int32_t c() const { return dims[3]; }
    int64_t elements() const { return int64_t{dims[0]} * dims[1] * dims[2] * dims[3]; }

    bool operator==(const Shape&) const = default;
};

std::string to_string(const Shape& shape);

struct TensorDesc {
    std::string name;
    Shape shape;
    DType dtype = DType::I8;
    double scale = 1.0;

    int64_t bytes() const { return shape.elements() * element_bytes(dtype); }
    bool operator==(const TensorDesc&) const = default;
};

enum class Padding : uint8_t { Valid, Same };

struct Conv2D {
    int32_t kernel_h = 1;
    int32_t kernel_w = 1;
    int32_t stride = 1;
    Padding pad = Padding::Valid;
    int32_t out_channels = 1;
    bool fuse_relu = false;
    DType output_dtype = DType::I32;
    std::optional<Requant> requant;

    bool operator==(const Conv2D&) const = default;
};

/// Channel multiplier is fixed to 1.
struct DepthwiseConv2D {
    int32_t kernel_h = 1;
    int32_t kernel_w = 1;
    int32_t stride = 1;
    Padding pad = Padding::Valid;
    DType output_dtype = DType::I32;
    std::optional<Requant> requant;

    bool operator==(const DepthwiseConv2D&) const = default;
};

struct Dense {
    int32_t out_features = 1;
    DType output_dtype = DType::I32;
    std::optional<Requant> requant;

    bool operator==(const Dense&) const = default;
};

struct Requantize {
    Requant rq;
    int8_t clamp_lo = -128;
    int8_t clamp_hi = 127;
    bool barrier = false;

    bool operator==(const Requantize&) const = default;
};

struct Relu {
    bool operator==(const Relu&) const = default;
};

struct LeakyRelu {
    Requant negative;

    bool operator==(const LeakyRelu&) const = default;
};

struct MaxPool {
    int32_t k = 2;
    int32_t stride = 2;

    bool operator==(const MaxPool&) const = default;
};

struct AvgPool {
    int32_t k = 2;
    int32_t stride = 2;
    Requant divisor;

    bool operator==(const AvgPool&) const = default;
};

struct EwAdd {
    bool operator==(const EwAdd&) const = default;
};
struct EwAdd32 {
    bool operator==(const EwAdd32&) const = default;
};
struct EwAbs {
    bool operator==(const EwAbs&) const = default;
};
struct EwMin {
    bool operator==(const EwMin&) const = default;
};
struct EwMax {
    bool operator==(const EwMax&) const = default;
};

using NodeKind = std::variant<Conv2D, DepthwiseConv2D, Dense, Requantize, Relu, LeakyRelu, MaxPool,
                              AvgPool, EwAdd, EwAdd32, EwAbs, EwMin, EwMax>;

const char* kind_name(const NodeKind& kind);

/// Number of tensor inputs a node of this kind consumes.
int input_arity(const NodeKind& kind);

/// Size in bytes of the weight region (kernel then i32 bias) a node needs, or
/// 0 for weightless kinds.
int64_t weight_bytes(const NodeKind& kind, const Shape& input);

bool has_weights(const NodeKind& kind);
bool is_barrier(const NodeKind& kind);

struct WeightRef {
    int64_t offset = 0;
    int64_t length = 0;

    bool operator==(const WeightRef&) const = default;
};

using TensorId = uint32_t;

struct Node {
    std::string id;
    NodeKind kind;
    std::vector<TensorId> inputs;
    TensorId output = 0;
    WeightRef weight;

    bool operator==(const Node&) const = default;
};

/// Explicit padding amounts resolved from a Padding mode.
struct PadAmounts {
    int32_t top = 0;
    int32_t left = 0;
    int32_t out_h = 0;
    int32_t out_w = 0;
};

PadAmounts resolve_padding(Padding pad, int32_t in_h, int32_t in_w, int32_t kernel_h,
                           int32_t kernel_w, int32_t stride);

/// Output descriptor for `kind` applied to `inputs`; throws Shape/Dtype errors.
TensorDesc infer_output(const NodeKind& kind, std::span<const TensorDesc> inputs,
                        const std::string& node_id = {});

class Graph {
public:
    TensorId add_tensor(TensorDesc desc);
    /// Appends a node whose output tensor is created from shape inference.
    TensorId add_node(std::string id, NodeKind kind, std::vector<TensorId> inputs,
                      std::string output_name, WeightRef weight = {}, double output_scale = 1.0);
    /// Appends raw bytes to the weight blob and returns their reference.
    WeightRef append_weights(std::span<const uint8_t> bytes);

    std::vector<TensorDesc>& tensors() { return tensors_; }
    const std::vector<TensorDesc>& tensors() const { return tensors_; }
    std::vector<Node>& nodes() { return nodes_; }
    const std::vector<Node>& nodes() const { return nodes_; }
    std::vector<uint8_t>& weights() { return weights_; }
    const std::vector<uint8_t>& weights() const { return weights_; }
    std::vector<TensorId>& inputs() { return inputs_; }
    const std::vector<TensorId>& inputs() const { return inputs_; }
    std::vector<TensorId>& outputs() { return outputs_; }
    const std::vector<TensorId>& outputs() const { return outputs_; }

    const TensorDesc& tensor(TensorId id) const { return tensors_.at(id); }
    std::optional<TensorId> find_tensor(std::string_view name) const;
    const Node* find_node(std::string_view id) const;

    std::span<const uint8_t> weights_of(const Node& node) const;

    /// Node indices in a stable topological order (lowest index first among
    /// ready nodes). Throws Validation on cycles.
    std::vector<size_t> topological_order() const;

    /// Index of the producing node per tensor, or nullopt for graph inputs.
    std::vector<std::optional<size_t>> producers() const;
    std::vector<std::vector<size_t>> consumers() const;

    bool operator==(const Graph&) const = default;

private:
    std::vector<TensorDesc> tensors_;
    std::vector<Node> nodes_;
    std::vector<uint8_t> weights_;
    std::vector<TensorId> inputs_;
    std::vector<TensorId> outputs_;
};

/// Checks every structural invariant (DAG, single producer, weight bounds,
/// dtype/requant rules, shape consistency). Throws Error naming the node.
void validate(const Graph& graph);

/// Recomputes every non-input tensor shape and dtype from the graph inputs.
Graph infer_shapes(Graph graph);

/// Little-endian accessors for the weight blob layout (i8 kernel then i32 bias).
int32_t read_i32_le(const uint8_t* bytes);
void write_i32_le(uint8_t* bytes, int32_t value);

}  // namespace dla
