#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "dla/graph.hpp"

namespace dla {

/// Concrete tensor contents in C (NHWC) order. i8 tensors keep their values
/// in the int32 storage, always within [-128, 127].
struct TensorValue {
    TensorDesc desc;
    std::vector<int32_t> data;

    bool operator==(const TensorValue&) const = default;
};

TensorValue make_tensor(TensorDesc desc);
/// Throws Validation when the length or the i8 range invariant is broken.
void check_tensor(const TensorValue& value);

/// round(value / 2^shift) with ties away from zero; shift in [0, 62].
int64_t rshift_round(int64_t value, int32_t shift);

/// clamp(rshift_round(acc * multiplier, shift), lo, hi)
int32_t requantize_value(int32_t acc, const Requant& rq, int32_t lo = -128, int32_t hi = 127);

/// Golden semantics of one node. `weights` is the node's slice of the blob.
TensorValue eval_node(const NodeKind& kind, std::span<const TensorValue> inputs,
                      std::span<const uint8_t> weights, const std::string& node_id = {});

/// Executes the whole graph in topological order; returns the graph outputs.
std::vector<TensorValue> interpret(const Graph& graph, std::span<const TensorValue> inputs);

/// Same, but returns every tensor value indexed by TensorId.
std::vector<TensorValue> interpret_all(const Graph& graph, std::span<const TensorValue> inputs);

/// Debug dump: `name shape dtype` header line, then one value per line.
void write_tensor_dump(std::ostream& out, const TensorValue& value);
std::vector<TensorValue> read_tensor_dump(std::istream& in);

}  // namespace dla
