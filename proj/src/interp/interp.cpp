#include "dla/interp.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <sstream>

namespace dla {

TensorValue make_tensor(TensorDesc desc) {
    TensorValue value{std::move(desc), {}};
    value.data.assign(static_cast<size_t>(value.desc.shape.elements()), 0);
    return value;
}

void check_tensor(const TensorValue& value) {
    if (static_cast<int64_t>(value.data.size()) != value.desc.shape.elements()) {
        throw Error(ErrorCode::Validation, "tensor '" + value.desc.name + "' has " + std::to_string(value.data.size()) +
                                               " values, shape needs " + std::to_string(value.desc.shape.elements()));
    }
    if (value.desc.dtype == DType::I8) {
        for (int32_t v : value.data) {
            if (v < -128 || v > 127) {
                throw Error(ErrorCode::Validation, "tensor '" + value.desc.name + "' holds out-of-range i8 value " +
                                                       std::to_string(v));
            }
        }
    }
}

int64_t rshift_round(int64_t value, int32_t shift) {
    if (shift == 0) return value;
    const int64_t half = int64_t{1} << (shift - 1);
    if (value >= 0) return (value + half) >> shift;
    return -((-value + half) >> shift);
}

int32_t requantize_value(int32_t acc, const Requant& rq, int32_t lo, int32_t hi) {
    const int64_t scaled = rshift_round(int64_t{acc} * rq.multiplier, rq.shift);
    return static_cast<int32_t>(std::clamp<int64_t>(scaled, lo, hi));
}

namespace {

inline int32_t wrap_add(int32_t a, int32_t b) {
    return static_cast<int32_t>(static_cast<uint32_t>(a) + static_cast<uint32_t>(b));
}

inline int32_t at(const TensorValue& t, int32_t y, int32_t x, int32_t c) {
    const Shape& s = t.desc.shape;
    return t.data[(size_t(y) * s.w() + x) * s.c() + c];
}

int32_t bias_at(std::span<const uint8_t> weights, size_t kernel_bytes, int32_t channel) {
    return read_i32_le(weights.data() + kernel_bytes + 4 * size_t(channel));
}

int32_t finish_acc(int32_t acc, const std::optional<Requant>& rq, bool relu) {
    if (!rq) return acc;
    return requantize_value(acc, *rq, relu ? 0 : -128, 127);
}

void check_weights(std::span<const uint8_t> weights, const NodeKind& kind, const Shape& input,
                   const std::string& node) {
    const int64_t need = weight_bytes(kind, input);
    if (static_cast<int64_t>(weights.size()) != need) {
        throw Error(ErrorCode::WeightOverrun,
                    "weight slice has " + std::to_string(weights.size()) + " bytes, need " + std::to_string(need), node);
    }
}

TensorValue eval_conv(const Conv2D& op, const TensorValue& in, std::span<const uint8_t> weights, TensorDesc out_desc) {
    TensorValue out = make_tensor(std::move(out_desc));
    const Shape& is = in.desc.shape;
    const Shape& os = out.desc.shape;
    const PadAmounts pad = resolve_padding(op.pad, is.h(), is.w(), op.kernel_h, op.kernel_w, op.stride);
    const size_t kernel_bytes = size_t(op.out_channels) * op.kernel_h * op.kernel_w * is.c();
    const auto* w = reinterpret_cast<const int8_t*>(weights.data());
    for (int32_t oy = 0; oy < os.h(); ++oy) {
        for (int32_t ox = 0; ox < os.w(); ++ox) {
            for (int32_t co = 0; co < os.c(); ++co) {
                int32_t acc = bias_at(weights, kernel_bytes, co);
                for (int32_t ky = 0; ky < op.kernel_h; ++ky) {
                    const int32_t iy = oy * op.stride - pad.top + ky;
                    if (iy < 0 || iy >= is.h()) continue;
                    for (int32_t kx = 0; kx < op.kernel_w; ++kx) {
                        const int32_t ix = ox * op.stride - pad.left + kx;
                        if (ix < 0 || ix >= is.w()) continue;
                        const int8_t* tap = w + ((size_t(co) * op.kernel_h + ky) * op.kernel_w + kx) * is.c();
                        for (int32_t ci = 0; ci < is.c(); ++ci) {
                            acc = wrap_add(acc, at(in, iy, ix, ci) * int32_t{tap[ci]});
                        }
                    }
                }
                out.data[(size_t(oy) * os.w() + ox) * os.c() + co] = finish_acc(acc, op.requant, op.fuse_relu);
            }
        }
    }
    return out;
}

TensorValue eval_depthwise(const DepthwiseConv2D& op, const TensorValue& in, std::span<const uint8_t> weights,
                           TensorDesc out_desc) {
    TensorValue out = make_tensor(std::move(out_desc));
    const Shape& is = in.desc.shape;
    const Shape& os = out.desc.shape;
    const PadAmounts pad = resolve_padding(op.pad, is.h(), is.w(), op.kernel_h, op.kernel_w, op.stride);
    const size_t kernel_bytes = size_t(is.c()) * op.kernel_h * op.kernel_w;
    const auto* w = reinterpret_cast<const int8_t*>(weights.data());
    for (int32_t oy = 0; oy < os.h(); ++oy) {
        for (int32_t ox = 0; ox < os.w(); ++ox) {
            for (int32_t c = 0; c < os.c(); ++c) {
                int32_t acc = bias_at(weights, kernel_bytes, c);
                for (int32_t ky = 0; ky < op.kernel_h; ++ky) {
                    const int32_t iy = oy * op.stride - pad.top + ky;
                    if (iy < 0 || iy >= is.h()) continue;
                    for (int32_t kx = 0; kx < op.kernel_w; ++kx) {
                        const int32_t ix = ox * op.stride - pad.left + kx;
                        if (ix < 0 || ix >= is.w()) continue;
                        const int8_t tap = w[(size_t(c) * op.kernel_h + ky) * op.kernel_w + kx];
                        acc = wrap_add(acc, at(in, iy, ix, c) * int32_t{tap});
                    }
                }
                out.data[(size_t(oy) * os.w() + ox) * os.c() + c] = finish_acc(acc, op.requant, false);
            }
        }
    }
    return out;
}

TensorValue eval_dense(const Dense& op, const TensorValue& in, std::span<const uint8_t> weights, TensorDesc out_desc) {
    TensorValue out = make_tensor(std::move(out_desc));
    const size_t k = in.data.size();
    const size_t kernel_bytes = size_t(op.out_features) * k;
    const auto* w = reinterpret_cast<const int8_t*>(weights.data());
    for (int32_t o = 0; o < op.out_features; ++o) {
        int32_t acc = bias_at(weights, kernel_bytes, o);
        for (size_t i = 0; i < k; ++i) acc = wrap_add(acc, in.data[i] * int32_t{w[size_t(o) * k + i]});
        out.data[size_t(o)] = finish_acc(acc, op.requant, false);
    }
    return out;
}

template <typename Reduce>
TensorValue eval_pool(int32_t k, int32_t stride, const TensorValue& in, TensorDesc out_desc, Reduce reduce) {
    TensorValue out = make_tensor(std::move(out_desc));
    const Shape& os = out.desc.shape;
    std::vector<int32_t> window(size_t(k) * k);
    for (int32_t oy = 0; oy < os.h(); ++oy) {
        for (int32_t ox = 0; ox < os.w(); ++ox) {
            for (int32_t c = 0; c < os.c(); ++c) {
                size_t n = 0;
                for (int32_t ky = 0; ky < k; ++ky) {
                    for (int32_t kx = 0; kx < k; ++kx) window[n++] = at(in, oy * stride + ky, ox * stride + kx, c);
                }
                out.data[(size_t(oy) * os.w() + ox) * os.c() + c] = reduce(window);
            }
        }
    }
    return out;
}

template <typename Fn>
TensorValue pointwise(const TensorValue& a, TensorDesc out_desc, Fn fn) {
    TensorValue out = make_tensor(std::move(out_desc));
    for (size_t i = 0; i < a.data.size(); ++i) out.data[i] = fn(a.data[i]);
    return out;
}

template <typename Fn>
TensorValue pointwise2(const TensorValue& a, const TensorValue& b, TensorDesc out_desc, Fn fn) {
    TensorValue out = make_tensor(std::move(out_desc));
    for (size_t i = 0; i < a.data.size(); ++i) out.data[i] = fn(a.data[i], b.data[i]);
    return out;
}

int32_t clamp_i8(int64_t v) { return static_cast<int32_t>(std::clamp<int64_t>(v, -128, 127)); }

}  // namespace

TensorValue eval_node(const NodeKind& kind, std::span<const TensorValue> inputs, std::span<const uint8_t> weights,
                      const std::string& node_id) {
    std::vector<TensorDesc> descs;
    for (const auto& input : inputs) descs.push_back(input.desc);
    TensorDesc out_desc = infer_output(kind, descs, node_id);
    for (const auto& input : inputs) {
        if (static_cast<int64_t>(input.data.size()) != input.desc.shape.elements()) {
            throw Error(ErrorCode::Shape, "input '" + input.desc.name + "' data length does not match its shape", node_id);
        }
    }
    if (has_weights(kind)) {
        check_weights(weights, kind, inputs[0].desc.shape, node_id);
    } else if (!weights.empty()) {
        throw Error(ErrorCode::WeightOverrun, std::string(kind_name(kind)) + " takes no weights", node_id);
    }
    const TensorValue& a = inputs[0];

    return std::visit(
        [&](const auto& op) -> TensorValue {
            using T = std::decay_t<decltype(op)>;
            if constexpr (std::is_same_v<T, Conv2D>) {
                return eval_conv(op, a, weights, out_desc);
            } else if constexpr (std::is_same_v<T, DepthwiseConv2D>) {
                return eval_depthwise(op, a, weights, out_desc);
            } else if constexpr (std::is_same_v<T, Dense>) {
                return eval_dense(op, a, weights, out_desc);
            } else if constexpr (std::is_same_v<T, Requantize>) {
                return pointwise(a, out_desc, [&](int32_t v) { return requantize_value(v, op.rq, op.clamp_lo, op.clamp_hi); });
            } else if constexpr (std::is_same_v<T, Relu>) {
                return pointwise(a, out_desc, [](int32_t v) { return std::max(v, 0); });
            } else if constexpr (std::is_same_v<T, LeakyRelu>) {
                return pointwise(a, out_desc, [&](int32_t v) {
                    if (v >= 0) return v;
                    return clamp_i8(rshift_round(int64_t{v} * op.negative.multiplier, op.negative.shift));
                });
            } else if constexpr (std::is_same_v<T, MaxPool>) {
                return eval_pool(op.k, op.stride, a, out_desc,
                                 [](const std::vector<int32_t>& w) { return *std::max_element(w.begin(), w.end()); });
            } else if constexpr (std::is_same_v<T, AvgPool>) {
                return eval_pool(op.k, op.stride, a, out_desc, [&](const std::vector<int32_t>& w) {
                    int64_t sum = 0;
                    for (int32_t v : w) sum += v;
                    return clamp_i8(rshift_round(sum * op.divisor.multiplier, op.divisor.shift));
                });
            } else if constexpr (std::is_same_v<T, EwAdd>) {
                return pointwise2(a, inputs[1], out_desc, [](int32_t x, int32_t y) { return clamp_i8(int64_t{x} + y); });
            } else if constexpr (std::is_same_v<T, EwAdd32>) {
                return pointwise2(a, inputs[1], out_desc, wrap_add);
            } else if constexpr (std::is_same_v<T, EwAbs>) {
                return pointwise(a, out_desc, [](int32_t v) { return std::min(v < 0 ? -v : v, 127); });
            } else if constexpr (std::is_same_v<T, EwMin>) {
                return pointwise2(a, inputs[1], out_desc, [](int32_t x, int32_t y) { return std::min(x, y); });
            } else {
                static_assert(std::is_same_v<T, EwMax>);
                return pointwise2(a, inputs[1], out_desc, [](int32_t x, int32_t y) { return std::max(x, y); });
            }
        },
        kind);
}

std::vector<TensorValue> interpret_all(const Graph& graph, std::span<const TensorValue> inputs) {
    if (inputs.size() != graph.inputs().size()) {
        throw Error(ErrorCode::Validation, "graph expects " + std::to_string(graph.inputs().size()) + " input(s), got " +
                                               std::to_string(inputs.size()));
    }
    std::vector<TensorValue> values(graph.tensors().size());
    for (size_t i = 0; i < inputs.size(); ++i) {
        const TensorDesc& desc = graph.tensor(graph.inputs()[i]);
        if (inputs[i].desc.shape != desc.shape || inputs[i].desc.dtype != desc.dtype) {
            throw Error(ErrorCode::Shape, "input '" + desc.name + "' does not match " + to_string(desc.shape) + " " +
                                              to_string(desc.dtype));
        }
        check_tensor(inputs[i]);
        values[graph.inputs()[i]] = TensorValue{desc, inputs[i].data};
    }
    for (size_t index : graph.topological_order()) {
        const Node& node = graph.nodes()[index];
        std::vector<TensorValue> operands;
        operands.reserve(node.inputs.size());
        for (TensorId id : node.inputs) operands.push_back(values[id]);
        TensorValue result = eval_node(node.kind, operands, graph.weights_of(node), node.id);
        result.desc = graph.tensor(node.output);
        values[node.output] = std::move(result);
    }
    return values;
}

std::vector<TensorValue> interpret(const Graph& graph, std::span<const TensorValue> inputs) {
    std::vector<TensorValue> all = interpret_all(graph, inputs);
    std::vector<TensorValue> outputs;
    for (TensorId id : graph.outputs()) outputs.push_back(all[id]);
    return outputs;
}

void write_tensor_dump(std::ostream& out, const TensorValue& value) {
    out << value.desc.name << ' ' << to_string(value.desc.shape) << ' ' << to_string(value.desc.dtype) << '\n';
    for (int32_t v : value.data) out << v << '\n';
}

std::vector<TensorValue> read_tensor_dump(std::istream& in) {
    std::vector<TensorValue> result;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream header(line);
        std::string name, shape_text, dtype_text;
        if (!(header >> name >> shape_text >> dtype_text)) {
            throw Error(ErrorCode::Schema, "malformed tensor dump header: '" + line + "'");
        }
        TensorDesc desc;
        desc.name = name;
        desc.dtype = parse_dtype(dtype_text);
        std::istringstream dims(shape_text);
        for (size_t i = 0; i < 4; ++i) {
            char sep = 'x';
            if (i > 0 && !(dims >> sep)) throw Error(ErrorCode::Schema, "malformed shape '" + shape_text + "'");
            if (sep != 'x' || !(dims >> desc.shape.dims[i])) {
                throw Error(ErrorCode::Schema, "malformed shape '" + shape_text + "'");
            }
        }
        TensorValue value = make_tensor(desc);
        for (auto& v : value.data) {
            if (!std::getline(in, line)) throw Error(ErrorCode::Schema, "tensor dump '" + name + "' is truncated");
            try {
                v = std::stoi(line);
            } catch (const std::exception&) {
                throw Error(ErrorCode::Schema, "tensor dump '" + name + "' has a non-integer value");
            }
        }
        check_tensor(value);
        result.push_back(std::move(value));
    }
    return result;
}

}  // namespace dla
