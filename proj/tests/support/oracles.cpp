#include "oracles.hpp"

#include <algorithm>
#include <map>

namespace dla::testing {

int64_t oracle_requant(int64_t acc, int64_t multiplier, int shift, int64_t lo, int64_t hi) {
    const __int128 n = static_cast<__int128>(acc) * multiplier;
    const __int128 d = static_cast<__int128>(1) << shift;
    const __int128 magnitude = n < 0 ? -n : n;
    // round(|n| / d) with ties up: floor((2|n| + d) / 2d)
    __int128 q = (2 * magnitude + d) / (2 * d);
    if (n < 0) q = -q;
    if (q < lo) return lo;
    if (q > hi) return hi;
    return static_cast<int64_t>(q);
}

namespace {

int32_t wrap32(int64_t v) { return static_cast<int32_t>(static_cast<uint32_t>(static_cast<uint64_t>(v))); }

int32_t le32(std::span<const uint8_t> bytes, size_t offset) {
    const uint32_t v = uint32_t{bytes[offset]} | uint32_t{bytes[offset + 1]} << 8 | uint32_t{bytes[offset + 2]} << 16 |
                       uint32_t{bytes[offset + 3]} << 24;
    return static_cast<int32_t>(v);
}

int8_t s8(std::span<const uint8_t> bytes, size_t offset) { return static_cast<int8_t>(bytes[offset]); }

struct Padded {
    int64_t h, w, c;
    std::vector<int64_t> v;
    int64_t at(int64_t y, int64_t x, int64_t ch) const { return v[size_t((y * w + x) * c + ch)]; }
};

/// Zero-padded copy; for "same" the extra row/column goes to the bottom/right.
Padded pad_input(const TensorValue& in, Padding pad, int64_t kh, int64_t kw, int64_t stride, int64_t& out_h,
                 int64_t& out_w) {
    const int64_t h = in.desc.shape.h();
    const int64_t w = in.desc.shape.w();
    const int64_t c = in.desc.shape.c();
    int64_t top = 0, bottom = 0, left = 0, right = 0;
    if (pad == Padding::Same) {
        out_h = (h + stride - 1) / stride;
        out_w = (w + stride - 1) / stride;
        const int64_t th = std::max<int64_t>(0, (out_h - 1) * stride + kh - h);
        const int64_t tw = std::max<int64_t>(0, (out_w - 1) * stride + kw - w);
        top = th / 2;
        bottom = th - top;
        left = tw / 2;
        right = tw - left;
    } else {
        out_h = (h - kh) / stride + 1;
        out_w = (w - kw) / stride + 1;
    }
    Padded p{h + top + bottom, w + left + right, c, {}};
    p.v.assign(size_t(p.h * p.w * c), 0);
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x)
            for (int64_t ch = 0; ch < c; ++ch)
                p.v[size_t(((y + top) * p.w + x + left) * c + ch)] = in.data[size_t((y * w + x) * c + ch)];
    return p;
}

int32_t finish(int64_t sum, const std::optional<Requant>& rq, bool relu) {
    const int32_t acc = wrap32(sum);
    if (!rq) return acc;
    return static_cast<int32_t>(oracle_requant(acc, rq->multiplier, rq->shift, relu ? 0 : -128, 127));
}

int32_t clamp8(int64_t v) { return static_cast<int32_t>(std::clamp<int64_t>(v, -128, 127)); }

}  // namespace

TensorValue oracle_eval(const NodeKind& kind, std::span<const TensorValue> inputs, std::span<const uint8_t> weights,
                        const TensorDesc& out_desc) {
    TensorValue out{out_desc, std::vector<int32_t>(size_t(out_desc.shape.elements()), 0)};
    const TensorValue& in = inputs[0];
    const int64_t oh = out_desc.shape.h(), ow = out_desc.shape.w(), oc = out_desc.shape.c();
    auto put = [&](int64_t y, int64_t x, int64_t c, int32_t v) { out.data[size_t((y * ow + x) * oc + c)] = v; };

    if (const auto* conv = std::get_if<Conv2D>(&kind)) {
        int64_t h = 0, w = 0;
        const Padded p = pad_input(in, conv->pad, conv->kernel_h, conv->kernel_w, conv->stride, h, w);
        const int64_t ic = p.c, kh = conv->kernel_h, kw = conv->kernel_w;
        const size_t bias_at = size_t(oc * kh * kw * ic);
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x)
                for (int64_t o = 0; o < oc; ++o) {
                    int64_t sum = le32(weights, bias_at + 4 * size_t(o));
                    for (int64_t ky = 0; ky < kh; ++ky)
                        for (int64_t kx = 0; kx < kw; ++kx)
                            for (int64_t c = 0; c < ic; ++c)
                                sum += p.at(y * conv->stride + ky, x * conv->stride + kx, c) *
                                       s8(weights, size_t(((o * kh + ky) * kw + kx) * ic + c));
                    put(y, x, o, finish(sum, conv->requant, conv->fuse_relu));
                }
        return out;
    }
    if (const auto* dw = std::get_if<DepthwiseConv2D>(&kind)) {
        int64_t h = 0, w = 0;
        const Padded p = pad_input(in, dw->pad, dw->kernel_h, dw->kernel_w, dw->stride, h, w);
        const int64_t kh = dw->kernel_h, kw = dw->kernel_w;
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x)
                for (int64_t c = 0; c < oc; ++c) {
                    int64_t sum = le32(weights, size_t(oc * kh * kw + 4 * c));
                    for (int64_t ky = 0; ky < kh; ++ky)
                        for (int64_t kx = 0; kx < kw; ++kx)
                            sum += p.at(y * dw->stride + ky, x * dw->stride + kx, c) *
                                   s8(weights, size_t((c * kh + ky) * kw + kx));
                    put(y, x, c, finish(sum, dw->requant, false));
                }
        return out;
    }
    if (const auto* dense = std::get_if<Dense>(&kind)) {
        const size_t k = in.data.size();
        for (int64_t o = 0; o < oc; ++o) {
            int64_t sum = le32(weights, size_t(oc) * k + 4 * size_t(o));
            for (size_t i = 0; i < k; ++i) sum += int64_t{in.data[i]} * s8(weights, size_t(o) * k + i);
            out.data[size_t(o)] = finish(sum, dense->requant, false);
        }
        return out;
    }
    if (const auto* rq = std::get_if<Requantize>(&kind)) {
        for (size_t i = 0; i < in.data.size(); ++i) {
            out.data[i] = int32_t(oracle_requant(in.data[i], rq->rq.multiplier, rq->rq.shift, rq->clamp_lo, rq->clamp_hi));
        }
        return out;
    }
    if (std::holds_alternative<MaxPool>(kind) || std::holds_alternative<AvgPool>(kind)) {
        const auto* avg = std::get_if<AvgPool>(&kind);
        const int64_t k = avg ? avg->k : std::get<MaxPool>(kind).k;
        const int64_t stride = avg ? avg->stride : std::get<MaxPool>(kind).stride;
        const int64_t w = in.desc.shape.w();
        for (int64_t y = 0; y < oh; ++y)
            for (int64_t x = 0; x < ow; ++x)
                for (int64_t c = 0; c < oc; ++c) {
                    int64_t best = INT64_MIN, sum = 0;
                    for (int64_t ky = 0; ky < k; ++ky)
                        for (int64_t kx = 0; kx < k; ++kx) {
                            const int64_t v = in.data[size_t(((y * stride + ky) * w + x * stride + kx) * oc + c)];
                            best = std::max(best, v);
                            sum += v;
                        }
                    put(y, x, c,
                        avg ? int32_t(oracle_requant(sum, avg->divisor.multiplier, avg->divisor.shift, -128, 127))
                            : int32_t(best));
                }
        return out;
    }
    for (size_t i = 0; i < out.data.size(); ++i) {
        const int64_t a = in.data[i];
        const int64_t b = inputs.size() > 1 ? inputs[1].data[i] : 0;
        int32_t r = 0;
        if (std::holds_alternative<Relu>(kind)) {
            r = int32_t(a > 0 ? a : 0);
        } else if (const auto* lr = std::get_if<LeakyRelu>(&kind)) {
            r = a >= 0 ? int32_t(a) : int32_t(oracle_requant(a, lr->negative.multiplier, lr->negative.shift, -128, 127));
        } else if (std::holds_alternative<EwAdd>(kind)) {
            r = clamp8(a + b);
        } else if (std::holds_alternative<EwAdd32>(kind)) {
            r = wrap32(a + b);
        } else if (std::holds_alternative<EwAbs>(kind)) {
            r = clamp8(a < 0 ? -a : a);
        } else if (std::holds_alternative<EwMin>(kind)) {
            r = int32_t(std::min(a, b));
        } else if (std::holds_alternative<EwMax>(kind)) {
            r = int32_t(std::max(a, b));
        }
        out.data[i] = r;
    }
    return out;
}

std::vector<TensorValue> oracle_run(const Graph& graph, std::span<const TensorValue> inputs) {
    std::map<TensorId, TensorValue> known;
    for (size_t i = 0; i < inputs.size(); ++i) known.emplace(graph.inputs()[i], inputs[i]);
    std::vector<bool> done(graph.nodes().size(), false);
    for (bool progress = true; progress;) {
        progress = false;
        for (size_t n = 0; n < graph.nodes().size(); ++n) {
            const Node& node = graph.nodes()[n];
            if (done[n]) continue;
            std::vector<TensorValue> args;
            for (TensorId id : node.inputs) {
                if (!known.count(id)) break;
                args.push_back(known.at(id));
            }
            if (args.size() != node.inputs.size()) continue;
            const auto slice = std::span<const uint8_t>(graph.weights()).subspan(size_t(node.weight.offset),
                                                                                   size_t(node.weight.length));
            known.emplace(node.output, oracle_eval(node.kind, args, slice, graph.tensor(node.output)));
            done[n] = true;
            progress = true;
        }
    }
    std::vector<TensorValue> outputs;
    for (TensorId id : graph.outputs()) outputs.push_back(known.at(id));
    return outputs;
}

ScheduleCount enumerate_conv_schedule(const ConvTile& t, int64_t pes, ParallelMode mode) {
    const bool output_parallel = mode == ParallelMode::OutputParallel;
    const int64_t outer = output_parallel ? t.in_channels : t.out_channels;
    const int64_t inner = output_parallel ? t.out_channels : t.in_channels;
    ScheduleCount count;
    for (int64_t pixel = 0; pixel < t.out_h * t.out_w; ++pixel) {
        for (int64_t tap = 0; tap < t.kernel_h * t.kernel_w; ++tap) {
            for (int64_t a = 0; a < outer; ++a) {
                int64_t lane = pes;
                for (int64_t b = 0; b < inner; ++b) {
                    if (lane == pes) {
                        ++count.cycles;
                        lane = 0;
                    }
                    ++lane;
                    ++count.macs;
                }
            }
        }
    }
    return count;
}

ScheduleCount enumerate_depthwise_schedule(const ConvTile& t, int64_t pes) {
    ScheduleCount count;
    for (int64_t pixel = 0; pixel < t.out_h * t.out_w; ++pixel) {
        for (int64_t tap = 0; tap < t.kernel_h * t.kernel_w; ++tap) {
            int64_t lane = pes;
            for (int64_t c = 0; c < t.out_channels; ++c) {
                if (lane == pes) {
                    ++count.cycles;
                    lane = 0;
                }
                ++lane;
                ++count.macs;
            }
        }
    }
    return count;
}

}  // namespace dla::testing
