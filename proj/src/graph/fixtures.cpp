#include "dla/fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

namespace dla {
namespace {

// Integer activations are kept near this standard deviation by choosing each
// requant multiplier from a rough variance propagation estimate.
constexpr double kTargetStd = 32.0;
constexpr double kInputStd = 40.0;

struct FoldedBatchNorm {
    std::vector<double> scale;
    std::vector<double> shift;
};

class FixtureBuilder {
public:
    explicit FixtureBuilder(uint32_t seed) : rng_(seed) {}

    TensorId input(const std::string& name, Shape shape, double scale) {
        const TensorId id = graph_.add_tensor(TensorDesc{name, shape, DType::I8, scale});
        graph_.inputs().push_back(id);
        std_[id] = kInputStd;
        return id;
    }

    TensorId conv(const std::string& id, TensorId in, int32_t kernel, int32_t stride, int32_t out_channels,
                  bool fold_bn) {
        const TensorDesc& src = graph_.tensor(in);
        const int32_t fan_in = kernel * kernel * src.shape.c();
        std::vector<double> w = gaussian(size_t(out_channels) * fan_in, std::sqrt(2.0 / fan_in));
        std::vector<double> b(out_channels, 0.0);
        for (auto& v : b) v = uniform(-0.05, 0.05);
        if (fold_bn) fold(w, b, batch_norm(out_channels), size_t(fan_in));
        Conv2D op{kernel, kernel, stride, Padding::Same, out_channels, false, DType::I32, std::nullopt};
        return add_weighted(id, op, in, w, b, fan_in);
    }

    TensorId depthwise(const std::string& id, TensorId in, int32_t stride) {
        const int32_t channels = graph_.tensor(in).shape.c();
        constexpr int32_t kTaps = 9;
        std::vector<double> w = gaussian(size_t(channels) * kTaps, std::sqrt(2.0 / kTaps));
        std::vector<double> b(channels, 0.0);
        fold(w, b, batch_norm(channels), kTaps);
        DepthwiseConv2D op{3, 3, stride, Padding::Same, DType::I32, std::nullopt};
        return add_weighted(id, op, in, w, b, kTaps);
    }

    TensorId dense(const std::string& id, TensorId in, int32_t out_features) {
        const Shape& s = graph_.tensor(in).shape;
        const int32_t fan_in = s.h() * s.w() * s.c();
        std::vector<double> w = gaussian(size_t(out_features) * fan_in, std::sqrt(1.0 / fan_in));
        std::vector<double> b(out_features, 0.0);
        for (auto& v : b) v = uniform(-0.05, 0.05);
        return add_weighted(id, Dense{out_features, DType::I32, std::nullopt}, in, w, b, fan_in);
    }

    TensorId requantize(const std::string& id, TensorId acc, bool relu) {
        const TensorDesc& src = graph_.tensor(acc);
        const double ratio = kTargetStd / std::max(std_.at(acc), 1.0);
        Requantize op{quantize_multiplier(ratio), relu ? int8_t{0} : int8_t{-128}, int8_t{127}, true};
        const TensorId out = graph_.add_node(id, op, {acc}, id + ":out", {}, src.scale / ratio);
        std_[out] = relu ? kTargetStd * 0.6 : kTargetStd;
        return out;
    }

    TensorId relu(const std::string& id, TensorId in) { return passthrough(id, Relu{}, in, 0.6); }

    TensorId maxpool(const std::string& id, TensorId in) { return passthrough(id, MaxPool{2, 2}, in, 1.3); }

    TensorId global_avgpool(const std::string& id, TensorId in) {
        const Shape& s = graph_.tensor(in).shape;
        const int32_t window = s.h();
        const Requant divisor = quantize_multiplier(1.0 / double(window * window));
        return passthrough(id, AvgPool{window, 1, divisor}, in, 1.0);
    }

    Graph finish(std::vector<TensorId> outputs) {
        graph_.outputs() = std::move(outputs);
        validate(graph_);
        return std::move(graph_);
    }

private:
    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }

    std::vector<double> gaussian(size_t count, double stddev) {
        std::normal_distribution<double> dist(0.0, stddev);
        std::vector<double> values(count);
        for (auto& v : values) v = dist(rng_);
        return values;
    }

    FoldedBatchNorm batch_norm(int32_t channels) {
        constexpr double kEpsilon = 1e-3;
        FoldedBatchNorm bn;
        for (int32_t c = 0; c < channels; ++c) {
            const double gamma = uniform(0.5, 1.5);
            const double beta = uniform(-0.1, 0.1);
            const double mean = uniform(-0.1, 0.1);
            const double var = uniform(0.5, 1.5);
            const double k = gamma / std::sqrt(var + kEpsilon);
            bn.scale.push_back(k);
            bn.shift.push_back(beta - mean * k);
        }
        return bn;
    }

    static void fold(std::vector<double>& w, std::vector<double>& b, const FoldedBatchNorm& bn, size_t per_channel) {
        for (size_t c = 0; c < b.size(); ++c) {
            for (size_t i = 0; i < per_channel; ++i) w[c * per_channel + i] *= bn.scale[c];
            b[c] = b[c] * bn.scale[c] + bn.shift[c];
        }
    }

    TensorId add_weighted(const std::string& id, NodeKind op, TensorId in, const std::vector<double>& w,
                          const std::vector<double>& b, int32_t fan_in) {
        double max_abs = 1e-12;
        for (double v : w) max_abs = std::max(max_abs, std::abs(v));
        const double w_scale = max_abs / 127.0;
        const double in_scale = graph_.tensor(in).scale;
        const double acc_scale = in_scale * w_scale;

        std::vector<uint8_t> blob;
        blob.reserve(w.size() + 4 * b.size());
        double sum_sq = 0.0;
        for (double v : w) {
            const auto q = static_cast<int8_t>(std::clamp<long>(std::lround(v / w_scale), -127, 127));
            sum_sq += double(q) * q;
            blob.push_back(static_cast<uint8_t>(q));
        }
        for (double v : b) {
            uint8_t bytes[4];
            const auto q = static_cast<int32_t>(std::clamp<long long>(std::llround(v / acc_scale), -(1LL << 24), 1LL << 24));
            write_i32_le(bytes, q);
            blob.insert(blob.end(), bytes, bytes + 4);
        }
        const WeightRef ref = graph_.append_weights(blob);
        const TensorId out = graph_.add_node(id, std::move(op), {in}, id + ":acc", ref, acc_scale);
        const double w_std = std::sqrt(sum_sq / double(w.size()));
        std_[out] = std_.at(in) * w_std * std::sqrt(double(fan_in));
        return out;
    }

    TensorId passthrough(const std::string& id, NodeKind op, TensorId in, double std_factor) {
        const TensorId out = graph_.add_node(id, std::move(op), {in}, id + ":out", {}, graph_.tensor(in).scale);
        std_[out] = std_.at(in) * std_factor;
        return out;
    }

    Graph graph_;
    std::mt19937 rng_;
    std::unordered_map<TensorId, double> std_;
};

}  // namespace

Graph build_mnist_fixture(uint32_t seed) {
    FixtureBuilder b(seed);
    TensorId x = b.input("image", Shape{{1, 28, 28, 1}}, 1.0 / 127.0);

    x = b.conv("conv1", x, 3, 1, 8, false);
    x = b.requantize("conv1_rq", x, false);
    x = b.relu("relu1", x);
    x = b.maxpool("pool1", x);

    x = b.conv("conv2", x, 3, 1, 16, false);
    x = b.requantize("conv2_rq", x, false);
    x = b.relu("relu2", x);
    x = b.maxpool("pool2", x);

    x = b.dense("fc", x, 10);
    x = b.requantize("fc_rq", x, false);
    return b.finish({x});
}

Graph build_mobilenet_v1_fixture(uint32_t seed) {
    struct Block {
        int32_t out_channels;
        int32_t stride;
    };
    static constexpr Block kBlocks[] = {{64, 1},  {128, 2}, {128, 1}, {256, 2}, {256, 1},
                                        {512, 2}, {512, 1}, {512, 1}, {512, 1}, {512, 1},
                                        {512, 1}, {1024, 2}, {1024, 1}};

    FixtureBuilder b(seed);
    TensorId x = b.input("image", Shape{{1, 224, 224, 3}}, 1.0 / 127.0);
    x = b.conv("conv1", x, 3, 2, 32, true);
    x = b.requantize("conv1_rq", x, true);

    int index = 1;
    for (const Block& block : kBlocks) {
        const std::string dw = "dw" + std::to_string(index);
        const std::string pw = "pw" + std::to_string(index);
        x = b.depthwise(dw, x, block.stride);
        x = b.requantize(dw + "_rq", x, true);
        x = b.conv(pw, x, 1, 1, block.out_channels, true);
        x = b.requantize(pw + "_rq", x, true);
        ++index;
    }
    x = b.global_avgpool("avgpool", x);
    x = b.dense("fc", x, 1000);
    x = b.requantize("fc_rq", x, false);
    return b.finish({x});
}

}  // namespace dla
