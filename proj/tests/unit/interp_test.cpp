#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "dla/fixtures.hpp"
#include "dla/interp.hpp"
#include "dla/runtime.hpp"
#include "oracles.hpp"
#include "random_graph.hpp"

using namespace dla;
namespace dt = dla::testing;

namespace {

TensorValue tensor(const std::string& name, Shape shape, DType dtype, std::vector<int32_t> data) {
    return TensorValue{TensorDesc{name, shape, dtype, 1.0}, std::move(data)};
}

std::vector<uint8_t> conv_weights(std::vector<int8_t> kernel, std::vector<int32_t> bias) {
    std::vector<uint8_t> bytes(kernel.size() + 4 * bias.size());
    for (size_t i = 0; i < kernel.size(); ++i) bytes[i] = static_cast<uint8_t>(kernel[i]);
    for (size_t i = 0; i < bias.size(); ++i) write_i32_le(bytes.data() + kernel.size() + 4 * i, bias[i]);
    return bytes;
}

}  // namespace

TEST(EvalNode, SingleMacConv) {
    const Conv2D conv{1, 1, 1, Padding::Valid, 1, false, DType::I32, std::nullopt};
    const TensorValue in = tensor("x", Shape{{1, 1, 1, 1}}, DType::I8, {3});
    const auto out = eval_node(conv, std::span(&in, 1), conv_weights({4}, {0}));
    EXPECT_EQ(out.desc.dtype, DType::I32);
    EXPECT_EQ(out.data, std::vector<int32_t>{12});
}

TEST(EvalNode, RequantizeRoundsHalfAwayFromZero) {
    const Requantize rq{Requant{1, 1}, -128, 127, true};
    const TensorValue in = tensor("x", Shape{{1, 1, 1, 3}}, DType::I32, {100, -7, 7});
    const auto out = eval_node(rq, std::span(&in, 1), {});
    EXPECT_EQ(out.data, (std::vector<int32_t>{50, -4, 4}));
}

TEST(RequantizeValue, MatchesExactRationalRounding) {
    std::mt19937_64 rng(17);
    std::uniform_int_distribution<int32_t> acc_dist(INT32_MIN, INT32_MAX);
    std::uniform_int_distribution<int32_t> mult_dist(1, INT32_MAX);
    std::uniform_int_distribution<int32_t> shift_dist(0, kMaxShift);
    for (int i = 0; i < 200000; ++i) {
        const int32_t acc = i % 4 == 0 ? acc_dist(rng) % 5000 : acc_dist(rng);
        const Requant rq{mult_dist(rng), shift_dist(rng)};
        ASSERT_EQ(requantize_value(acc, rq), dt::oracle_requant(acc, rq.multiplier, rq.shift, -128, 127))
            << acc << " " << rq.multiplier << " " << rq.shift;
    }
}

TEST(RequantizeValue, ExactTies) {
    for (int32_t shift = 1; shift <= 20; ++shift) {
        const int32_t half = 1 << (shift - 1);
        EXPECT_EQ(requantize_value(half, Requant{1, shift}), 1);
        EXPECT_EQ(requantize_value(-half, Requant{1, shift}), -1);
        EXPECT_EQ(requantize_value(3 * half, Requant{1, shift}), 2);
        EXPECT_EQ(requantize_value(-3 * half, Requant{1, shift}), -2);
    }
}

TEST(EvalNode, ValidConvMatchesTripleLoopOracle) {
    for (uint64_t seed = 0; seed < 1000; ++seed) {
        std::mt19937_64 rng(seed);
        const int out_channels = 1 + int(rng() % 4);
        Conv2D conv{3, 3, 1, Padding::Valid, out_channels, false, DType::I32, std::nullopt};
        if (rng() % 2) {
            conv.output_dtype = DType::I8;
            conv.requant = dt::random_requant(rng);
            conv.fuse_relu = rng() % 2;
        }
        const TensorValue in = dt::random_tensor(rng, TensorDesc{"x", Shape{{1, 4, 4, 2}}, DType::I8, 1.0});
        const auto weights = dt::random_weights(rng, conv, in.desc.shape);
        const TensorDesc descs[] = {in.desc};
        const TensorDesc out_desc = infer_output(conv, descs);
        ASSERT_EQ(eval_node(conv, std::span(&in, 1), weights).data,
                  dt::oracle_eval(conv, std::span(&in, 1), weights, out_desc).data)
            << "seed " << seed;
    }
}

TEST(EvalNode, EveryKindMatchesOracle) {
    constexpr size_t kinds = std::variant_size_v<NodeKind>;
    std::mt19937_64 rng(23);
    for (size_t kind = 0; kind < kinds; ++kind) {
        for (int i = 0; i < 500; ++i) {
            const auto inst = dt::random_node_instance(rng, kind);
            const auto got = eval_node(inst.kind, inst.inputs, inst.weights);
            const auto want = dt::oracle_eval(inst.kind, inst.inputs, inst.weights, inst.output);
            ASSERT_EQ(got.data, want.data) << kind_name(inst.kind) << " instance " << i;
            ASSERT_EQ(got.desc.shape, want.desc.shape);
            ASSERT_EQ(got.desc.dtype, want.desc.dtype);
        }
    }
}

TEST(EvalNode, AccumulatorWrapsModulo32Bits) {
    const Dense dense{1, DType::I32, std::nullopt};
    const TensorValue in = tensor("x", Shape{{1, 1, 1, 1}}, DType::I8, {-128});
    const auto out = eval_node(dense, std::span(&in, 1), conv_weights({-128}, {INT32_MAX}));
    EXPECT_EQ(out.data[0], static_cast<int32_t>(int64_t{INT32_MAX} + 16384 - (int64_t{1} << 32)));
}

TEST(EvalNode, SaturatingElementwise) {
    const TensorValue a = tensor("a", Shape{{1, 1, 1, 3}}, DType::I8, {100, -100, -128});
    const TensorValue b = tensor("b", Shape{{1, 1, 1, 3}}, DType::I8, {100, -100, 5});
    const TensorValue ab[] = {a, b};
    EXPECT_EQ(eval_node(EwAdd{}, ab, {}).data, (std::vector<int32_t>{127, -128, -123}));
    EXPECT_EQ(eval_node(EwAbs{}, std::span(&a, 1), {}).data, (std::vector<int32_t>{100, 100, 127}));
}

TEST(EvalNode, ConvIsMonotoneForNonNegativeWeights) {
    std::mt19937_64 rng(29);
    for (int i = 0; i < 200; ++i) {
        const Conv2D conv{3, 3, 1, Padding::Same, 3, false, DType::I32, std::nullopt};
        TensorValue lo = dt::random_tensor(rng, TensorDesc{"x", Shape{{1, 5, 5, 2}}, DType::I8, 1.0});
        TensorValue hi = lo;
        for (auto& v : hi.data) v = std::min(127, v + int(rng() % 20));
        auto weights = dt::random_weights(rng, conv, lo.desc.shape);
        for (size_t k = 0; k < 3 * 9 * 2; ++k) weights[k] &= 0x7f;
        const auto a = eval_node(conv, std::span(&lo, 1), weights);
        const auto b = eval_node(conv, std::span(&hi, 1), weights);
        for (size_t j = 0; j < a.data.size(); ++j) ASSERT_LE(a.data[j], b.data[j]);
    }
}

TEST(EvalNode, ConvIsLinearWithoutBias) {
    std::mt19937_64 rng(31);
    for (int i = 0; i < 200; ++i) {
        const Conv2D conv{3, 3, 2, Padding::Same, 4, false, DType::I32, std::nullopt};
        const TensorDesc desc{"x", Shape{{1, 6, 5, 3}}, DType::I8, 1.0};
        TensorValue x = dt::random_tensor(rng, desc);
        TensorValue y = dt::random_tensor(rng, desc);
        for (auto& v : x.data) v /= 2;
        for (auto& v : y.data) v /= 2;
        TensorValue sum = x;
        for (size_t j = 0; j < sum.data.size(); ++j) sum.data[j] += y.data[j];
        auto weights = dt::random_weights(rng, conv, desc.shape);
        std::fill(weights.end() - 16, weights.end(), 0);
        const auto fx = eval_node(conv, std::span(&x, 1), weights);
        const auto fy = eval_node(conv, std::span(&y, 1), weights);
        const auto fs = eval_node(conv, std::span(&sum, 1), weights);
        for (size_t j = 0; j < fs.data.size(); ++j) ASSERT_EQ(fs.data[j], fx.data[j] + fy.data[j]);
    }
}

TEST(Interpret, MnistZeroImageMatchesOracle) {
    const Graph g = build_mnist_fixture();
    TensorValue zero = make_tensor(g.tensor(g.inputs()[0]));
    const auto got = interpret(g, std::span(&zero, 1));
    const auto want = dt::oracle_run(g, std::span(&zero, 1));
    EXPECT_EQ(got, want);
}

TEST(Interpret, RandomGraphsMatchOracle) {
    std::mt19937_64 rng(37);
    for (int i = 0; i < 300; ++i) {
        const Graph g = dt::random_graph(rng);
        const auto inputs = random_inputs(g, rng());
        ASSERT_EQ(interpret(g, inputs), dt::oracle_run(g, inputs)) << "graph " << i;
    }
}

TEST(Interpret, ReluOnNonNegativeIsIdentity) {
    Graph g;
    const TensorId x = g.add_tensor(TensorDesc{"x", Shape{{1, 3, 3, 4}}, DType::I8, 1.0});
    g.inputs().push_back(x);
    g.outputs().push_back(g.add_node("relu", Relu{}, {x}, "y"));
    TensorValue in = make_tensor(g.tensor(x));
    for (size_t i = 0; i < in.data.size(); ++i) in.data[i] = int32_t(i * 3 % 128);
    const auto out = interpret(g, std::span(&in, 1));
    EXPECT_EQ(out[0].data, in.data);
}

TEST(Interpret, InputCountMismatchThrows) {
    const Graph g = build_mnist_fixture();
    EXPECT_THROW(interpret(g, {}), Error);
}

TEST(TensorDump, RoundTrip) {
    std::mt19937_64 rng(41);
    std::stringstream s;
    const TensorValue a = dt::random_tensor(rng, TensorDesc{"a", Shape{{1, 2, 3, 4}}, DType::I8, 1.0});
    const TensorValue b = dt::random_tensor(rng, TensorDesc{"b:acc", Shape{{1, 1, 1, 5}}, DType::I32, 1.0});
    write_tensor_dump(s, a);
    write_tensor_dump(s, b);
    const auto back = read_tensor_dump(s);
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[0].data, a.data);
    EXPECT_EQ(back[1].data, b.data);
    EXPECT_EQ(back[1].desc.dtype, DType::I32);
    EXPECT_EQ(back[0].desc.shape, a.desc.shape);
}
