#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>

#include "dla/graph.hpp"
#include "random_graph.hpp"

using namespace dla;

namespace {

TensorDesc i8(const std::string& name, int h, int w, int c) { return TensorDesc{name, Shape{{1, h, w, c}}, DType::I8, 1.0}; }

Shape infer(const NodeKind& kind, const TensorDesc& in) {
    const TensorDesc inputs[] = {in};
    return infer_output(kind, inputs).shape;
}

ErrorCode code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no error raised";
    return ErrorCode::Io;
}

}  // namespace

TEST(InferShapes, SamePaddingKeepsExtent) {
    const Conv2D conv{3, 3, 1, Padding::Same, 16, false, DType::I32, std::nullopt};
    EXPECT_EQ(infer(conv, i8("x", 28, 28, 1)), (Shape{{1, 28, 28, 16}}));
}

TEST(InferShapes, StridedSameConv) {
    const Conv2D conv{3, 3, 2, Padding::Same, 32, false, DType::I32, std::nullopt};
    EXPECT_EQ(infer(conv, i8("x", 224, 224, 3)), (Shape{{1, 112, 112, 32}}));
}

TEST(InferShapes, MaxPoolHalves) {
    EXPECT_EQ(infer(MaxPool{2, 2}, i8("x", 28, 28, 8)), (Shape{{1, 14, 14, 8}}));
}

TEST(InferShapes, ValidConvShrinks) {
    const Conv2D conv{3, 3, 1, Padding::Valid, 4, false, DType::I32, std::nullopt};
    EXPECT_EQ(infer(conv, i8("x", 4, 4, 2)), (Shape{{1, 2, 2, 4}}));
}

TEST(InferShapes, DenseFlattens) {
    const Dense dense{10, DType::I32, std::nullopt};
    EXPECT_EQ(infer(dense, i8("x", 7, 7, 16)), (Shape{{1, 1, 1, 10}}));
}

TEST(InferShapes, RequantizeProducesI8) {
    const TensorDesc acc{"acc", Shape{{1, 2, 2, 3}}, DType::I32, 1.0};
    const TensorDesc inputs[] = {acc};
    const auto out = infer_output(Requantize{Requant{1, 1}, -128, 127, true}, inputs);
    EXPECT_EQ(out.dtype, DType::I8);
    EXPECT_EQ(out.shape, acc.shape);
}

TEST(InferShapes, KernelLargerThanValidInputIsRejected) {
    const Conv2D conv{5, 5, 1, Padding::Valid, 4, false, DType::I32, std::nullopt};
    EXPECT_EQ(code_of([&] { infer(conv, i8("x", 3, 3, 1)); }), ErrorCode::Shape);
}

TEST(InferShapes, BinaryShapeMismatchIsRejected) {
    const TensorDesc inputs[] = {i8("a", 2, 2, 3), i8("b", 2, 2, 4)};
    EXPECT_EQ(code_of([&] { infer_output(EwAdd{}, inputs); }), ErrorCode::Shape);
}

TEST(InferShapes, ReluRejectsI32) {
    const TensorDesc acc{"acc", Shape{{1, 2, 2, 3}}, DType::I32, 1.0};
    EXPECT_EQ(code_of([&] { infer(Relu{}, acc); }), ErrorCode::Dtype);
}

TEST(WeightBytes, LayoutSizes) {
    const Shape in{{1, 5, 5, 3}};
    EXPECT_EQ(weight_bytes(Conv2D{3, 3, 1, Padding::Same, 8, false, DType::I32, std::nullopt}, in), 8 * 9 * 3 + 4 * 8);
    EXPECT_EQ(weight_bytes(DepthwiseConv2D{3, 3, 1, Padding::Same, DType::I32, std::nullopt}, in), 3 * 9 + 4 * 3);
    EXPECT_EQ(weight_bytes(Dense{4, DType::I32, std::nullopt}, in), 4 * 75 + 4 * 4);
    EXPECT_EQ(weight_bytes(Relu{}, in), 0);
}

TEST(Graph, SingleReluGraph) {
    Graph g;
    const TensorId x = g.add_tensor(i8("x", 4, 4, 8));
    g.inputs().push_back(x);
    g.outputs().push_back(g.add_node("relu", Relu{}, {x}, "y"));
    validate(g);
    EXPECT_EQ(g.nodes().size(), 1u);
    EXPECT_EQ(g.tensors().size(), 2u);
    EXPECT_EQ(g.tensor(g.outputs()[0]).shape, (Shape{{1, 4, 4, 8}}));
}

TEST(Validate, WeightOverrunNamesNode) {
    Graph g;
    const TensorId x = g.add_tensor(i8("x", 2, 2, 1));
    g.inputs().push_back(x);
    const Conv2D conv{1, 1, 1, Padding::Valid, 1, false, DType::I32, std::nullopt};
    g.outputs().push_back(g.add_node("c", conv, {x}, "y", WeightRef{0, 5}));
    try {
        validate(g);
        FAIL() << "expected WeightOverrun";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::WeightOverrun);
        EXPECT_EQ(e.node(), "c");
    }
}

TEST(Validate, CycleIsRejected) {
    Graph g;
    const TensorId x = g.add_tensor(i8("x", 2, 2, 1));
    g.inputs().push_back(x);
    const TensorId a = g.add_node("a", EwAbs{}, {x}, "ta");
    const TensorId b = g.add_node("b", EwAbs{}, {a}, "tb");
    g.nodes()[0].inputs[0] = b;
    g.outputs().push_back(b);
    EXPECT_EQ(code_of([&] { validate(g); }), ErrorCode::Validation);
}

TEST(Validate, RequantShiftOutOfRange) {
    Graph g;
    const TensorId x = g.add_tensor(i8("x", 1, 1, 2));
    g.inputs().push_back(x);
    g.outputs().push_back(g.add_node("lrelu", LeakyRelu{Requant{1, 0}}, {x}, "y"));
    std::get<LeakyRelu>(g.nodes()[0].kind).negative.shift = 63;
    EXPECT_EQ(code_of([&] { validate(g); }), ErrorCode::Validation);
}

TEST(Validate, FuseReluRequiresRequant) {
    Graph g;
    const TensorId x = g.add_tensor(i8("x", 2, 2, 1));
    g.inputs().push_back(x);
    const Conv2D conv{1, 1, 1, Padding::Valid, 1, true, DType::I32, std::nullopt};
    const uint8_t w[5] = {1, 0, 0, 0, 0};
    const WeightRef ref = g.append_weights(w);
    EXPECT_THROW(
        {
            g.outputs().push_back(g.add_node("c", conv, {x}, "y", ref));
            validate(g);
        },
        Error);
}

TEST(QuantizeMultiplier, NormalizedMultiplier) {
    for (double ratio : {1.0, 0.5, 0.3, 1.0 / 9.0, 1e-6}) {
        const Requant rq = quantize_multiplier(ratio);
        EXPECT_GE(rq.multiplier, 1 << 30) << ratio;
        EXPECT_NEAR(double(rq.multiplier) / std::exp2(rq.shift), ratio, ratio * 1e-9);
    }
    EXPECT_THROW(quantize_multiplier(0.0), Error);
}

TEST(TopologicalOrder, RandomGraphsRespectDependencies) {
    std::mt19937_64 rng(7);
    for (int i = 0; i < 200; ++i) {
        const Graph g = dla::testing::random_graph(rng);
        std::vector<bool> ready(g.tensors().size(), false);
        for (TensorId t : g.inputs()) ready[t] = true;
        for (size_t n : g.topological_order()) {
            for (TensorId t : g.nodes()[n].inputs) ASSERT_TRUE(ready[t]);
            ready[g.nodes()[n].output] = true;
        }
    }
}

TEST(InferShapesPass, RandomGraphsAreFixedPoints) {
    std::mt19937_64 rng(11);
    for (int i = 0; i < 200; ++i) {
        const Graph g = dla::testing::random_graph(rng);
        EXPECT_EQ(infer_shapes(g), g);
    }
}
