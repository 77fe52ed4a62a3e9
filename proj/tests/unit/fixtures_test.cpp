#include <gtest/gtest.h>

#include "dla/fixtures.hpp"
#include "dla/interp.hpp"
#include "dla/runtime.hpp"

using namespace dla;

namespace {

size_t count_kind(const Graph& g, size_t index) {
    size_t n = 0;
    for (const auto& node : g.nodes()) n += node.kind.index() == index;
    return n;
}

int64_t conv_macs(const Graph& g, const Node& node) {
    const Shape out = g.tensor(node.output).shape;
    const Shape in = g.tensor(node.inputs[0]).shape;
    if (const auto* dw = std::get_if<DepthwiseConv2D>(&node.kind)) {
        return int64_t{out.h()} * out.w() * dw->kernel_h * dw->kernel_w * out.c();
    }
    const auto& conv = std::get<Conv2D>(node.kind);
    return int64_t{out.h()} * out.w() * conv.kernel_h * conv.kernel_w * in.c() * out.c();
}

}  // namespace

TEST(MnistFixture, ThreeBarriersNoFinalActivation) {
    const Graph g = build_mnist_fixture();
    validate(g);
    size_t barriers = 0;
    for (const auto& node : g.nodes()) barriers += is_barrier(node.kind);
    EXPECT_EQ(barriers, 3u);
    const TensorId out = g.outputs().at(0);
    const auto producers = g.producers();
    const Node& last = g.nodes()[*producers[out]];
    EXPECT_TRUE(std::holds_alternative<Requantize>(last.kind));
    EXPECT_FALSE(std::holds_alternative<Relu>(last.kind));
    EXPECT_EQ(g.tensor(out).shape, (Shape{{1, 1, 1, 10}}));
}

TEST(MnistFixture, Deterministic) {
    EXPECT_EQ(build_mnist_fixture(), build_mnist_fixture());
    EXPECT_NE(build_mnist_fixture(1).weights(), build_mnist_fixture(2).weights());
}

TEST(MobileNetFixture, LayerCounts) {
    const Graph g = build_mobilenet_v1_fixture();
    validate(g);
    size_t dw = 0, pw = 0;
    for (const auto& node : g.nodes()) {
        if (std::holds_alternative<DepthwiseConv2D>(node.kind)) ++dw;
        if (const auto* c = std::get_if<Conv2D>(&node.kind)) pw += c->kernel_h == 1 && c->kernel_w == 1;
    }
    EXPECT_EQ(dw, 13u);
    EXPECT_EQ(pw, 13u);
    EXPECT_EQ(count_kind(g, 2), 1u);  // dense classifier
}

TEST(MobileNetFixture, DepthwiseMacs) {
    const Graph g = build_mobilenet_v1_fixture();
    int64_t macs = 0;
    for (const auto& node : g.nodes()) {
        if (std::holds_alternative<DepthwiseConv2D>(node.kind)) macs += conv_macs(g, node);
    }
    EXPECT_EQ(macs, 17'385'984);
}

TEST(MobileNetFixture, Pointwise512At14) {
    const Graph g = build_mobilenet_v1_fixture();
    size_t found = 0;
    for (const auto& node : g.nodes()) {
        const auto* c = std::get_if<Conv2D>(&node.kind);
        if (!c || c->kernel_h != 1) continue;
        const Shape in = g.tensor(node.inputs[0]).shape;
        if (in.h() == 14 && in.c() == 512 && c->out_channels == 512) {
            EXPECT_EQ(conv_macs(g, node), 196 * 512 * 512);
            ++found;
        }
    }
    EXPECT_EQ(found, 5u);
}

TEST(MobileNetFixture, FirstLayerAndOutputShapes) {
    const Graph g = build_mobilenet_v1_fixture();
    const Node* conv1 = g.find_node("conv1");
    ASSERT_NE(conv1, nullptr);
    EXPECT_EQ(g.tensor(conv1->output).shape, (Shape{{1, 112, 112, 32}}));
    EXPECT_EQ(g.tensor(g.inputs()[0]).shape, (Shape{{1, 224, 224, 3}}));
    EXPECT_EQ(g.tensor(g.outputs()[0]).shape, (Shape{{1, 1, 1, 1000}}));
    EXPECT_EQ(g.tensor(g.outputs()[0]).dtype, DType::I8);
}

TEST(MobileNetFixture, EveryComputeLayerFeedsABarrier) {
    const Graph g = build_mobilenet_v1_fixture();
    const auto consumers = g.consumers();
    for (const auto& node : g.nodes()) {
        if (!has_weights(node.kind)) continue;
        EXPECT_EQ(g.tensor(node.output).dtype, DType::I32) << node.id;
        ASSERT_EQ(consumers[node.output].size(), 1u) << node.id;
        EXPECT_TRUE(is_barrier(g.nodes()[consumers[node.output][0]].kind)) << node.id;
    }
}

TEST(MobileNetFixture, InterpretsToClassVector) {
    const Graph g = build_mobilenet_v1_fixture();
    const auto outputs = interpret(g, random_inputs(g, 5));
    ASSERT_EQ(outputs.size(), 1u);
    EXPECT_EQ(outputs[0].desc.shape, (Shape{{1, 1, 1, 1000}}));
    check_tensor(outputs[0]);
}
