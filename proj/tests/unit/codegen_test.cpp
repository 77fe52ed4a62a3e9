#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "dla/codegen.hpp"
#include "dla/fixtures.hpp"
#include "dla/runtime.hpp"
#include "random_graph.hpp"

using namespace dla;
namespace dt = dla::testing;

namespace {

IsaVariant variant(int32_t pes, int64_t sram, ParallelMode mode, DwMode dw = DwMode::Native) {
    IsaVariant v;
    v.pe_count = pes;
    v.sram_bytes = sram;
    v.parallel_mode = mode;
    v.dw_mode = dw;
    return v;
}

Graph two_convs() {
    std::mt19937_64 rng(1);
    Graph g;
    const TensorId x = g.add_tensor(TensorDesc{"x", Shape{{1, 6, 6, 4}}, DType::I8, 1.0});
    g.inputs().push_back(x);
    const Conv2D a{3, 3, 1, Padding::Same, 4, true, DType::I8, Requant{1 << 30, 36}};
    const Conv2D b{3, 3, 1, Padding::Same, 5, false, DType::I32, std::nullopt};
    const TensorId y = g.add_node("a", a, {x}, "y", g.append_weights(dt::random_weights(rng, a, Shape{{1, 6, 6, 4}})));
    g.outputs().push_back(g.add_node("b", b, {y}, "z", g.append_weights(dt::random_weights(rng, b, Shape{{1, 6, 6, 4}}))));
    validate(g);
    return g;
}

Graph depthwise8() {
    std::mt19937_64 rng(2);
    Graph g;
    const TensorId x = g.add_tensor(TensorDesc{"x", Shape{{1, 5, 5, 8}}, DType::I8, 1.0});
    g.inputs().push_back(x);
    const DepthwiseConv2D dw{3, 3, 1, Padding::Same, DType::I32, std::nullopt};
    g.outputs().push_back(g.add_node("dw", dw, {x}, "y", g.append_weights(dt::random_weights(rng, dw, Shape{{1, 5, 5, 8}}))));
    return g;
}

bool writes(const CommandUnit& unit, Reg reg) {
    return std::any_of(unit.regs.begin(), unit.regs.end(), [&](const RegWrite& w) { return w.reg == reg; });
}

std::vector<const CommandUnit*> compute_units(const CommandStream& s) {
    std::vector<const CommandUnit*> out;
    for (const auto& u : s.units) {
        if (!is_dma(u.op)) out.push_back(&u);
    }
    return out;
}

}  // namespace

TEST(Codegen, SecondConvReusesGeometryRegisters) {
    const Graph g = two_convs();
    const auto model = compile_model(g, DwMode::Native, false);
    ASSERT_EQ(model.artifacts.size(), 1u);
    const auto stream = generate_command_stream(model.artifacts[0], variant(128, 256 * kMiB, ParallelMode::OutputParallel));
    const auto units = compute_units(stream);
    ASSERT_EQ(units.size(), 2u);
    EXPECT_EQ(units[0]->op, Opcode::ConvRelu);
    EXPECT_EQ(units[1]->op, Opcode::Conv);
    for (Reg reg : {Reg::KernelH, Reg::KernelW, Reg::Stride, Reg::PadTop, Reg::PadLeft}) {
        EXPECT_TRUE(writes(*units[0], reg));
        EXPECT_FALSE(writes(*units[1], reg)) << register_name(reg);
    }
    EXPECT_TRUE(writes(*units[1], Reg::OutC));
}

TEST(Codegen, WithoutDedupEveryUnitWritesAllInputs) {
    const auto model = compile_model(two_convs(), DwMode::Native, false);
    const auto stream = generate_command_stream(model.artifacts[0], variant(128, 256 * kMiB, ParallelMode::OutputParallel),
                                                CodegenOptions{false});
    const auto units = compute_units(stream);
    ASSERT_EQ(units.size(), 2u);
    for (Reg reg : {Reg::KernelH, Reg::KernelW, Reg::Stride, Reg::PadTop, Reg::PadLeft}) EXPECT_TRUE(writes(*units[1], reg));
}

TEST(Codegen, EmulatedDepthwiseIsOneConvPerChannel) {
    const auto model = compile_model(depthwise8(), DwMode::Emulated, true);
    const auto stream = generate_command_stream(model.artifacts[0], variant(64, 256 * kMiB, ParallelMode::OutputParallel,
                                                                            DwMode::Emulated));
    const auto units = compute_units(stream);
    ASSERT_EQ(units.size(), 8u);
    for (const auto* u : units) {
        EXPECT_EQ(u->op, Opcode::Conv);
        EXPECT_EQ(u->kind, SubgraphKind::Depth);
    }
}

TEST(Codegen, NativeDepthwiseIsOneUnit) {
    const auto model = compile_model(depthwise8(), DwMode::Native, true);
    const auto stream = generate_command_stream(model.artifacts[0], variant(64, 256 * kMiB, ParallelMode::OutputParallel));
    const auto units = compute_units(stream);
    ASSERT_EQ(units.size(), 1u);
    EXPECT_EQ(units[0]->op, Opcode::DepthConv);
}

TEST(Codegen, DepthwiseOnFallbackVariantIsUnsupported) {
    const auto model = compile_model(depthwise8(), DwMode::Native, true);
    try {
        generate_command_stream(model.artifacts[0], variant(64, 256 * kMiB, ParallelMode::OutputParallel, DwMode::Fallback));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::UnsupportedOpcode);
        EXPECT_EQ(e.node(), "dw");
    }
}

TEST(Codegen, InsufficientSramPropagates) {
    const Graph g = build_mobilenet_v1_fixture();
    const auto model = compile_model(g, DwMode::Native, true);
    EXPECT_THROW(generate_streams(model.artifacts, variant(128, 256 * kKiB, ParallelMode::OutputParallel)), Error);
    EXPECT_NO_THROW(generate_streams(model.artifacts, variant(128, 512 * kKiB, ParallelMode::OutputParallel)));
}

TEST(Codegen, FixtureStreamsValidateAcrossVariants) {
    for (const Graph& g : {build_mnist_fixture(), build_mobilenet_v1_fixture()}) {
        for (DwMode dw : {DwMode::Emulated, DwMode::Native}) {
            const auto model = compile_model(g, dw, true);
            for (int32_t pes : {64, 128}) {
                for (int64_t sram : {512 * kKiB, kMiB, 256 * kMiB}) {
                    for (ParallelMode mode : {ParallelMode::InputParallel, ParallelMode::OutputParallel}) {
                        const auto streams = generate_streams(model.artifacts, variant(pes, sram, mode, dw));
                        for (const auto& s : streams) {
                            const auto diags = validate_stream(s);
                            ASSERT_TRUE(diags.empty()) << "subgraph " << s.subgraph_id << " unit " << diags[0].unit << ": "
                                                       << diags[0].message;
                        }
                    }
                }
            }
        }
    }
}

TEST(Codegen, DedupNeverAddsWrites) {
    std::mt19937_64 rng(12);
    for (int i = 0; i < 200; ++i) {
        const Graph g = dt::random_graph(rng);
        const auto model = compile_model(g, DwMode::Native, rng() % 2);
        const auto v = variant(64, 256 * kMiB, ParallelMode::OutputParallel);
        for (const auto& a : model.artifacts) {
            const auto on = generate_command_stream(a, v, {true});
            const auto off = generate_command_stream(a, v, {false});
            ASSERT_LE(on.register_writes(), off.register_writes());
            ASSERT_EQ(on.units.size(), off.units.size());
            ASSERT_TRUE(validate_stream(on).empty());
            ASSERT_TRUE(validate_stream(off).empty());
        }
    }
}

TEST(ValidateStream, CatchesMissingRegister) {
    const auto model = compile_model(two_convs(), DwMode::Native, false);
    auto stream = generate_command_stream(model.artifacts[0], variant(128, 256 * kMiB, ParallelMode::OutputParallel));
    for (auto& u : stream.units) {
        if (u.op == Opcode::ConvRelu) {
            u.regs.erase(std::remove_if(u.regs.begin(), u.regs.end(), [](const RegWrite& w) { return w.reg == Reg::KernelH; }),
                         u.regs.end());
        }
    }
    const auto diags = validate_stream(stream);
    ASSERT_FALSE(diags.empty());
    EXPECT_NE(diags[0].message.find("KERNEL"), std::string::npos) << diags[0].message;
}

TEST(ValidateStream, CatchesOutOfRangeAndBadHandle) {
    const auto model = compile_model(two_convs(), DwMode::Native, false);
    const auto v = variant(128, 4 * kKiB, ParallelMode::OutputParallel);
    auto stream = generate_command_stream(model.artifacts[0], v);
    ASSERT_TRUE(validate_stream(stream).empty());
    auto far = stream;
    for (auto& u : far.units) {
        for (auto& w : u.regs) {
            if (w.reg == Reg::OutAddr) w.value = uint32_t(v.sram_bytes - 8);
        }
    }
    EXPECT_FALSE(validate_stream(far).empty());
    auto bad = stream;
    for (auto& u : bad.units) {
        for (auto& w : u.regs) {
            if (w.reg == Reg::DmaTensor) w.value = 99;
        }
    }
    EXPECT_FALSE(validate_stream(bad).empty());
}

TEST(Artifact, DeterministicAndVariantIndependent) {
    const Graph g = build_mobilenet_v1_fixture();
    const auto a = compile_model(g, DwMode::Native, true);
    const auto b = compile_model(g, DwMode::Native, true);
    ASSERT_EQ(a.artifacts.size(), b.artifacts.size());
    for (size_t i = 0; i < a.artifacts.size(); ++i) {
        EXPECT_EQ(artifact_to_json(a.artifacts[i]).dump(), artifact_to_json(b.artifacts[i]).dump());
    }
    // Streams for P=64 and P=128 come from the same artifact objects.
    const auto s64 = generate_streams(a.artifacts, variant(64, 256 * kMiB, ParallelMode::OutputParallel));
    const auto s128 = generate_streams(a.artifacts, variant(128, 256 * kMiB, ParallelMode::OutputParallel));
    EXPECT_EQ(s64.size(), s128.size());
    EXPECT_EQ(a.artifacts, b.artifacts);
}

TEST(Artifact, JsonRoundTripReproducesOps) {
    std::mt19937_64 rng(13);
    for (int i = 0; i < 200; ++i) {
        const Graph g = dt::random_graph(rng);
        for (const auto& a : compile_model(g, DwMode::Native, true).artifacts) {
            const auto back = artifact_from_json(nlohmann::json::parse(artifact_to_json(a).dump()));
            ASSERT_EQ(back, a);
        }
    }
}

TEST(Artifact, WeightReferenceOutsideBlobIsRejected) {
    Graph g = two_convs();
    const auto pg = partition(g, annotate(g, DwMode::Native), false);
    g.weights().resize(10);
    EXPECT_THROW(emit_subgraph_artifact(pg.subgraphs[0], g), Error);
}

TEST(Stream, JsonRoundTrip) {
    const auto model = compile_model(build_mnist_fixture(), DwMode::Native, true);
    for (const auto& s : generate_streams(model.artifacts, variant(64, 512 * kKiB, ParallelMode::InputParallel))) {
        EXPECT_EQ(stream_from_json(nlohmann::json::parse(stream_to_json(s).dump())), s);
    }
    EXPECT_EQ(stream_file_name(4), "stream_4.json");
    EXPECT_EQ(artifact_file_name(4), "subgraph_4.json");
}

TEST(Stream, OpcodeAndRegisterNamesRoundTrip) {
    for (size_t i = 0; i < kOpcodeCount; ++i) {
        const auto op = static_cast<Opcode>(i);
        EXPECT_EQ(parse_mnemonic(mnemonic(op)), op);
    }
    EXPECT_STREQ(mnemonic(Opcode::Conv), "OP_CONV");
    EXPECT_STREQ(mnemonic(Opcode::DepthConv), "OP_DEPTH_CONV");
}
