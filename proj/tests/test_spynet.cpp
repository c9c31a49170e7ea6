#include <gtest/gtest.h>

#include <cstring>

#include "spyflow/binary_io.hpp"
#include "spyflow/checkpoint.hpp"
#include "spyflow/pyramid.hpp"
#include "spyflow/spynet.hpp"
#include "support.hpp"

using namespace spyflow;
using spyflow::testing::random_flow;
using spyflow::testing::random_tensor;

namespace {

PyramidModel fresh_model(int levels, std::uint64_t seed) {
    PyramidModel m;
    for (int k = 0; k < levels; ++k) m.networks.push_back(LevelNetwork::fresh(seed + k));
    return m;
}

void zero_final_layer(LevelNetwork& net) {
    net.layers.back().weights.fill(0.0f);
    net.layers.back().bias.fill(0.0f);
}

// Biases shifted so the fresh network produces non-trivial flow.
LevelNetwork lively(std::uint64_t seed) {
    LevelNetwork net = LevelNetwork::fresh(seed);
    std::mt19937_64 rng(seed);
    for (auto& layer : net.layers) layer.bias = random_tensor<float>(layer.bias.shape(), rng, -0.2, 0.2);
    return net;
}

}  // namespace

TEST(ParamCount, LevelAndModel) {
    EXPECT_EQ(LevelNetwork::zeros().param_count(), 240050u);
    EXPECT_EQ(kLevelParamCount, 240050u);
    const ParamCounts counts = count_params(fresh_model(5, 1));
    ASSERT_EQ(counts.per_level.size(), 5u);
    for (auto c : counts.per_level) EXPECT_EQ(c, 240050u);
    EXPECT_EQ(counts.total, 1200250u);
    EXPECT_EQ(LevelNetwork::zeros().layers[0].param_count(), 8u * 32 * 49 + 32);
    EXPECT_EQ(LevelNetwork::zeros().layers[0].param_count(), 12576u);
}

TEST(LevelNetwork, FreshInitBounds) {
    const LevelNetwork net = LevelNetwork::fresh(3);
    for (int l = 0; l < kLevelLayers; ++l) {
        const double bound = 1.0 / std::sqrt(kLevelChannels[l] * 49.0);
        double max_abs = 0.0;
        for (float w : net.layers[l].weights.data()) max_abs = std::max(max_abs, std::abs(static_cast<double>(w)));
        EXPECT_LE(max_abs, bound);
        EXPECT_GT(max_abs, 0.9 * bound);
        for (float b : net.layers[l].bias.data()) EXPECT_EQ(b, 0.0f);
    }
    EXPECT_EQ(LevelNetwork::fresh(3), net);
    EXPECT_FALSE(LevelNetwork::fresh(4) == net);
}

TEST(LevelNetwork, FlattenRoundTrip) {
    const LevelNetwork net = lively(5);
    const auto flat = net.flatten();
    ASSERT_EQ(flat.size(), kLevelParamCount);
    LevelNetwork back = LevelNetwork::zeros();
    back.unflatten(flat);
    EXPECT_EQ(back, net);
    EXPECT_THROW(back.unflatten(std::vector<float>(10)), ShapeError);
}

TEST(LevelForward, ZeroFinalLayerGivesZeroResidual) {
    LevelNetwork net = lively(6);
    zero_final_layer(net);
    std::mt19937_64 rng(6);
    const FlowField out = level_forward(net, random_tensor<float>({3, 12, 16}, rng), random_tensor<float>({3, 12, 16}, rng),
                                        random_flow<float>(12, 16, rng));
    for (float v : out.tensor().data()) EXPECT_EQ(v, 0.0f);
}

TEST(LevelForward, OutputShapeAndErrors) {
    const LevelNetwork net = lively(7);
    std::mt19937_64 rng(7);
    for (auto [h, w] : {std::pair{1, 1}, std::pair{5, 9}, std::pair{24, 32}}) {
        const FlowField out = level_forward(net, random_tensor<float>({3, h, w}, rng), random_tensor<float>({3, h, w}, rng),
                                            random_flow<float>(h, w, rng));
        EXPECT_EQ(out.height(), h);
        EXPECT_EQ(out.width(), w);
        EXPECT_TRUE(out.tensor().all_finite());
    }
    EXPECT_THROW(level_forward(net, Tensor({3, 4, 4}), Tensor({3, 4, 5}), FlowField(4, 4)), ShapeError);
    EXPECT_THROW(level_forward(net, Tensor({3, 4, 4}), Tensor({3, 4, 4}), FlowField(4, 5)), ShapeError);
}

TEST(LevelForward, StackOrder) {
    std::mt19937_64 rng(8);
    const Tensor a = random_tensor<float>({3, 2, 3}, rng);
    const Tensor b = random_tensor<float>({3, 2, 3}, rng);
    const FlowField f = random_flow<float>(2, 3, rng);
    const Tensor s = stack_level_input(a, b, f);
    ASSERT_EQ(s.channels(), 8);
    for (int y = 0; y < 2; ++y) {
        for (int x = 0; x < 3; ++x) {
            for (int c = 0; c < 3; ++c) {
                EXPECT_EQ(s.at(c, y, x), a.at(c, y, x));
                EXPECT_EQ(s.at(3 + c, y, x), b.at(c, y, x));
            }
            EXPECT_EQ(s.at(6, y, x), f.u(x, y));
            EXPECT_EQ(s.at(7, y, x), f.v(x, y));
        }
    }
}

TEST(LevelForward, FloatMatchesDouble) {
    const LevelNetwork net = lively(9);
    std::mt19937_64 rng(9);
    const Tensor input = random_tensor<float>({8, 10, 12}, rng);
    const FlowField f = run_level(net, input);
    const FlowFieldD d = run_level(net.cast<double>(), input.cast<double>());
    for (std::size_t i = 0; i < f.tensor().size(); ++i) EXPECT_NEAR(f.tensor()[i], d.tensor()[i], 1e-4);
}

TEST(Infer, ZeroFinalLayersGiveZeroFlow) {
    PyramidModel model = fresh_model(3, 10);
    for (auto& net : model.networks) zero_final_layer(net);
    std::mt19937_64 rng(10);
    const FlowField flow = infer(model, random_tensor<float>({3, 16, 24}, rng), random_tensor<float>({3, 16, 24}, rng));
    for (float v : flow.tensor().data()) EXPECT_EQ(v, 0.0f);
}

TEST(Infer, FiveLevelResolutionsAt384x512) {
    PyramidModel model;
    for (int k = 0; k < 5; ++k) model.networks.push_back(lively(20 + k));
    std::mt19937_64 rng(11);
    InferenceTrace trace;
    const FlowField flow =
        infer(model, random_tensor<float>({3, 384, 512}, rng), random_tensor<float>({3, 384, 512}, rng), &trace);
    ASSERT_EQ(trace.flows.size(), 5u);
    const int expected[5][2] = {{24, 32}, {48, 64}, {96, 128}, {192, 256}, {384, 512}};
    for (int k = 0; k < 5; ++k) {
        EXPECT_EQ(trace.flows[k].height(), expected[k][0]);
        EXPECT_EQ(trace.flows[k].width(), expected[k][1]);
    }
    EXPECT_EQ(flow, trace.flows.back());
    EXPECT_TRUE(flow.tensor().all_finite());
}

TEST(Infer, SixLevelsReuseFinestNetworkAt448x1024) {
    PyramidModel model;
    for (int k = 0; k < 5; ++k) model.networks.push_back(lively(30 + k));
    model.inference_levels = 6;
    EXPECT_EQ(&model.network_for_level(5), &model.networks[4]);
    std::mt19937_64 rng(12);
    InferenceTrace trace;
    const FlowField flow =
        infer(model, random_tensor<float>({3, 448, 1024}, rng), random_tensor<float>({3, 448, 1024}, rng), &trace);
    EXPECT_EQ(flow.height(), 448);
    EXPECT_EQ(flow.width(), 1024);
    ASSERT_EQ(trace.flows.size(), 6u);
    EXPECT_EQ(trace.flows[0].height(), 14);
    EXPECT_EQ(trace.flows[0].width(), 32);
    EXPECT_TRUE(flow.tensor().all_finite());
}

TEST(Infer, IndivisibleSizeSuggestsPadding) {
    const PyramidModel model = fresh_model(3, 13);
    try {
        infer(model, Tensor({3, 30, 41}), Tensor({3, 30, 41}));
        FAIL() << "expected ShapeError";
    } catch (const ShapeError& e) {
        EXPECT_NE(std::string(e.what()).find("32x44"), std::string::npos) << e.what();
    }
}

TEST(Infer, InferenceLevelsBelowStoredRejected) {
    PyramidModel model = fresh_model(3, 14);
    model.inference_levels = 2;
    EXPECT_THROW(model.validate(), ShapeError);
    EXPECT_THROW(PyramidModel{}.validate(), ShapeError);
}

TEST(Infer, TelescopingSumOfResiduals) {
    PyramidModel model;
    for (int k = 0; k < 4; ++k) model.networks.push_back(lively(40 + k));
    std::mt19937_64 rng(15);
    InferenceTrace trace;
    const FlowField flow =
        infer(model, random_tensor<float>({3, 32, 48}, rng), random_tensor<float>({3, 32, 48}, rng), &trace);
    FlowFieldD total(32, 48);
    for (std::size_t k = 0; k < trace.residuals.size(); ++k) {
        FlowFieldD r = trace.residuals[k].cast<double>();
        for (std::size_t up = k + 1; up < trace.residuals.size(); ++up) r = upsample_flow(r);
        for (std::size_t i = 0; i < r.tensor().size(); ++i) total.tensor()[i] += r.tensor()[i];
    }
    double max_abs = 0.0;
    for (std::size_t i = 0; i < flow.tensor().size(); ++i) {
        EXPECT_NEAR(flow.tensor()[i], total.tensor()[i], 1e-5);
        max_abs = std::max(max_abs, std::abs(total.tensor()[i]));
    }
    EXPECT_GT(max_abs, 1e-3);  // the check is not vacuous
}

TEST(Infer, Deterministic) {
    PyramidModel model;
    for (int k = 0; k < 3; ++k) model.networks.push_back(lively(50 + k));
    std::mt19937_64 rng(16);
    const Tensor a = random_tensor<float>({3, 24, 32}, rng);
    const Tensor b = random_tensor<float>({3, 24, 32}, rng);
    EXPECT_EQ(infer(model, a, b), infer(model, a, b));
}

TEST(Checkpoint, SaveLoadSaveIdentical) {
    PyramidModel model;
    for (int k = 0; k < 5; ++k) model.networks.push_back(lively(60 + k));
    spyflow::testing::TempDir dir("ckpt");
    save_checkpoint(model, dir / "a.spyn");
    const PyramidModel loaded = load_checkpoint(dir / "a.spyn");
    ASSERT_EQ(loaded.networks.size(), 5u);
    for (int k = 0; k < 5; ++k) EXPECT_EQ(loaded.networks[k], model.networks[k]);
    save_checkpoint(loaded, dir / "b.spyn");
    EXPECT_EQ(read_file_bytes(dir / "a.spyn"), read_file_bytes(dir / "b.spyn"));
}

TEST(Checkpoint, FileSizeFromFormat) {
    // magic + version + level count, then per level a layer count and per
    // layer four shape words and a bias length.
    const std::size_t header = 4 + 4 + 4;
    const std::size_t records = 5 * (4 + 5 * (4 * 4 + 4));
    const std::size_t payload = 5 * 240050 * 4;
    const auto bytes = serialize_checkpoint(fresh_model(5, 1));
    EXPECT_EQ(bytes.size(), header + records + payload);
    EXPECT_EQ(bytes.size(), 4801532u);
    EXPECT_EQ(checkpoint_size(fresh_model(5, 1)), bytes.size());
    EXPECT_EQ(std::memcmp(bytes.data(), "SPYN", 4), 0);
    EXPECT_EQ(read_le_u32(bytes.data() + 4), 1u);
    EXPECT_EQ(read_le_u32(bytes.data() + 8), 5u);
    EXPECT_EQ(read_le_u32(bytes.data() + 12), 5u);
    EXPECT_EQ(read_le_u32(bytes.data() + 16), 32u);
    EXPECT_EQ(read_le_u32(bytes.data() + 20), 8u);
}

TEST(Checkpoint, TruncationNamesMissingBytes) {
    // Cut three bytes out of the final 8-byte bias payload.
    auto bytes = serialize_checkpoint(fresh_model(2, 2));
    const std::size_t payload_offset = bytes.size() - 8;
    bytes.resize(bytes.size() - 3);
    try {
        deserialize_checkpoint(bytes);
        FAIL() << "expected FormatError";
    } catch (const FormatError& e) {
        const std::string what = e.what();
        EXPECT_NE(what.find("offset " + std::to_string(payload_offset)), std::string::npos) << what;
        EXPECT_NE(what.find("needs 8 bytes, 3 missing"), std::string::npos) << what;
    }
}

TEST(Checkpoint, BadMagicVersionAndShape) {
    const auto good = serialize_checkpoint(fresh_model(1, 3));
    auto bad_magic = good;
    bad_magic[0] = 'X';
    try {
        deserialize_checkpoint(bad_magic);
        FAIL();
    } catch (const FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("offset 0"), std::string::npos) << e.what();
        EXPECT_NE(std::string(e.what()).find("SPYN"), std::string::npos) << e.what();
    }
    auto bad_version = good;
    bad_version[4] = 2;
    try {
        deserialize_checkpoint(bad_version);
        FAIL();
    } catch (const FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("offset 4"), std::string::npos) << e.what();
        EXPECT_NE(std::string(e.what()).find("expected 1"), std::string::npos) << e.what();
    }
    auto bad_shape = good;
    bad_shape[16] = 31;  // first layer output channels
    try {
        deserialize_checkpoint(bad_shape);
        FAIL();
    } catch (const FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("offset 16"), std::string::npos) << e.what();
        EXPECT_NE(std::string(e.what()).find("expected 32"), std::string::npos) << e.what();
    }
    auto trailing = good;
    trailing.push_back(0);
    EXPECT_THROW(deserialize_checkpoint(trailing), FormatError);
}

TEST(Checkpoint, MissingFileNamesPath) {
    try {
        load_checkpoint("/nonexistent/model.spyn");
        FAIL();
    } catch (const FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("/nonexistent/model.spyn"), std::string::npos);
    }
}

TEST(FilterGrid, ZeroWeightsAreMidGray) {
    const Tensor grid = first_layer_filters(LevelNetwork::zeros());
    ASSERT_EQ(grid.channels(), 3);
    EXPECT_EQ(grid.height(), 32 * 7 + 31);
    EXPECT_EQ(grid.width(), 3 * 7 + 2);
    for (int row = 0; row < 32; ++row) {
        for (int tile = 0; tile < 3; ++tile) {
            for (int c = 0; c < 3; ++c) {
                for (int t = 0; t < 49; ++t) EXPECT_EQ(grid.at(c, row * 8 + t / 7, tile * 8 + t % 7), 0.5f);
            }
        }
    }
    EXPECT_EQ(grid.at(0, 7, 0), 1.0f);  // gap
}

TEST(FilterGrid, RandomWeightsInUnitRange) {
    const Tensor grid = first_layer_filters(LevelNetwork::fresh(70));
    EXPECT_TRUE(grid.all_finite());
    float lo = 1.0f, hi = 0.0f;
    for (float v : grid.data()) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    EXPECT_EQ(lo, 0.0f);
    EXPECT_EQ(hi, 1.0f);
}
