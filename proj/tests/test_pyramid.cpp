#include <gtest/gtest.h>

#include <algorithm>

#include <cmath>

#include "spyflow/pyramid.hpp"
#include "support.hpp"

using namespace spyflow;
using spyflow::testing::random_flow;
using spyflow::testing::random_tensor;

namespace {

// Straightforward bilinear lookup with border clamping, written independently
// of the library.
double oracle_sample(const Tensor& img, int c, double x, double y) {
    x = std::clamp(x, 0.0, img.width() - 1.0);
    y = std::clamp(y, 0.0, img.height() - 1.0);
    const int x0 = static_cast<int>(std::floor(x));
    const int y0 = static_cast<int>(std::floor(y));
    const int x1 = std::min(x0 + 1, img.width() - 1);
    const int y1 = std::min(y0 + 1, img.height() - 1);
    const double fx = x - x0, fy = y - y0;
    return (1 - fy) * ((1 - fx) * img.at(c, y0, x0) + fx * img.at(c, y0, x1)) +
           fy * ((1 - fx) * img.at(c, y1, x0) + fx * img.at(c, y1, x1));
}

}  // namespace

TEST(ImagePyramid, ConstantImageStaysConstant) {
    const Tensor img({3, 32, 48}, 0.3f);
    const auto pyr = build_image_pyramid(img, 4);
    ASSERT_EQ(pyr.size(), 4u);
    for (const auto& level : pyr) {
        for (float v : level.data()) EXPECT_FLOAT_EQ(v, 0.3f);
    }
}

TEST(ImagePyramid, FiveLevelsFrom384x512) {
    const auto pyr = build_image_pyramid(Tensor({3, 384, 512}), 5);
    ASSERT_EQ(pyr.size(), 5u);
    const int expected[5][2] = {{24, 32}, {48, 64}, {96, 128}, {192, 256}, {384, 512}};
    for (int k = 0; k < 5; ++k) {
        EXPECT_EQ(pyr[k].height(), expected[k][0]);
        EXPECT_EQ(pyr[k].width(), expected[k][1]);
    }
}

TEST(ImagePyramid, CheckerboardAveragesToHalf) {
    const Tensor board({1, 2, 2}, std::vector<float>{0.0f, 1.0f, 1.0f, 0.0f});
    const Tensor down = downsample_image(board);
    ASSERT_EQ(down.shape(), (std::vector<int>{1, 1, 1}));
    EXPECT_EQ(down[0], 0.5f);
}

TEST(ImagePyramid, IndivisibleRejectedWithFactor) {
    try {
        build_image_pyramid(Tensor({3, 20, 32}), 4);
        FAIL() << "expected ShapeError";
    } catch (const ShapeError& e) {
        EXPECT_NE(std::string(e.what()).find('8'), std::string::npos) << e.what();
    }
    EXPECT_THROW(downsample_image(Tensor({3, 5, 4})), ShapeError);
}

TEST(ImagePyramid, AreaAveragePreservesChannelMeans) {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 10; ++trial) {
        const Tensor img = random_tensor<float>({3, 16, 24}, rng, 0.0, 1.0);
        const Tensor down = downsample_image(img);
        for (int c = 0; c < 3; ++c) {
            double a = 0.0, b = 0.0;
            for (int y = 0; y < 16; ++y) {
                for (int x = 0; x < 24; ++x) a += img.at(c, y, x);
            }
            for (int y = 0; y < 8; ++y) {
                for (int x = 0; x < 12; ++x) b += down.at(c, y, x);
            }
            EXPECT_NEAR(a / 384.0, b / 96.0, 1e-6);
        }
    }
}

TEST(ImagePyramid, MatchesBlockAverageOracle) {
    std::mt19937_64 rng(2);
    const Tensor img = random_tensor<float>({2, 6, 8}, rng);
    const Tensor down = downsample_image(img);
    for (int c = 0; c < 2; ++c) {
        for (int y = 0; y < 3; ++y) {
            for (int x = 0; x < 4; ++x) {
                const double mean = (static_cast<double>(img.at(c, 2 * y, 2 * x)) + img.at(c, 2 * y, 2 * x + 1) +
                                     img.at(c, 2 * y + 1, 2 * x) + img.at(c, 2 * y + 1, 2 * x + 1)) /
                                    4.0;
                EXPECT_NEAR(down.at(c, y, x), mean, 1e-6);
            }
        }
    }
}

TEST(FlowPyramid, DownsampleExamples) {
    const FlowField zero = downsample_flow(FlowField(8, 8));
    for (float v : zero.tensor().data()) EXPECT_EQ(v, 0.0f);

    const FlowField c = downsample_flow(FlowField(48, 64, 4.0f, -6.0f));
    ASSERT_EQ(c.height(), 24);
    ASSERT_EQ(c.width(), 32);
    for (int y = 0; y < 24; ++y) {
        for (int x = 0; x < 32; ++x) {
            EXPECT_EQ(c.u(x, y), 2.0f);
            EXPECT_EQ(c.v(x, y), -3.0f);
        }
    }
    EXPECT_THROW(downsample_flow(FlowField(7, 8)), ShapeError);
}

TEST(FlowPyramid, BuildRescalesPerLevel) {
    const auto pyr = build_flow_pyramid(FlowField(32, 32, 8.0f, 4.0f), 3);
    ASSERT_EQ(pyr.size(), 3u);
    EXPECT_EQ(pyr[0].u(0, 0), 2.0f);
    EXPECT_EQ(pyr[0].v(3, 3), 1.0f);
    EXPECT_EQ(pyr[1].u(5, 5), 4.0f);
    EXPECT_EQ(pyr[2].u(5, 5), 8.0f);
}

TEST(FlowPyramid, UpsampleExamples) {
    const FlowField zero = upsample_flow(FlowField(3, 5));
    ASSERT_EQ(zero.height(), 6);
    ASSERT_EQ(zero.width(), 10);
    for (float v : zero.tensor().data()) EXPECT_EQ(v, 0.0f);

    const FlowField c = upsample_flow(FlowField(12, 16, 3.0f, -2.0f));
    ASSERT_EQ(c.height(), 24);
    ASSERT_EQ(c.width(), 32);
    for (int y = 0; y < 24; ++y) {
        for (int x = 0; x < 32; ++x) {
            EXPECT_NEAR(c.u(x, y), 6.0f, 1e-6);
            EXPECT_NEAR(c.v(x, y), -4.0f, 1e-6);
        }
    }
    const FlowField shape = upsample_flow(FlowField(24, 32));
    EXPECT_EQ(shape.height(), 48);
    EXPECT_EQ(shape.width(), 64);
}

TEST(FlowPyramid, UpsampleIsCornerAlignedBilinear) {
    std::mt19937_64 rng(3);
    const FlowField f = random_flow<float>(5, 7, rng, -3, 3);
    const FlowField up = upsample_flow(f);
    for (int c = 0; c < 2; ++c) {
        for (int y = 0; y < 10; ++y) {
            for (int x = 0; x < 14; ++x) {
                const double sx = x * 6.0 / 13.0;
                const double sy = y * 4.0 / 9.0;
                EXPECT_NEAR(up.tensor().at(c, y, x), 2.0 * oracle_sample(f.tensor(), c, sx, sy), 1e-5);
            }
        }
    }
    // Corners coincide exactly.
    EXPECT_FLOAT_EQ(up.u(0, 0), 2 * f.u(0, 0));
    EXPECT_FLOAT_EQ(up.v(13, 9), 2 * f.v(6, 4));
}

TEST(FlowPyramid, ConstantRoundTrip) {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<float> dist(-20.0f, 20.0f);
    for (int trial = 0; trial < 20; ++trial) {
        const float u = dist(rng), v = dist(rng);
        const FlowField f(16, 20, u, v);
        const FlowField a = upsample_flow(downsample_flow(f));
        const FlowField b = downsample_flow(upsample_flow(f));
        for (const FlowField* g : {&a, &b}) {
            ASSERT_TRUE(g->same_resolution(f));
            for (int y = 0; y < 16; ++y) {
                for (int x = 0; x < 20; ++x) {
                    EXPECT_NEAR(g->u(x, y), u, 1e-6 * std::max(1.0f, std::abs(u)));
                    EXPECT_NEAR(g->v(x, y), v, 1e-6 * std::max(1.0f, std::abs(v)));
                }
            }
        }
    }
}

TEST(Warp, ZeroFlowIsBitwiseIdentity) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 5; ++trial) {
        const Tensor img = random_tensor<float>({3, 11, 13}, rng, -100, 100);
        EXPECT_EQ(warp(img, FlowField(11, 13)), img);
    }
}

TEST(Warp, IntegerShiftMatchesArrayShift) {
    std::mt19937_64 rng(6);
    const Tensor img = random_tensor<float>({3, 9, 12}, rng);
    const Tensor out = warp(img, FlowField(9, 12, 1.0f, 0.0f));
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < 9; ++y) {
            for (int x = 0; x + 1 < 12; ++x) EXPECT_EQ(out.at(c, y, x), img.at(c, y, x + 1));
        }
    }
    const Tensor out2 = warp(img, FlowField(9, 12, -2.0f, 3.0f));
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y + 3 < 9; ++y) {
            for (int x = 2; x < 12; ++x) EXPECT_EQ(out2.at(c, y, x), img.at(c, y + 3, x - 2));
        }
    }
}

TEST(Warp, HalfPixelOnRampIsNeighbourMean) {
    Tensor ramp({1, 4, 10});
    for (int y = 0; y < 4; ++y) {
        for (int x = 0; x < 10; ++x) ramp.at(0, y, x) = 0.1f * x * x;  // not linear, so the mean is informative
    }
    const Tensor out = warp(ramp, FlowField(4, 10, 0.5f, 0.0f));
    for (int y = 0; y < 4; ++y) {
        for (int x = 0; x + 1 < 10; ++x) {
            EXPECT_NEAR(out.at(0, y, x), 0.5f * (ramp.at(0, y, x) + ramp.at(0, y, x + 1)), 1e-6);
        }
    }
}

TEST(Warp, ClampsToBorder) {
    std::mt19937_64 rng(7);
    const Tensor img = random_tensor<float>({1, 4, 5}, rng);
    const Tensor out = warp(img, FlowField(4, 5, 100.0f, -100.0f));
    for (int y = 0; y < 4; ++y) {
        for (int x = 0; x < 5; ++x) EXPECT_EQ(out.at(0, y, x), img.at(0, 0, 4));
    }
}

TEST(Warp, MatchesBilinearOracle) {
    std::mt19937_64 rng(8);
    const Tensor img = random_tensor<float>({2, 7, 9}, rng);
    const FlowField f = random_flow<float>(7, 9, rng, -4, 4);
    const Tensor out = warp(img, f);
    for (int c = 0; c < 2; ++c) {
        for (int y = 0; y < 7; ++y) {
            for (int x = 0; x < 9; ++x) {
                EXPECT_NEAR(out.at(c, y, x), oracle_sample(img, c, x + f.u(x, y), y + f.v(x, y)), 1e-5);
            }
        }
    }
}

TEST(Warp, ResolutionMismatchRejected) {
    EXPECT_THROW(warp(Tensor({3, 4, 4}), FlowField(4, 5)), ShapeError);
}

TEST(Warp, FlowGradientMatchesFiniteDifferences) {
    for (std::uint64_t seed : {31u, 32u, 33u}) {
        const auto c = spyflow::testing::warp_flow_case(3, 8, 8, seed);
        const auto report = grad_check(c.map, c.point, 1e-4, c.options);
        EXPECT_TRUE(report.passed) << report.summary();
    }
}

TEST(Warp, ImageGradientMatchesFiniteDifferences) {
    const auto c = spyflow::testing::warp_image_case(3, 8, 8, 34);
    const auto report = grad_check(c.map, c.point, 1e-4, c.options);
    EXPECT_TRUE(report.passed) << report.summary();
}

TEST(Resize, FlowValuesScaleWithSize) {
    const FlowField f(10, 20, 2.0f, -3.0f);
    const FlowField r = resize_flow(f, 16, 32);
    ASSERT_EQ(r.height(), 16);
    ASSERT_EQ(r.width(), 32);
    for (int y = 0; y < 16; ++y) {
        for (int x = 0; x < 32; ++x) {
            EXPECT_NEAR(r.u(x, y), 3.2f, 1e-5);
            EXPECT_NEAR(r.v(x, y), -4.8f, 1e-5);
        }
    }
}

TEST(Resize, IdentityAndConstant) {
    std::mt19937_64 rng(9);
    const Tensor img = random_tensor<float>({3, 6, 7}, rng);
    EXPECT_EQ(resize_bilinear(img, 6, 7), img);
    const Tensor c = resize_bilinear(Tensor({3, 5, 5}, 0.25f), 13, 8);
    for (float v : c.data()) EXPECT_FLOAT_EQ(v, 0.25f);
}
