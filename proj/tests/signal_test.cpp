#include <gtest/gtest.h>

#include <cmath>
#include <algorithm>
#include <numbers>

#include "ecglink/error.hpp"
#include "ecglink/signal.hpp"

namespace {

using namespace ecglink::signal;
using ecglink::Rng;

EcgRecord make_record(std::vector<double> samples, double rate) {
    return EcgRecord{"s1", "d1", rate, std::move(samples)};
}

std::vector<double> random_values(Rng& rng, std::size_t n, double lo = -3.0, double hi = 3.0) {
    std::vector<double> v(n);
    for (double& x : v) {
        x = rng.uniform(lo, hi);
    }
    return v;
}

// ---------------------------------------------------------------- resample

TEST(Resample, LinearRampDoublingRate) {
    const EcgRecord out = resample(make_record({0, 1, 2, 3}, 2.0), 4.0);
    EXPECT_EQ(out.sampling_rate_hz, 4.0);
    EXPECT_EQ(out.samples, (std::vector<double>{0, 0.5, 1, 1.5, 2, 2.5, 3}));
}

TEST(Resample, SameRateIsIdentity) {
    Rng rng(1);
    const auto v = random_values(rng, 37);
    EXPECT_EQ(resample(make_record(v, 360.0), 360.0).samples, v);
}

TEST(Resample, SineDownsampledMatchesAnalyticFunction) {
    std::vector<double> v(5000);
    for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] = std::sin(2.0 * std::numbers::pi * 5.0 * static_cast<double>(i) / 1000.0);
    }
    for (double target : {250.0, 300.0, 128.0}) {
        const EcgRecord out = resample(make_record(v, 1000.0), target);
        double worst = 0.0;
        for (std::size_t k = 0; k < out.samples.size(); ++k) {
            const double t = static_cast<double>(k) / target;
            worst = std::max(worst, std::abs(out.samples[k] - std::sin(2.0 * std::numbers::pi * 5.0 * t)));
        }
        EXPECT_LE(worst, 1e-3) << target;
    }
}

TEST(Resample, DurationPreservedWithinOneOutputSample) {
    Rng rng(2);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 2 + rng.below(3000);
        const double src = rng.uniform(100.0, 1000.0);
        const double dst = rng.uniform(100.0, 1000.0);
        const EcgRecord out = resample(make_record(random_values(rng, n), src), dst);
        const double in_duration = static_cast<double>(n - 1) / src;
        const double out_duration = static_cast<double>(out.samples.size() - 1) / dst;
        EXPECT_LE(out_duration, in_duration + 1e-9);
        EXPECT_LT(in_duration - out_duration, 1.0 / dst);
    }
}

TEST(Resample, UpThenDownReproducesLinearSignal) {
    std::vector<double> v(101);
    for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] = 0.25 * static_cast<double>(i) - 3.0;
    }
    const EcgRecord up = resample(make_record(v, 125.0), 500.0);
    const EcgRecord back = resample(up, 125.0);
    ASSERT_EQ(back.samples.size(), v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        EXPECT_NEAR(back.samples[i], v[i], 1e-12);
    }
}

TEST(Resample, InvalidTargetRate) {
    EXPECT_THROW(resample(make_record({1, 2}, 100.0), 0.0), ecglink::ParameterError);
    EXPECT_THROW(resample(make_record({1, 2}, 100.0), -5.0), ecglink::ParameterError);
    EXPECT_THROW(resample(make_record({}, 100.0), 250.0), ecglink::InputError);
}

// ---------------------------------------------------------------- minmax_normalize

TEST(MinmaxNormalize, SimpleRamp) {
    const auto n = minmax_normalize(std::vector<double>{2, 4, 6});
    EXPECT_EQ(n.values, (std::vector<double>{0, 0.5, 1}));
    EXPECT_FALSE(n.flat);
}

TEST(MinmaxNormalize, UnitRangeInputUnchanged) {
    const std::vector<double> v{0.0, 0.25, 1.0, 0.7};
    EXPECT_EQ(minmax_normalize(v).values, v);
}

TEST(MinmaxNormalize, FlatInputFlagged) {
    const auto n = minmax_normalize(std::vector<double>{5, 5, 5});
    EXPECT_EQ(n.values, (std::vector<double>{0, 0, 0}));
    EXPECT_TRUE(n.flat);
}

TEST(MinmaxNormalize, EmptyThrows) {
    EXPECT_THROW(minmax_normalize(std::vector<double>{}), ecglink::InputError);
}

TEST(MinmaxNormalize, IdempotentAndAffineInvariant) {
    Rng rng(3);
    for (int trial = 0; trial < 200; ++trial) {
        const auto x = random_values(rng, 2 + rng.below(300));
        const auto once = minmax_normalize(x).values;
        const auto twice = minmax_normalize(once).values;
        const double a = rng.uniform(0.01, 50.0), b = rng.uniform(-10.0, 10.0);
        std::vector<double> affine(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) {
            affine[i] = a * x[i] + b;
        }
        const auto moved = minmax_normalize(affine).values;
        for (std::size_t i = 0; i < x.size(); ++i) {
            EXPECT_NEAR(twice[i], once[i], 1e-9);
            EXPECT_NEAR(moved[i], once[i], 1e-9);
        }
    }
}

TEST(MinmaxNormalize, OrderPreserved) {
    Rng rng(4);
    const auto x = random_values(rng, 500);
    const auto y = minmax_normalize(x).values;
    for (std::size_t i = 0; i < x.size(); ++i) {
        for (std::size_t j = i + 1; j < std::min(x.size(), i + 20); ++j) {
            if (x[i] < x[j]) {
                EXPECT_LE(y[i], y[j]);
            }
        }
    }
}

// ---------------------------------------------------------------- segment

TEST(Segment, FloorArithmetic) {
    Rng rng(5);
    EXPECT_EQ(segment(make_record(random_values(rng, 4500), 250.0), 2000).size(), 2u);
    EXPECT_EQ(segment(make_record(random_values(rng, 2000), 250.0), 2000).size(), 1u);
    EXPECT_TRUE(segment(make_record(random_values(rng, 1999), 250.0), 2000).empty());
}

TEST(Segment, WindowsPartitionThePrefix) {
    Rng rng(6);
    const auto v = random_values(rng, 1037);
    const auto windows = segment(make_record(v, 250.0), 100);
    ASSERT_EQ(windows.size(), 10u);
    for (std::size_t w = 0; w < windows.size(); ++w) {
        EXPECT_EQ(windows[w].offset, w * 100);
        EXPECT_EQ(windows[w].index, w);
        EXPECT_EQ(windows[w].id(), "s1#" + std::to_string(w));
        EXPECT_TRUE(windows[w].label.is_unknown());
        const auto expected = minmax_normalize(std::span(v).subspan(w * 100, 100)).values;
        EXPECT_EQ(windows[w].values, expected);
        const auto [lo, hi] = std::minmax_element(windows[w].values.begin(), windows[w].values.end());
        EXPECT_NEAR(*lo, 0.0, 1e-9);
        EXPECT_NEAR(*hi, 1.0, 1e-9);
    }
    EXPECT_EQ(segment(make_record(v, 250.0), 100).front().values, windows.front().values);
}

TEST(Segment, FlatWindowFlagged) {
    std::vector<double> v(8, 1.0);
    v[5] = 2.0;
    const auto windows = segment(make_record(v, 250.0), 4);
    ASSERT_EQ(windows.size(), 2u);
    EXPECT_TRUE(windows[0].flat);
    EXPECT_FALSE(windows[1].flat);
}

TEST(Segment, TooShortWindowLength) {
    EXPECT_THROW(segment(make_record({1, 2, 3}, 250.0), 1), ecglink::ParameterError);
}

// ---------------------------------------------------------------- augment

Window random_window(Rng& rng, std::size_t n) {
    Window w;
    w.values = minmax_normalize(random_values(rng, n)).values;
    w.subject_id = "s";
    return w;
}

TEST(Augment, IdentitySpecLeavesWindowUnchanged) {
    Rng data(7);
    const Window w = random_window(data, 64);
    Rng rng(1);
    EXPECT_EQ(augment(w, AugmentSpec{}, rng).values, w.values);
}

TEST(Augment, FlipIsAnInvolution) {
    Rng data(8);
    const Window w = random_window(data, 64);
    const auto twice = flip_polarity(flip_polarity(w.values));
    for (std::size_t i = 0; i < twice.size(); ++i) {
        EXPECT_NEAR(twice[i], w.values[i], 1e-15);
    }
}

TEST(Augment, OppositeShiftsCancel) {
    Rng data(9);
    const Window w = random_window(data, 64);
    for (std::int64_t k : {1, 5, 63, 64, 130}) {
        EXPECT_EQ(circular_shift(circular_shift(w.values, k), -k), w.values);
    }
    const auto shifted = circular_shift(w.values, 3);
    EXPECT_EQ(shifted[3], w.values[0]);
}

TEST(Augment, SeededRunsAreBitIdentical) {
    Rng data(10);
    const Window w = random_window(data, 200);
    const AugmentSpec spec{0.05, 0.8, 1.2, 0.5, 20, 77};
    Rng a(spec.seed), b(spec.seed);
    for (int i = 0; i < 5; ++i) {
        EXPECT_EQ(augment(w, spec, a).values, augment(w, spec, b).values);
    }
}

TEST(Augment, OutputStaysInUnitRange) {
    Rng data(11);
    const Window w = random_window(data, 300);
    const AugmentSpec spec{0.3, 0.5, 2.0, 0.5, 100, 0};
    Rng rng(3);
    for (int i = 0; i < 20; ++i) {
        for (double v : augment(w, spec, rng).values) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
        }
    }
}

TEST(Augment, ForcedFlipMatchesPolarityFlip) {
    Rng data(12);
    const Window w = random_window(data, 50);
    AugmentSpec spec;
    spec.flip_prob = 1.0;
    Rng rng(0);
    EXPECT_EQ(augment(w, spec, rng).values, flip_polarity(w.values));
}

TEST(Augment, InvalidSpecRejected) {
    Rng data(13);
    const Window w = random_window(data, 50);
    Rng rng(0);
    AugmentSpec bad_shift;
    bad_shift.max_shift = 50;
    EXPECT_THROW(augment(w, bad_shift, rng), ecglink::ConfigError);
    AugmentSpec bad_scale;
    bad_scale.scale_lo = 2.0;
    bad_scale.scale_hi = 1.0;
    EXPECT_THROW(augment(w, bad_scale, rng), ecglink::ConfigError);
}

}  // namespace
