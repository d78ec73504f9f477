#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "restkv/smoothing.hpp"
#include "support/oracles.hpp"

using namespace restkv;
namespace rt = restkv::testing;

namespace {

// Closed form of the recursion: (1-a)^(T-1) x_0 + sum_{t>=1} a (1-a)^(T-1-t) x_t.
double unrolled_ema(const std::vector<double>& x, double a) {
    const std::size_t T = x.size();
    double total = std::pow(1.0 - a, static_cast<double>(T - 1)) * x[0];
    for (std::size_t t = 1; t < T; ++t) total += a * std::pow(1.0 - a, static_cast<double>(T - 1 - t)) * x[t];
    return total;
}

ImportanceMatrix matrix_of(std::size_t rows, std::size_t cols, std::vector<double> data) {
    return {Matrix(rows, cols, std::move(data)), {}};
}

SmoothedScores unpinned(std::vector<double> s) { return SmoothedScores::with_pinned_tail(std::move(s), 0); }

SmoothingConfig config(double alpha, double beta, std::size_t window) {
    SmoothingConfig c;
    c.alpha = alpha;
    c.beta = beta;
    c.window = window;
    return c;
}

}  // namespace

TEST(Config, Validation) {
    EXPECT_NO_THROW(SmoothingConfig{}.validate());
    EXPECT_THROW(config(0.0, 2000, 32).validate(), DomainError);
    EXPECT_THROW(config(1.5, 2000, 32).validate(), DomainError);
    EXPECT_THROW(config(0.3, 0.0, 32).validate(), DomainError);
    EXPECT_THROW(config(0.3, 2000, 31).validate(), DomainError);
    EXPECT_THROW(config(0.3, 2000, 0).validate(), DomainError);
}

TEST(Ema, ConstantSeriesIsFixedPoint) {
    const std::vector<double> c(7, 0.123456789);
    for (double a : {0.01, 0.3, 0.77, 1.0}) EXPECT_EQ(ema(c, a), 0.123456789);
}

TEST(Ema, AlphaOneIsLastElement) {
    const std::vector<double> x{5.0, -2.0, 9.5};
    EXPECT_EQ(ema(x, 1.0), 9.5);
}

TEST(Ema, HandUnrolled) {
    const std::vector<double> x{1.0, 3.0};
    EXPECT_DOUBLE_EQ(ema(x, 0.5), 2.0);
    const std::vector<double> single{4.0};
    EXPECT_EQ(ema(single, 0.3), 4.0);
    EXPECT_THROW(ema(std::vector<double>{}, 0.3), DomainError);
    EXPECT_THROW(ema(x, 0.0), DomainError);
}

TEST(Ema, MatchesUnrolledRecursion) {
    std::mt19937_64 rng(201);
    std::uniform_real_distribution<double> u(0.0, 5.0), au(0.05, 0.95);
    for (int t = 0; t < 100; ++t) {
        std::vector<double> x(1 + t % 40);
        for (double& v : x) v = u(rng);
        const double a = au(rng);
        EXPECT_NEAR(ema(x, a), unrolled_ema(x, a), 1e-12);
    }
}

TEST(TemporalSmooth, ConstantColumns) {
    std::vector<double> data;
    for (int t = 0; t < 4; ++t)
        for (int n = 0; n < 9; ++n) data.push_back(0.5 + n);
    const SmoothedScores s = temporal_smooth(matrix_of(4, 9, data), config(0.3, 2000, 4));
    for (std::size_t n = 0; n < 5; ++n) {
        EXPECT_FALSE(s.pinned[n]);
        EXPECT_EQ(s.scores[n], 0.5 + static_cast<double>(n));
    }
    for (std::size_t n = 5; n < 9; ++n) EXPECT_TRUE(s.pinned[n]);
}

TEST(TemporalSmooth, WindowOneShortOfCache) {
    std::mt19937_64 rng(202);
    const SmoothedScores s =
        temporal_smooth({rt::random_matrix(rng, 4, 5), {}}, config(0.3, 2000, 4));
    EXPECT_EQ(s.pinned_count(), 4u);
    EXPECT_FALSE(s.pinned[0]);
}

TEST(TemporalSmooth, MatchesUnrolledRecursion) {
    std::mt19937_64 rng(203);
    std::uniform_real_distribution<double> u(0.0, 2.0);
    std::vector<double> data(4 * 12);
    for (double& v : data) v = u(rng);
    const ImportanceMatrix im = matrix_of(4, 12, data);
    const SmoothedScores s = temporal_smooth(im, config(0.3, 2000, 4));
    for (std::size_t n = 0; n < 8; ++n) {
        std::vector<double> col;
        for (std::size_t t = 0; t < 4; ++t) col.push_back(im.scores(t, n));
        EXPECT_NEAR(s.scores[n], unrolled_ema(col, 0.3), 1e-12);
    }
    EXPECT_EQ(s.pinned_count(), 4u);
}

TEST(TemporalSmooth, AllPinnedWhenCacheFitsWindow) {
    const SmoothedScores s = temporal_smooth(matrix_of(3, 3, std::vector<double>(9, 1.0)), config(0.3, 2000, 4));
    EXPECT_EQ(s.pinned_count(), 3u);
}

TEST(TemporalSmooth, RejectsWrongRowCount) {
    EXPECT_THROW(temporal_smooth(matrix_of(2, 10, std::vector<double>(20, 1.0)), config(0.3, 2000, 4)),
                 DomainError);
}

TEST(SpatialParams, CentroidTable) {
    const SpatialParams zero = spatial_params_from_centroids(1000.0, 1000.0, 2000.0);
    EXPECT_EQ(zero.w_s, 1u);
    EXPECT_EQ(zero.gamma_shift, 1);
    const SpatialParams fwd = spatial_params_from_centroids(3500.0, 1000.0, 2000.0);
    EXPECT_EQ(fwd.w_s, 3u);
    EXPECT_EQ(fwd.gamma_shift, 1);
    const SpatialParams back = spatial_params_from_centroids(1000.0, 3500.0, 2000.0);
    EXPECT_EQ(back.w_s, 3u);
    EXPECT_EQ(back.gamma_shift, -1);
}

TEST(SpatialParams, IdenticalRowsGiveZeroDrift) {
    std::vector<double> data;
    for (int t = 0; t < 4; ++t)
        for (int n = 0; n < 10; ++n) data.push_back(n == 3 || n == 7 ? 2.0 : 1.0);
    const SpatialParams sp = spatial_params(matrix_of(4, 10, data), 2, config(0.3, 2000, 4));
    EXPECT_DOUBLE_EQ(sp.d_front, 5.0);
    EXPECT_DOUBLE_EQ(sp.d_rear, 5.0);
    EXPECT_EQ(sp.w_s, 1u);
    EXPECT_EQ(sp.gamma_shift, 1);
}

TEST(SpatialParams, DriftFromFrontToRear) {
    // Front rows peak at keys 0,1 (mean 0.5), rear rows at 8,9 (mean 8.5).
    std::vector<double> data(4 * 10, 0.0);
    for (std::size_t t = 0; t < 2; ++t) data[t * 10 + 0] = data[t * 10 + 1] = 1.0;
    for (std::size_t t = 2; t < 4; ++t) data[t * 10 + 8] = data[t * 10 + 9] = 1.0;
    const SpatialParams sp = spatial_params(matrix_of(4, 10, data), 2, config(0.3, 2.0, 4));
    EXPECT_DOUBLE_EQ(sp.d_front, 0.5);
    EXPECT_DOUBLE_EQ(sp.d_rear, 8.5);
    EXPECT_EQ(sp.w_s, 9u);
    EXPECT_EQ(sp.gamma_shift, -3);
}

TEST(SpatialSmooth, SingletonWindowIsIdentity) {
    const SmoothedScores in = unpinned({0.3, 1.7, -2.0, 4.0});
    EXPECT_EQ(spatial_smooth(in, {0, 0, 1, 0}).scores, in.scores);
}

TEST(SpatialSmooth, ConstantScoresUnchanged) {
    const SmoothedScores in = unpinned(std::vector<double>(9, 0.75));
    for (std::size_t w : {1u, 3u, 5u, 9u})
        for (std::int64_t g : {-3, 0, 1, 4}) EXPECT_EQ(spatial_smooth(in, {0, 0, w, g}).scores, in.scores);
}

TEST(SpatialSmooth, HandMovingAverage) {
    const SmoothedScores out = spatial_smooth(unpinned({1, 2, 3, 4, 5}), {0, 0, 3, 0});
    EXPECT_DOUBLE_EQ(out.scores[2], 3.0);
    EXPECT_DOUBLE_EQ(out.scores[0], 1.5);
    EXPECT_DOUBLE_EQ(out.scores[4], 4.5);
}

TEST(SpatialSmooth, ShiftedWindow) {
    const SmoothedScores out = spatial_smooth(unpinned({1, 2, 3, 4, 5}), {0, 0, 3, 1});
    EXPECT_DOUBLE_EQ(out.scores[0], 2.0);  // keys 0..2
    EXPECT_DOUBLE_EQ(out.scores[3], 4.5);  // keys 3..4
    EXPECT_DOUBLE_EQ(out.scores[4], 5.0);  // key 4 only
}

TEST(SpatialSmooth, PinnedNeighboursExcluded) {
    const SmoothedScores in = SmoothedScores::with_pinned_tail({1, 2, 3, 4, 100}, 1);
    const SmoothedScores out = spatial_smooth(in, {0, 0, 3, 0});
    EXPECT_DOUBLE_EQ(out.scores[3], 3.5);
    EXPECT_TRUE(out.pinned[4]);
}

TEST(SpatialSmooth, EmptyWindowKeepsScore) {
    const SmoothedScores in = SmoothedScores::with_pinned_tail({1, 2, 3, 4}, 2);
    const SmoothedScores out = spatial_smooth(in, {0, 0, 1, 2});
    EXPECT_EQ(out.scores[0], 1.0);  // only pinned key 2 in range
    EXPECT_EQ(out.scores[1], 2.0);  // window past the end after pinned key 3
    EXPECT_THROW(spatial_smooth(in, {0, 0, 2, 0}), DomainError);
}

TEST(SelectTopB, NoEvictionWhenBudgetCoversAll) {
    const EvictionDecision d = select_top_b(unpinned({3, 1, 2}), 5);
    EXPECT_EQ(d.kept, (std::vector<std::size_t>{0, 1, 2}));
}

TEST(SelectTopB, HandExamples) {
    EXPECT_EQ(select_top_b(unpinned({0.1, 0.9, 0.5}), 1).kept, (std::vector<std::size_t>{1}));
    EXPECT_EQ(select_top_b(unpinned({0.4, 0.4, 0.4, 0.4}), 2).kept, (std::vector<std::size_t>{0, 1}));
}

TEST(SelectTopB, PinnedAlwaysKept) {
    const SmoothedScores s = SmoothedScores::with_pinned_tail({9, 8, 7, 6, 5, 4}, 2);
    EXPECT_EQ(select_top_b(s, 3).kept, (std::vector<std::size_t>{0, 4, 5}));
    EXPECT_EQ(select_top_b(s, 2).kept, (std::vector<std::size_t>{4, 5}));
}

TEST(SelectTopB, BudgetBelowPinnedIsRejected) {
    const SmoothedScores s = SmoothedScores::with_pinned_tail({1, 2, 3, 4, 5}, 3);
    try {
        select_top_b(s, 2);
        FAIL() << "expected BudgetError";
    } catch (const BudgetError& e) {
        EXPECT_EQ(e.minimum_budget(), 3u);
    }
    EXPECT_THROW(select_top_b(s, 0), BudgetError);
}

TEST(SelectTopB, NestedAndScaleInvariant) {
    std::mt19937_64 rng(204);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 0; t < 100; ++t) {
        std::vector<double> v(40);
        for (double& x : v) x = u(rng);
        const SmoothedScores s = SmoothedScores::with_pinned_tail(v, 8);
        std::vector<double> scaled = v;
        for (double& x : scaled) x *= 37.5;
        std::vector<std::size_t> prev;
        for (std::size_t b = 8; b <= 40; b += 4) {
            const auto kept = select_top_b(s, b).kept;
            EXPECT_EQ(kept.size(), b);
            EXPECT_TRUE(std::includes(kept.begin(), kept.end(), prev.begin(), prev.end()));
            EXPECT_EQ(kept, select_top_b(SmoothedScores::with_pinned_tail(scaled, 8), b).kept);
            prev = kept;
        }
    }
}

TEST(TopK, TiesFavourLowerIndex) {
    const std::vector<double> v{1, 3, 3, 2, 3};
    EXPECT_EQ(top_k_indices(v, 2), (std::vector<std::size_t>{1, 2}));
    EXPECT_EQ(top_k_indices(v, 9).size(), 5u);
}
