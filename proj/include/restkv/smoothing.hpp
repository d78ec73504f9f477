#pragma once

// Spatial-temporal smoothing of an importance matrix and top-B selection.
//
// Temporal: each key older than the query window is scored by an EMA of its
// column, oldest query first. The most recent `window` keys are pinned and
// always kept.
//
// Spatial: the mean index of each row's top-B keys is compared between the
// front and rear halves of the window. Their drift sets the width and offset
// of a moving average over key positions.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "restkv/errors.hpp"
#include "restkv/indicator.hpp"
#include "restkv/numerics.hpp"

namespace restkv {

struct SmoothingConfig {
    double alpha = 0.3;
    double beta = 2000.0;
    std::size_t window = 32;

    void validate() const {
        if (!(alpha > 0.0 && alpha <= 1.0)) throw DomainError("SmoothingConfig: alpha must be in (0, 1]");
        if (!(beta > 0.0) || !std::isfinite(beta)) throw DomainError("SmoothingConfig: beta must be > 0");
        if (window == 0) throw DomainError("SmoothingConfig: window must be >= 1");
        if (window % 2 != 0)
            throw DomainError("SmoothingConfig: window must be even, got " + std::to_string(window));
    }
};

// Per-key scores. Pinned keys have no score and are always kept; their
// entry in `scores` is unused and held at 0.
struct SmoothedScores {
    std::vector<double> scores;
    std::vector<bool> pinned;

    std::size_t size() const noexcept { return scores.size(); }

    std::size_t pinned_count() const noexcept {
        return static_cast<std::size_t>(std::count(pinned.begin(), pinned.end(), true));
    }

    // Last `pinned_tail` positions pinned.
    static SmoothedScores with_pinned_tail(std::vector<double> scores, std::size_t pinned_tail) {
        SmoothedScores s;
        const std::size_t n = scores.size();
        const std::size_t p = std::min(pinned_tail, n);
        s.pinned.assign(n, false);
        for (std::size_t i = n - p; i < n; ++i) {
            s.pinned[i] = true;
            scores[i] = 0.0;
        }
        s.scores = std::move(scores);
        return s;
    }
};

struct SpatialParams {
    double d_front = 0.0;
    double d_rear = 0.0;
    std::size_t w_s = 1;
    std::int64_t gamma_shift = 0;
};

struct EvictionDecision {
    std::vector<std::size_t> kept;  // strictly increasing
    std::size_t budget = 0;
    std::size_t layer = 0;
    std::size_t head = 0;
};

// EMA(t1..t2) = alpha * I[t2] + (1 - alpha) * EMA(t1..t2-1); EMA(t1..t1) = I[t1].
inline double ema(std::span<const double> series, double alpha) {
    if (series.empty()) throw DomainError("ema: empty series");
    if (!(alpha > 0.0 && alpha <= 1.0)) throw DomainError("ema: alpha must be in (0, 1]");
    if (alpha == 1.0) return series.back();
    // acc + alpha * (x - acc) keeps constant series exactly fixed.
    double acc = series.front();
    for (std::size_t i = 1; i < series.size(); ++i) acc += alpha * (series[i] - acc);
    return acc;
}

inline SmoothedScores temporal_smooth(const ImportanceMatrix& im, const SmoothingConfig& cfg) {
    cfg.validate();
    const std::size_t n_keys = im.keys();
    const std::size_t rows = im.window();
    if (rows != std::min(cfg.window, n_keys)) {
        throw DomainError("temporal_smooth: importance matrix has " + std::to_string(rows) +
                          " query rows, expected " + std::to_string(std::min(cfg.window, n_keys)));
    }
    std::vector<double> scores(n_keys, 0.0);
    if (n_keys > cfg.window) {
        std::vector<double> column(rows);
        for (std::size_t n = 0; n + cfg.window < n_keys; ++n) {
            for (std::size_t t = 0; t < rows; ++t) column[t] = im.scores(t, n);
            scores[n] = ema(column, cfg.alpha);
        }
    }
    return SmoothedScores::with_pinned_tail(std::move(scores), cfg.window);
}

// Indices of the k largest entries, ties toward the lower index.
inline std::vector<std::size_t> top_k_indices(std::span<const double> values, std::size_t k) {
    std::vector<std::size_t> idx(values.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    k = std::min(k, idx.size());
    auto by_score = [&](std::size_t a, std::size_t b) {
        return values[a] > values[b] || (values[a] == values[b] && a < b);
    };
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), by_score);
    idx.resize(k);
    return idx;
}

// Window width and offset from the front/rear centroids. Floors round toward
// -inf, and a zero drift takes the "+1" branch.
inline SpatialParams spatial_params_from_centroids(double d_front, double d_rear, double beta) {
    if (!(beta > 0.0)) throw DomainError("spatial_params: beta must be > 0");
    SpatialParams sp;
    sp.d_front = d_front;
    sp.d_rear = d_rear;
    sp.w_s = 2 * static_cast<std::size_t>(std::floor(std::abs(d_rear - d_front) / beta)) + 1;
    const double diff = d_front - d_rear;
    const auto stepped = static_cast<std::int64_t>(std::floor(diff / beta));
    sp.gamma_shift = diff > 0.0 ? stepped : stepped + 1;
    return sp;
}

inline SpatialParams spatial_params(const ImportanceMatrix& im, std::size_t budget,
                                    const SmoothingConfig& cfg) {
    cfg.validate();
    if (budget == 0) throw DomainError("spatial_params: budget must be >= 1");
    const std::size_t half = im.window() / 2;
    const std::size_t k = std::min(budget, im.keys());
    if (half == 0 || k == 0) return spatial_params_from_centroids(0.0, 0.0, cfg.beta);

    auto centroid = [&](std::size_t first_row) {
        double total = 0.0;
        for (std::size_t t = first_row; t < first_row + half; ++t) {
            for (std::size_t i : top_k_indices(im.scores.row(t), k)) total += static_cast<double>(i);
        }
        return total / static_cast<double>(k * half);
    };
    return spatial_params_from_centroids(centroid(0), centroid(im.window() - half), cfg.beta);
}

// Moving average over [n - w_s/2 + gamma, n + w_s/2 + gamma], restricted to
// scored (non-pinned, in-range) positions and divided by how many were used.
inline SmoothedScores spatial_smooth(const SmoothedScores& scores, const SpatialParams& sp) {
    if (sp.w_s % 2 == 0) throw DomainError("spatial_smooth: window width must be odd");
    SmoothedScores out = scores;
    const auto n_keys = static_cast<std::int64_t>(scores.size());
    const auto half = static_cast<std::int64_t>(sp.w_s / 2);
    for (std::int64_t n = 0; n < n_keys; ++n) {
        if (scores.pinned[static_cast<std::size_t>(n)]) continue;
        const std::int64_t lo = std::max<std::int64_t>(0, n - half + sp.gamma_shift);
        const std::int64_t hi = std::min<std::int64_t>(n_keys - 1, n + half + sp.gamma_shift);
        double sum = 0.0;
        std::size_t count = 0;
        for (std::int64_t k = lo; k <= hi; ++k) {
            if (scores.pinned[static_cast<std::size_t>(k)]) continue;
            sum += scores.scores[static_cast<std::size_t>(k)];
            ++count;
        }
        if (count > 0) out.scores[static_cast<std::size_t>(n)] = sum / static_cast<double>(count);
    }
    return out;
}

// Pinned positions plus the highest-scoring rest, ties toward lower index.
inline EvictionDecision select_top_b(const SmoothedScores& scores, std::size_t budget) {
    if (budget == 0) throw BudgetError("select_top_b: budget must be positive", 1);
    const std::size_t n = scores.size();
    EvictionDecision d;
    d.budget = budget;
    if (budget >= n) {
        d.kept.resize(n);
        std::iota(d.kept.begin(), d.kept.end(), std::size_t{0});
        return d;
    }
    const std::size_t pinned = scores.pinned_count();
    if (budget < pinned)
        throw BudgetError("select_top_b: budget " + std::to_string(budget) + " cannot hold " +
                              std::to_string(pinned) + " pinned positions",
                          pinned);

    std::vector<std::size_t> candidates;
    candidates.reserve(n - pinned);
    for (std::size_t i = 0; i < n; ++i) {
        if (scores.pinned[i]) d.kept.push_back(i);
        else candidates.push_back(i);
    }
    const std::size_t take = budget - pinned;
    auto by_score = [&](std::size_t a, std::size_t b) {
        const double sa = scores.scores[a], sb = scores.scores[b];
        return sa > sb || (sa == sb && a < b);
    };
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(take),
                      candidates.end(), by_score);
    d.kept.insert(d.kept.end(), candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(take));
    std::sort(d.kept.begin(), d.kept.end());
    return d;
}

}  // namespace restkv
