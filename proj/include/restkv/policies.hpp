#pragma once

// Eviction policies and per-layer budget schedules.
//
//   rest_kv    reconstruction indicator + EMA + adaptive spatial smoothing
//   snap_attn  window-mean attention weight, average-pooled along keys
//   streaming  attention sink + most recent tokens
//   random     recent window, then a seeded uniform sample of the rest

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "restkv/attention.hpp"
#include "restkv/errors.hpp"
#include "restkv/indicator.hpp"
#include "restkv/smoothing.hpp"

namespace restkv {

enum class PolicyKind { rest_kv, snap_attn, streaming, random };

inline std::string_view to_string(PolicyKind k) {
    switch (k) {
        case PolicyKind::rest_kv: return "rest_kv";
        case PolicyKind::snap_attn: return "snap_attn";
        case PolicyKind::streaming: return "streaming";
        case PolicyKind::random: return "random";
    }
    return "unknown";
}

inline PolicyKind parse_policy_kind(std::string_view name) {
    for (auto k : {PolicyKind::rest_kv, PolicyKind::snap_attn, PolicyKind::streaming, PolicyKind::random})
        if (to_string(k) == name) return k;
    throw DomainError("unknown policy '" + std::string(name) + "'");
}

struct Policy {
    PolicyKind kind = PolicyKind::rest_kv;
    std::size_t kernel = 5;  // snap_attn pooling width
    std::size_t sink = 4;    // streaming attention sink
    std::uint64_t seed = 0;  // random

    void validate() const {
        if (kernel == 0 || kernel % 2 == 0)
            throw DomainError("Policy: pooling kernel must be odd and >= 1, got " + std::to_string(kernel));
    }
};

inline std::vector<std::size_t> all_indices(std::size_t n) {
    std::vector<std::size_t> v(n);
    std::iota(v.begin(), v.end(), std::size_t{0});
    return v;
}

// Mean attention over the window's queries, then a truncated, count-normalized
// average pool of width `kernel` along the key axis.
inline SmoothedScores snap_attn_scores(const HeadInstance& instance, std::size_t kernel) {
    instance.validate();
    if (kernel == 0 || kernel % 2 == 0) throw DomainError("snap_attn_scores: kernel must be odd");
    const std::size_t n_keys = instance.cache.size();
    const std::size_t slots = instance.window_size();
    if (slots == 0) throw DomainError("snap_attn_scores: empty query window");

    std::vector<double> mean(n_keys, 0.0);
    const double inv = 1.0 / static_cast<double>(slots * instance.group_size);
    for (std::size_t s = 0; s < slots; ++s) {
        const std::size_t vis = instance.visible(s);
        for (std::size_t g = 0; g < instance.group_size; ++g) {
            const Vector q(instance.queries.row(s * instance.group_size + g));
            const Vector w = attention_weights(q, instance.cache, vis);
            for (std::size_t n = 0; n < vis; ++n) mean[n] += inv * w[n];
        }
    }

    std::vector<double> pooled(n_keys, 0.0);
    const auto half = static_cast<std::int64_t>(kernel / 2);
    const auto last = static_cast<std::int64_t>(n_keys) - 1;
    for (std::int64_t n = 0; n <= last; ++n) {
        const std::int64_t lo = std::max<std::int64_t>(0, n - half);
        const std::int64_t hi = std::min(last, n + half);
        double sum = 0.0;
        for (std::int64_t k = lo; k <= hi; ++k) sum += mean[static_cast<std::size_t>(k)];
        pooled[static_cast<std::size_t>(n)] = sum / static_cast<double>(hi - lo + 1);
    }
    return SmoothedScores::with_pinned_tail(std::move(pooled), slots);
}

inline SmoothedScores rest_kv_scores(const HeadInstance& instance, std::size_t budget,
                                     const SmoothingConfig& cfg) {
    const ImportanceMatrix im = indicator_matrix(instance);
    const SmoothedScores temporal = temporal_smooth(im, cfg);
    return spatial_smooth(temporal, spatial_params(im, budget, cfg));
}

inline EvictionDecision streaming_keep(std::size_t n, std::size_t budget, std::size_t sink) {
    EvictionDecision d;
    d.budget = budget;
    if (budget >= n) {
        d.kept = all_indices(n);
        return d;
    }
    if (budget <= sink)
        throw BudgetError("streaming_keep: budget " + std::to_string(budget) + " must exceed sink size " +
                              std::to_string(sink),
                          sink + 1);
    for (std::size_t i = 0; i < std::min(sink, n); ++i) d.kept.push_back(i);
    for (std::size_t i = n - (budget - sink); i < n; ++i)
        if (i >= sink) d.kept.push_back(i);
    return d;
}

// The most recent `pinned_tail` positions first, then a uniform sample
// without replacement from the rest. Deterministic for a fixed seed.
inline EvictionDecision random_keep(std::size_t n, std::size_t budget, std::uint64_t seed,
                                    std::size_t pinned_tail = 0) {
    EvictionDecision d;
    d.budget = budget;
    if (budget >= n) {
        d.kept = all_indices(n);
        return d;
    }
    const std::size_t recent = std::min({pinned_tail, n, budget});
    for (std::size_t i = n - recent; i < n; ++i) d.kept.push_back(i);
    std::vector<std::size_t> pool = all_indices(n - recent);
    std::mt19937_64 rng(seed);
    const std::size_t take = budget - recent;
    // Partial Fisher-Yates.
    for (std::size_t i = 0; i < take; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
        std::swap(pool[i], pool[pick(rng)]);
    }
    d.kept.insert(d.kept.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(take));
    std::sort(d.kept.begin(), d.kept.end());
    return d;
}

// Smallest budget `policy` accepts for an n-entry cache.
inline std::size_t min_feasible_budget(const Policy& policy, std::size_t n, const SmoothingConfig& cfg) {
    switch (policy.kind) {
        case PolicyKind::rest_kv:
        case PolicyKind::snap_attn: return std::max<std::size_t>(1, std::min(cfg.window, n));
        case PolicyKind::streaming: return std::min(policy.sink + 1, std::max<std::size_t>(n, 1));
        case PolicyKind::random: return 1;
    }
    return 1;
}

inline EvictionDecision decide(const Policy& policy, const HeadInstance& instance, std::size_t budget,
                               const SmoothingConfig& cfg) {
    policy.validate();
    cfg.validate();
    const std::size_t n = instance.cache.size();
    if (budget == 0) throw BudgetError("decide: budget must be positive", 1);
    if (budget >= n) {
        EvictionDecision d;
        d.budget = budget;
        d.kept = all_indices(n);
        return d;
    }
    switch (policy.kind) {
        case PolicyKind::rest_kv: {
            EvictionDecision d = select_top_b(rest_kv_scores(instance, budget, cfg), budget);
            return d;
        }
        case PolicyKind::snap_attn: return select_top_b(snap_attn_scores(instance, policy.kernel), budget);
        case PolicyKind::streaming: return streaming_keep(n, budget, policy.sink);
        case PolicyKind::random: return random_keep(n, budget, policy.seed, cfg.window);
    }
    throw DomainError("decide: unhandled policy");
}

enum class ScheduleKind { uniform, pyramid };

inline ScheduleKind parse_schedule_kind(std::string_view name) {
    if (name == "uniform") return ScheduleKind::uniform;
    if (name == "pyramid") return ScheduleKind::pyramid;
    throw DomainError("unknown budget schedule '" + std::string(name) + "'");
}

// Per-head budget for each layer.
struct BudgetPlan {
    std::vector<std::size_t> per_layer;

    std::size_t total() const {
        return std::accumulate(per_layer.begin(), per_layer.end(), std::size_t{0});
    }
};

// uniform: every layer gets n.
// pyramid: linear ramp from 2n - m (first layer) to m (last layer),
// m = max(1, window), rounded by largest remainder so the total is n * layers.
inline BudgetPlan make_budget_plan(ScheduleKind kind, std::size_t layers, std::size_t n,
                                   std::size_t window = 32) {
    if (layers == 0 || n == 0) throw DomainError("make_budget_plan: layers and n must be >= 1");
    BudgetPlan plan;
    if (kind == ScheduleKind::uniform || layers == 1) {
        plan.per_layer.assign(layers, n);
        return plan;
    }
    const double m = static_cast<double>(std::max<std::size_t>(1, window));
    const double top = 2.0 * static_cast<double>(n) - m;
    if (top < 1.0)
        throw DomainError("make_budget_plan: pyramid with n=" + std::to_string(n) +
                          " leaves the first layer below 1");

    std::vector<double> exact(layers);
    for (std::size_t l = 0; l < layers; ++l)
        exact[l] = top + (m - top) * static_cast<double>(l) / static_cast<double>(layers - 1);

    plan.per_layer.resize(layers);
    std::size_t assigned = 0;
    for (std::size_t l = 0; l < layers; ++l) {
        plan.per_layer[l] = static_cast<std::size_t>(std::floor(exact[l]));
        assigned += plan.per_layer[l];
    }
    const std::size_t target = n * layers;
    std::vector<std::size_t> order = all_indices(layers);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return exact[a] - std::floor(exact[a]) > exact[b] - std::floor(exact[b]);
    });
    for (std::size_t i = 0; assigned < target; ++i, ++assigned) ++plan.per_layer[order[i % layers]];
    for (std::size_t b : plan.per_layer)
        if (b < 1) throw DomainError("make_budget_plan: infeasible layer budget");
    return plan;
}

}  // namespace restkv
