#pragma once

// Self-check of the closed-form indicator against brute-force removal on
// seeded random heads. Backs the `oracle-check` CLI subcommand.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "restkv/attention.hpp"
#include "restkv/indicator.hpp"
#include "restkv/numerics.hpp"

namespace restkv {

struct RandomHead {
    HeadParams params;
    KvCache cache;
    Vector q;
};

// Gaussian head with an n-entry cache. logit_scale is the std of the
// attention logits for unit-variance tokens.
inline RandomHead random_head(std::mt19937_64& rng, std::size_t n, std::size_t d_model, std::size_t d_k,
                              std::size_t d_v, double logit_scale = 2.0) {
    std::normal_distribution<double> normal(0.0, 1.0);
    auto mat = [&](std::size_t r, std::size_t c, double s) {
        std::vector<double> d(r * c);
        for (double& v : d) v = s * normal(rng);
        return Matrix(r, c, std::move(d));
    };
    const double qk = std::sqrt(logit_scale / static_cast<double>(d_model));
    HeadParams params(mat(d_model, d_k, qk), mat(d_model, d_k, qk), mat(d_model, d_v, 1.0 / std::sqrt(double(d_model))),
                      mat(d_v, d_model, 1.0 / std::sqrt(double(d_v))));
    const Matrix x = mat(n, d_model, 1.0);
    KvCache cache(matmul(x, params.w_k), matmul(x, params.w_v));
    Vector q = vecmat(mat(1, d_model, 1.0).row(0), params.w_q);
    return {std::move(params), std::move(cache), std::move(q)};
}

struct OracleCheckOptions {
    std::size_t trials = 200;
    std::size_t max_n = 64;
    double tol = 1e-8;
    std::uint64_t seed = 20240601;
};

struct OracleCheckResult {
    std::size_t trials = 0;
    std::size_t equivalence_failures = 0;
    double worst_relative_gap = 0.0;  // |closed - oracle| / max(1, oracle)
    std::size_t argmin_failures = 0;
    std::size_t renormalization_failures = 0;
    double worst_renormalization_gap = 0.0;

    bool passed() const {
        return equivalence_failures == 0 && argmin_failures == 0 && renormalization_failures == 0;
    }
};

inline OracleCheckResult run_oracle_check(const OracleCheckOptions& opt) {
    std::mt19937_64 rng(opt.seed);
    std::uniform_int_distribution<std::size_t> pick_n(2, std::max<std::size_t>(2, opt.max_n));
    std::uniform_int_distribution<std::size_t> pick_dim(2, 16);
    OracleCheckResult res;
    res.trials = opt.trials;
    for (std::size_t trial = 0; trial < opt.trials; ++trial) {
        const std::size_t n = pick_n(rng);
        const std::size_t d_model = pick_dim(rng), d_k = pick_dim(rng), d_v = pick_dim(rng);
        const RandomHead h = random_head(rng, n, d_model, d_k, d_v);

        bool ok = true;
        std::vector<double> closed(n), oracle(n);
        for (std::size_t i = 0; i < n; ++i) {
            closed[i] = closed_form_indicator(h.q, h.cache, h.params, i);
            oracle[i] = removal_oracle(h.q, h.cache, h.params, i);
            const double gap = std::abs(closed[i] - oracle[i]) / std::max(1.0, oracle[i]);
            res.worst_relative_gap = std::max(res.worst_relative_gap, gap);
            if (!(gap <= opt.tol)) ok = false;
        }
        if (!ok) ++res.equivalence_failures;

        const auto least = static_cast<std::size_t>(std::min_element(closed.begin(), closed.end()) - closed.begin());
        const double best = *std::min_element(oracle.begin(), oracle.end());
        if (!(oracle[least] <= best + 1e-9)) ++res.argmin_failures;

        // Renormalized row vs softmax over the surviving logits.
        const double inv = 1.0 / std::sqrt(static_cast<double>(d_k));
        std::vector<double> logits(n);
        for (std::size_t i = 0; i < n; ++i) logits[i] = dot(h.q.span(), h.cache.keys().row(i)) * inv;
        const Vector weights = stable_softmax(logits);
        const std::size_t drop = trial % n;
        std::vector<double> rest;
        for (std::size_t i = 0; i < n; ++i)
            if (i != drop) rest.push_back(logits[i]);
        const Vector direct = stable_softmax(rest);
        const Vector renorm = renormalized_weights(weights, drop);
        double gap = 0.0;
        for (std::size_t i = 0; i < direct.size(); ++i) gap = std::max(gap, std::abs(direct[i] - renorm[i]));
        res.worst_renormalization_gap = std::max(res.worst_renormalization_gap, gap);
        if (gap > 1e-12) ++res.renormalization_failures;
    }
    return res;
}

}  // namespace restkv
