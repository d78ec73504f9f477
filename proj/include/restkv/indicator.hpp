#pragma once

// Output-reconstruction importance of a single KV pair.
//
// For a query q and a cache with attention weights A, removing pair n
// renormalizes the survivors to A[m] / (1 - A[n]). The change in the head
// output then collapses to
//
//     I[n] = A[n] / (1 - A[n]) * || out - v_n W_O ||
//
// where out = A V W_O. removal_oracle() computes the same quantity by
// actually deleting the row and re-running attention.

#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

#include "restkv/attention.hpp"
#include "restkv/errors.hpp"
#include "restkv/numerics.hpp"

namespace restkv {

// Floor for 1 - A[n]. With two or more keys softmax never reaches 1, but
// extreme logits can round it there.
inline constexpr double kMinResidualMass = 1e-300;

struct ImportanceMatrix {
    Matrix scores;                            // window slots x cache rows, entries >= 0
    std::vector<std::size_t> query_positions;  // absolute position of each slot

    std::size_t window() const noexcept { return scores.rows(); }
    std::size_t keys() const noexcept { return scores.cols(); }
};

// Amplifier a / (1 - a).
inline double reweighting_factor(double a) {
    return a / std::max(1.0 - a, kMinResidualMass);
}

namespace detail {

inline void check_removal_args(const KvCache& cache, std::size_t n, const char* who) {
    if (cache.size() < 2) throw DomainError(std::string(who) + ": cache needs at least 2 entries");
    if (n >= cache.size())
        throw DomainError(std::string(who) + ": index " + std::to_string(n) + " out of range " +
                          std::to_string(cache.size()));
}

}  // namespace detail

// Brute force: || out(full cache) - out(cache without n) ||.
inline double removal_oracle(const Vector& q, const KvCache& cache, const HeadParams& params,
                             std::size_t n) {
    detail::check_removal_args(cache, n, "removal_oracle");
    const Vector full = mha_output(q, cache, params);
    const Vector reduced = mha_output(q, cache.without(n), params);
    return l2_distance(full.span(), reduced.span());
}

inline double closed_form_indicator(const Vector& q, const KvCache& cache, const HeadParams& params,
                                    std::size_t n) {
    detail::check_removal_args(cache, n, "closed_form_indicator");
    const Vector weights = attention_weights(q, cache);
    const Vector out = vecmat(attention_context(weights, cache.values()), params.w_o);
    const Vector own = vecmat(cache.values().row(n), params.w_o);
    return reweighting_factor(weights[n]) * l2_distance(out.span(), own.span());
}

// Attention row with entry n removed and the rest rescaled by 1 / (1 - A[n]).
inline Vector renormalized_weights(const Vector& weights, std::size_t n) {
    if (weights.size() < 2) throw DomainError("renormalized_weights: need at least 2 weights");
    if (n >= weights.size()) throw DomainError("renormalized_weights: index out of range");
    const double denom = std::max(1.0 - weights[n], kMinResidualMass);
    std::vector<double> out;
    out.reserve(weights.size() - 1);
    for (std::size_t m = 0; m < weights.size(); ++m)
        if (m != n) out.push_back(weights[m] / denom);
    return Vector(std::move(out));
}

struct TwoPartDecomposition {
    Vector removed_loss;         // f * v_n W_O
    Vector redistribution_gain;  // sum_m f * A[m] v_m W_O
    double factor = 0.0;         // f = A[n] / (1 - A[n])

    double removed_loss_norm() const { return l2_norm(removed_loss); }
    double indicator() const { return l2_distance(removed_loss.span(), redistribution_gain.span()); }
};

inline TwoPartDecomposition decompose_two_part(const Vector& q, const KvCache& cache,
                                               const HeadParams& params, std::size_t n) {
    detail::check_removal_args(cache, n, "decompose_two_part");
    const Vector weights = attention_weights(q, cache);
    const double f = reweighting_factor(weights[n]);
    std::vector<double> gain(params.d_model(), 0.0);
    for (std::size_t m = 0; m < cache.size(); ++m) {
        const Vector term = vecmat(cache.values().row(m), params.w_o);
        for (std::size_t j = 0; j < gain.size(); ++j) gain[j] += f * weights[m] * term[j];
    }
    return {scale(vecmat(cache.values().row(n), params.w_o).span(), f), Vector(std::move(gain)), f};
}

// Indicator for every (window slot, cache row). V W_O is computed once and
// reused for all rows. Keys a slot cannot see score 0. Grouped query
// streams sharing the KV head are averaged.
inline ImportanceMatrix indicator_matrix(const HeadInstance& instance) {
    instance.validate();
    const KvCache& cache = instance.cache;
    if (cache.size() < 2) throw DomainError("indicator_matrix: cache needs at least 2 entries");

    const Matrix projected = matmul(cache.values(), instance.params.w_o);  // N x d_model
    const std::size_t slots = instance.window_size();
    const std::size_t n_keys = cache.size();
    const std::size_t d_model = projected.cols();
    const double inv_group = 1.0 / static_cast<double>(instance.group_size);

    std::vector<double> scores(slots * n_keys, 0.0);
    std::vector<double> out(d_model);
    for (std::size_t s = 0; s < slots; ++s) {
        const std::size_t vis = instance.visible(s);
        // A lone visible key cannot be removed; leave its score at 0.
        if (vis < 2) continue;
        double* row = scores.data() + s * n_keys;
        for (std::size_t g = 0; g < instance.group_size; ++g) {
            const Vector q(instance.queries.row(s * instance.group_size + g));
            const Vector weights = attention_weights(q, cache, vis);
            std::fill(out.begin(), out.end(), 0.0);
            for (std::size_t m = 0; m < vis; ++m) {
                auto p = projected.row(m);
                for (std::size_t j = 0; j < d_model; ++j) out[j] += weights[m] * p[j];
            }
            for (std::size_t n = 0; n < vis; ++n) {
                auto p = projected.row(n);
                double sq = 0.0;
                for (std::size_t j = 0; j < d_model; ++j) {
                    const double d = out[j] - p[j];
                    sq += d * d;
                }
                row[n] += inv_group * reweighting_factor(weights[n]) * std::sqrt(sq);
            }
        }
    }

    std::vector<std::size_t> positions = instance.query_positions;
    if (positions.empty()) positions.assign(slots, cache.next_position() == 0 ? 0 : cache.next_position() - 1);
    return {Matrix(slots, n_keys, std::move(scores)), std::move(positions)};
}

}  // namespace restkv
