#pragma once

// Single-head attention over an explicit KV cache. A layer is a list of heads;
// a model is a list of layers. Causality comes from construction order: a
// query only ever sees the cache rows that existed at its own position.

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "restkv/errors.hpp"
#include "restkv/numerics.hpp"

namespace restkv {

inline constexpr std::size_t kAllVisible = std::numeric_limits<std::size_t>::max();

struct HeadParams {
    Matrix w_q;  // d_model x d_k
    Matrix w_k;  // d_model x d_k
    Matrix w_v;  // d_model x d_v
    Matrix w_o;  // d_v x d_model

    HeadParams() = default;
    HeadParams(Matrix wq, Matrix wk, Matrix wv, Matrix wo)
        : w_q(std::move(wq)), w_k(std::move(wk)), w_v(std::move(wv)), w_o(std::move(wo)) {
        validate();
    }

    std::size_t d_model() const noexcept { return w_q.rows(); }
    std::size_t d_k() const noexcept { return w_q.cols(); }
    std::size_t d_v() const noexcept { return w_v.cols(); }

    void validate() const {
        if (w_q.cols() == 0 || w_v.cols() == 0 || w_q.rows() == 0)
            throw DomainError("HeadParams: zero dimension");
        if (w_k.cols() != w_q.cols()) throw DomainError("HeadParams: w_q/w_k key dims differ");
        if (w_k.rows() != w_q.rows() || w_v.rows() != w_q.rows())
            throw DomainError("HeadParams: projection input dims differ");
        if (w_o.rows() != w_v.cols()) throw DomainError("HeadParams: w_o rows != d_v");
        if (w_o.cols() != w_q.rows()) throw DomainError("HeadParams: w_o cols != d_model");
    }
};

// Keys and values of the tokens a head can attend to, plus the absolute
// position each row came from. Append-only while decoding.
class KvCache {
public:
    KvCache(std::size_t d_k, std::size_t d_v)
        : keys_(Matrix::zeros(0, d_k)), values_(Matrix::zeros(0, d_v)) {}

    KvCache(Matrix keys, Matrix values) : keys_(std::move(keys)), values_(std::move(values)) {
        if (keys_.rows() != values_.rows()) throw DomainError("KvCache: key/value row counts differ");
        positions_.resize(keys_.rows());
        for (std::size_t i = 0; i < positions_.size(); ++i) positions_[i] = i;
    }

    KvCache(Matrix keys, Matrix values, std::vector<std::size_t> positions)
        : keys_(std::move(keys)), values_(std::move(values)), positions_(std::move(positions)) {
        if (keys_.rows() != values_.rows() || positions_.size() != keys_.rows())
            throw DomainError("KvCache: key/value/position counts differ");
    }

    std::size_t size() const noexcept { return keys_.rows(); }
    bool empty() const noexcept { return keys_.rows() == 0; }
    std::size_t d_k() const noexcept { return keys_.cols(); }
    std::size_t d_v() const noexcept { return values_.cols(); }

    const Matrix& keys() const noexcept { return keys_; }
    const Matrix& values() const noexcept { return values_; }
    const std::vector<std::size_t>& positions() const noexcept { return positions_; }

    std::size_t next_position() const noexcept {
        return positions_.empty() ? 0 : positions_.back() + 1;
    }

    void append(const Vector& k, const Vector& v) {
        keys_.append_row(k.span());
        values_.append_row(v.span());
        positions_.push_back(next_position());
    }

    // Compacted cache holding only `rows` (ascending cache-row indices).
    KvCache retain(std::span<const std::size_t> rows) const {
        std::vector<std::size_t> pos;
        pos.reserve(rows.size());
        for (std::size_t r : rows) {
            if (r >= size()) throw DomainError("KvCache::retain: row out of range");
            pos.push_back(positions_[r]);
        }
        return KvCache(keys_.select_rows(rows), values_.select_rows(rows), std::move(pos));
    }

    KvCache without(std::size_t row) const {
        if (row >= size()) throw DomainError("KvCache::without: row out of range");
        std::vector<std::size_t> pos = positions_;
        pos.erase(pos.begin() + static_cast<std::ptrdiff_t>(row));
        return KvCache(keys_.without_row(row), values_.without_row(row), std::move(pos));
    }

private:
    Matrix keys_;
    Matrix values_;
    std::vector<std::size_t> positions_;
};

// One head with its cache and a window of query vectors.
//
// `queries` holds window_size() * group_size rows, slot-major: the
// group_size query streams sharing this KV head sit next to each other.
// query_positions[s] is the absolute position of window slot s; a query at
// position p sees cache rows 0..p. Empty query_positions means every query
// sees the whole cache.
struct HeadInstance {
    HeadParams params;
    KvCache cache;
    Matrix queries;
    std::vector<std::size_t> query_positions;
    std::size_t group_size = 1;

    std::size_t window_size() const noexcept {
        return group_size == 0 ? 0 : queries.rows() / group_size;
    }

    // Number of cache rows visible to window slot s.
    std::size_t visible(std::size_t slot) const {
        if (query_positions.empty()) return cache.size();
        std::size_t count = 0;
        const std::size_t pos = query_positions.at(slot);
        for (std::size_t p : cache.positions()) {
            if (p > pos) break;
            ++count;
        }
        return count;
    }

    void validate() const {
        params.validate();
        if (group_size == 0) throw DomainError("HeadInstance: group_size must be >= 1");
        if (queries.cols() != params.d_k()) throw DomainError("HeadInstance: query dim != d_k");
        if (queries.rows() % group_size != 0)
            throw DomainError("HeadInstance: query rows not a multiple of group_size");
        if (!query_positions.empty() && query_positions.size() != window_size())
            throw DomainError("HeadInstance: query_positions length != window size");
        if (cache.d_k() != params.d_k() || cache.d_v() != params.d_v())
            throw DomainError("HeadInstance: cache dims differ from params");
    }
};

struct Projection {
    Vector q;
    Vector k;
    Vector v;
};

inline Projection project_token(const Vector& x, const HeadParams& params) {
    if (x.size() != params.d_model()) {
        throw DomainError("project_token: token dim " + std::to_string(x.size()) + " != d_model " +
                          std::to_string(params.d_model()));
    }
    return {vecmat(x, params.w_q), vecmat(x, params.w_k), vecmat(x, params.w_v)};
}

// softmax(q K^T / sqrt(d_k)) over the first `visible` cache rows.
inline Vector attention_weights(const Vector& q, const KvCache& cache,
                                std::size_t visible = kAllVisible) {
    const std::size_t n = std::min(visible, cache.size());
    if (n == 0) throw DomainError("attention_weights: empty cache");
    if (q.size() != cache.d_k()) throw DomainError("attention_weights: query dim != d_k");
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(cache.d_k()));
    std::vector<double> logits(n);
    for (std::size_t i = 0; i < n; ++i) logits[i] = dot(q.span(), cache.keys().row(i)) * inv_sqrt_dk;
    return stable_softmax(logits);
}

// z = A V over the leading rows of `values` covered by `weights`.
inline Vector attention_context(const Vector& weights, const Matrix& values) {
    if (weights.size() > values.rows()) throw DomainError("attention_context: too many weights");
    std::vector<double> z(values.cols(), 0.0);
    for (std::size_t i = 0; i < weights.size(); ++i) {
        auto v = values.row(i);
        for (std::size_t j = 0; j < z.size(); ++j) z[j] += weights[i] * v[j];
    }
    return Vector(std::move(z));
}

// Head output A V W_O for query q.
inline Vector mha_output(const Vector& q, const KvCache& cache, const HeadParams& params,
                         std::size_t visible = kAllVisible) {
    const Vector weights = attention_weights(q, cache, visible);
    return vecmat(attention_context(weights, cache.values()), params.w_o);
}

// Append the new token's KV pair, then attend with its query.
inline Vector decode_step(HeadInstance& instance, const Vector& x_new) {
    const Projection p = project_token(x_new, instance.params);
    instance.cache.append(p.k, p.v);
    return mha_output(p.q, instance.cache, instance.params);
}

// Run a prompt through one head: the cache holds every prompt token and the
// query window holds the last `window` tokens' queries.
inline HeadInstance prefill(const HeadParams& params, const Matrix& embeddings, std::size_t window) {
    params.validate();
    if (embeddings.cols() != params.d_model()) throw DomainError("prefill: embedding dim != d_model");
    const std::size_t n = embeddings.rows();
    const Matrix keys = matmul(embeddings, params.w_k);
    const Matrix values = matmul(embeddings, params.w_v);
    const std::size_t w = std::min(window, n);
    std::vector<std::size_t> slots(w);
    for (std::size_t s = 0; s < w; ++s) slots[s] = n - w + s;
    HeadInstance inst{params, KvCache(keys, values), matmul(embeddings.select_rows(slots), params.w_q),
                      slots, 1};
    return inst;
}

}  // namespace restkv
