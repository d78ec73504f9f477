#pragma once

// Attention traces: per-head projection weights plus the prompt and decode
// token embeddings that drive every head.
//
// On-disk layout (.rkv), all little-endian:
//
//   offset  size  field
//   0       4     magic "RKV1"
//   4       4     format version (u32, currently 1)
//   8       28    L, H, N_prompt, N_decode, d_model, d_k, d_v (u32 each)
//   36      ...   float32 tensors, row-major:
//                   for each layer, for each head:
//                     W_Q (d_model x d_k), W_K (d_model x d_k),
//                     W_V (d_model x d_v), W_O (d_v x d_model)
//                   prompt embeddings (N_prompt x d_model)
//                   decode embeddings (N_decode x d_model)
//
// Values are widened to double in memory. Generated traces are rounded to
// float32 up front so memory and disk hold the same numbers.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "restkv/attention.hpp"
#include "restkv/errors.hpp"
#include "restkv/numerics.hpp"

namespace restkv {

inline constexpr std::array<char, 4> kTraceMagic{'R', 'K', 'V', '1'};
inline constexpr std::uint32_t kTraceVersion = 1;
inline constexpr std::size_t kTraceHeaderBytes = 36;

struct TraceDims {
    std::uint32_t layers = 2;
    std::uint32_t heads = 2;
    std::uint32_t n_prompt = 256;
    std::uint32_t n_decode = 32;
    std::uint32_t d_model = 32;
    std::uint32_t d_k = 16;
    std::uint32_t d_v = 16;

    void validate() const {
        if (layers == 0 || heads == 0 || n_prompt == 0 || d_model == 0 || d_k == 0 || d_v == 0)
            throw DomainError("TraceDims: layers, heads, prompt length and model dims must be >= 1");
    }

    std::uint64_t float_count() const {
        const std::uint64_t dm = d_model, dk = d_k, dv = d_v;
        const std::uint64_t per_head = 2 * dm * dk + dm * dv + dv * dm;
        return std::uint64_t{layers} * heads * per_head + (std::uint64_t{n_prompt} + n_decode) * dm;
    }

    friend bool operator==(const TraceDims&, const TraceDims&) = default;
};

struct Trace {
    TraceDims dims;
    std::vector<std::vector<HeadParams>> heads;  // [layer][head]
    Matrix prompt;                               // N_prompt x d_model
    Matrix decode;                               // N_decode x d_model
    std::vector<std::size_t> planted;            // high-salience prompt positions; not serialized

    const HeadParams& head(std::size_t layer, std::size_t h) const { return heads.at(layer).at(h); }

    void validate() const {
        dims.validate();
        if (heads.size() != dims.layers) throw DomainError("Trace: layer count mismatch");
        for (const auto& layer : heads) {
            if (layer.size() != dims.heads) throw DomainError("Trace: head count mismatch");
            for (const auto& p : layer) {
                p.validate();
                if (p.d_model() != dims.d_model || p.d_k() != dims.d_k || p.d_v() != dims.d_v)
                    throw DomainError("Trace: head dims differ from header");
            }
        }
        if (prompt.rows() != dims.n_prompt || prompt.cols() != dims.d_model)
            throw DomainError("Trace: prompt embedding shape mismatch");
        if (decode.rows() != dims.n_decode || decode.cols() != dims.d_model)
            throw DomainError("Trace: decode embedding shape mismatch");
    }
};

namespace detail {

class ByteWriter {
public:
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f32(double v) { u32(std::bit_cast<std::uint32_t>(static_cast<float>(v))); }
    void raw(std::span<const char> s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }
    void matrix(const Matrix& m) {
        for (double v : m.data()) f32(v);
    }
    std::vector<std::uint8_t> take() { return std::move(bytes_); }

private:
    std::vector<std::uint8_t> bytes_;
};

class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    std::size_t offset() const noexcept { return pos_; }
    std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

    std::uint32_t u32() {
        need(4, "truncated header");
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t{bytes_[pos_ + i]} << (8 * i);
        pos_ += 4;
        return v;
    }

    Matrix matrix(std::size_t rows, std::size_t cols) {
        const std::size_t count = rows * cols;
        need(count * 4, "truncated payload");
        std::vector<double> data(count);
        for (std::size_t i = 0; i < count; ++i) {
            const std::size_t at = pos_;
            const float f = std::bit_cast<float>(u32());
            if (!std::isfinite(f)) throw FormatError("non-finite tensor value", at);
            data[i] = static_cast<double>(f);
        }
        return Matrix(rows, cols, std::move(data));
    }

    void need(std::size_t n, const char* what) const {
        if (remaining() < n) throw FormatError(what, bytes_.size());
    }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

inline float round_to_f32(double v) { return static_cast<float>(v); }

}  // namespace detail

inline std::vector<std::uint8_t> encode_trace(const Trace& trace) {
    trace.validate();
    detail::ByteWriter w;
    w.raw(kTraceMagic);
    w.u32(kTraceVersion);
    const TraceDims& d = trace.dims;
    for (std::uint32_t v : {d.layers, d.heads, d.n_prompt, d.n_decode, d.d_model, d.d_k, d.d_v}) w.u32(v);
    for (const auto& layer : trace.heads) {
        for (const auto& p : layer) {
            w.matrix(p.w_q);
            w.matrix(p.w_k);
            w.matrix(p.w_v);
            w.matrix(p.w_o);
        }
    }
    w.matrix(trace.prompt);
    w.matrix(trace.decode);
    return w.take();
}

inline Trace decode_trace(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kTraceMagic.size() ||
        std::memcmp(bytes.data(), kTraceMagic.data(), kTraceMagic.size()) != 0)
        throw FormatError("bad magic, expected RKV1", 0);
    detail::ByteReader r(bytes);
    r.need(kTraceHeaderBytes, "truncated header");
    r.u32();  // magic
    const std::size_t version_at = r.offset();
    if (const std::uint32_t version = r.u32(); version != kTraceVersion)
        throw FormatError("unsupported trace version " + std::to_string(version), version_at);

    Trace t;
    std::array<std::uint32_t*, 7> fields{&t.dims.layers,  &t.dims.heads, &t.dims.n_prompt, &t.dims.n_decode,
                                         &t.dims.d_model, &t.dims.d_k,   &t.dims.d_v};
    for (std::size_t i = 0; i < fields.size(); ++i) {
        const std::size_t at = r.offset();
        *fields[i] = r.u32();
        // N_decode (field 3) may be zero.
        if (i != 3 && *fields[i] == 0) throw FormatError("zero dimension in header", at);
    }

    const std::uint64_t expected = kTraceHeaderBytes + 4 * t.dims.float_count();
    if (bytes.size() < expected) throw FormatError("truncated payload", bytes.size());
    if (bytes.size() > expected) throw FormatError("trailing bytes after payload", expected);

    const std::size_t dm = t.dims.d_model, dk = t.dims.d_k, dv = t.dims.d_v;
    t.heads.resize(t.dims.layers);
    for (auto& layer : t.heads) {
        layer.reserve(t.dims.heads);
        for (std::uint32_t h = 0; h < t.dims.heads; ++h) {
            Matrix wq = r.matrix(dm, dk);
            Matrix wk = r.matrix(dm, dk);
            Matrix wv = r.matrix(dm, dv);
            Matrix wo = r.matrix(dv, dm);
            layer.emplace_back(std::move(wq), std::move(wk), std::move(wv), std::move(wo));
        }
    }
    t.prompt = r.matrix(t.dims.n_prompt, dm);
    t.decode = r.matrix(t.dims.n_decode, dm);
    return t;
}

inline void write_trace(const Trace& trace, const std::string& path) {
    const auto bytes = encode_trace(trace);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed: " + path);
}

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline Trace read_trace(const std::string& path) { return decode_trace(read_file_bytes(path)); }

enum class TraceDistribution { gaussian, clustered };

inline TraceDistribution parse_distribution(std::string_view name) {
    if (name == "gaussian") return TraceDistribution::gaussian;
    if (name == "clustered") return TraceDistribution::clustered;
    throw DomainError("unknown trace distribution '" + std::string(name) + "'");
}

// Knobs for the synthetic generator.
struct GeneratorOptions {
    double logit_scale = 2.0;    // std of q.k / sqrt(d_k) for unit-variance tokens
    double planted_norm = 4.0;   // extra embedding mass on planted tokens
    double context_norm = 6.0;   // shared offset carried by every clustered token
    double planted_boost = 8.0;  // logit bonus planted keys receive from context queries
    double content_norm = 4.0;   // per-planted-token distinct content direction
    std::size_t planted_per_64 = 1;
};

namespace detail {

inline Matrix gaussian_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double stddev) {
    std::normal_distribution<double> normal(0.0, stddev);
    std::vector<double> data(rows * cols);
    for (double& v : data) v = round_to_f32(normal(rng));
    return Matrix(rows, cols, std::move(data));
}

inline std::vector<double> unit_vector(std::mt19937_64& rng, std::size_t n) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> u(n);
    for (double& v : u) v = normal(rng);
    const double norm = l2_norm(u);
    for (double& v : u) v /= norm;
    return u;
}

}  // namespace detail

// Seeded synthetic trace.
//
// gaussian: unit-variance token embeddings; projections scaled so attention
// logits have std `logit_scale`.
//
// clustered: every token also carries a shared context direction, and a few
// planted prompt tokens (one per 64, placed in the first three quarters of
// the prompt) carry a shared needle direction plus their own content
// direction. In each head, the key direction that context-bearing queries
// look along is reserved for the needle, so planted tokens draw strong
// attention, and their values are distinct and far from the mean.
inline Trace generate_trace(std::uint64_t seed, const TraceDims& dims, TraceDistribution dist,
                            const GeneratorOptions& opt = {}) {
    dims.validate();
    std::mt19937_64 rng(seed);
    const std::size_t dm = dims.d_model, dk = dims.d_k, dv = dims.d_v;
    const double qk_std = std::sqrt(opt.logit_scale / static_cast<double>(dm));

    Trace t;
    t.dims = dims;
    std::vector<double> context, needle;
    if (dist == TraceDistribution::clustered) {
        context = detail::unit_vector(rng, dm);
        needle = detail::unit_vector(rng, dm);
        // Needle orthogonal to context.
        const double overlap = dot(needle, context);
        for (std::size_t j = 0; j < dm; ++j) needle[j] -= overlap * context[j];
        const double norm = l2_norm(needle);
        for (double& v : needle) v /= norm;
    }

    t.heads.resize(dims.layers);
    for (auto& layer : t.heads) {
        for (std::uint32_t h = 0; h < dims.heads; ++h) {
            Matrix wq = detail::gaussian_matrix(rng, dm, dk, qk_std);
            Matrix wk = detail::gaussian_matrix(rng, dm, dk, qk_std);
            Matrix wv = detail::gaussian_matrix(rng, dm, dv, 1.0 / std::sqrt(static_cast<double>(dm)));
            Matrix wo = detail::gaussian_matrix(rng, dv, dm, 1.0 / std::sqrt(static_cast<double>(dv)));
            if (dist == TraceDistribution::clustered) {
                // W_K <- (I - c c^T - u u^T) W_K (I - a_hat a_hat^T) + kappa u^T a_hat
                // with a = c W_Q. Keys ignore the context, and the key
                // direction the context queries look along belongs to the
                // needle alone.
                const Vector a = vecmat(context, wq);
                const double a_norm = l2_norm(a);
                const double kappa = opt.planted_boost * std::sqrt(static_cast<double>(dk)) /
                                     (opt.planted_norm * opt.context_norm * a_norm);
                std::vector<double> data(wk.data().begin(), wk.data().end());
                const Vector ck = vecmat(context, wk);
                const Vector uk = vecmat(needle, wk);
                for (std::size_t i = 0; i < dm; ++i)
                    for (std::size_t j = 0; j < dk; ++j) data[i * dk + j] -= context[i] * ck[j] + needle[i] * uk[j];
                for (std::size_t i = 0; i < dm; ++i) {
                    double along = 0.0;
                    for (std::size_t j = 0; j < dk; ++j) along += data[i * dk + j] * a[j] / a_norm;
                    for (std::size_t j = 0; j < dk; ++j)
                        data[i * dk + j] = detail::round_to_f32(data[i * dk + j] - along * a[j] / a_norm +
                                                                kappa * needle[i] * a[j] / a_norm);
                }
                wk = Matrix(dm, dk, std::move(data));

                // W_V <- (I - u u^T) W_V: planted values differ only through
                // their own content directions.
                const Vector uv = vecmat(needle, wv);
                std::vector<double> vdata(wv.data().begin(), wv.data().end());
                for (std::size_t i = 0; i < dm; ++i)
                    for (std::size_t j = 0; j < dv; ++j)
                        vdata[i * dv + j] = detail::round_to_f32(vdata[i * dv + j] - needle[i] * uv[j]);
                wv = Matrix(dm, dv, std::move(vdata));
            }
            layer.emplace_back(std::move(wq), std::move(wk), std::move(wv), std::move(wo));
        }
    }

    auto embeddings = [&](std::size_t rows) {
        std::normal_distribution<double> normal(0.0, 1.0);
        std::vector<double> data(rows * dm);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < dm; ++j) {
                double v = normal(rng);
                if (!context.empty()) v += opt.context_norm * context[j];
                data[r * dm + j] = v;
            }
        return data;
    };

    std::vector<double> prompt = embeddings(dims.n_prompt);
    if (dist == TraceDistribution::clustered) {
        const std::size_t region = std::max<std::size_t>(1, dims.n_prompt * 3 / 4);
        const std::size_t count =
            std::min(region, std::max<std::size_t>(1, dims.n_prompt / 64 * opt.planted_per_64));
        std::vector<std::size_t> positions(region);
        for (std::size_t i = 0; i < region; ++i) positions[i] = i;
        for (std::size_t i = 0; i < count; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, region - 1);
            std::swap(positions[i], positions[pick(rng)]);
        }
        positions.resize(count);
        std::sort(positions.begin(), positions.end());
        for (std::size_t p : positions) {
            const std::vector<double> content = detail::unit_vector(rng, dm);
            for (std::size_t j = 0; j < dm; ++j)
                prompt[p * dm + j] += opt.planted_norm * needle[j] + opt.content_norm * content[j];
        }
        t.planted = std::move(positions);
    }
    for (double& v : prompt) v = detail::round_to_f32(v);
    t.prompt = Matrix(dims.n_prompt, dm, std::move(prompt));

    std::vector<double> decode = embeddings(dims.n_decode);
    for (double& v : decode) v = detail::round_to_f32(v);
    t.decode = Matrix(dims.n_decode, dm, std::move(decode));
    return t;
}

}  // namespace restkv
