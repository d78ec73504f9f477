#include <gtest/gtest.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>

#include "restkv/attention.hpp"
#include "restkv/indicator.hpp"
#include "restkv/trace.hpp"

using namespace restkv;

namespace {

TraceDims small_dims() {
    TraceDims d;
    d.layers = 1;
    d.heads = 2;
    d.n_prompt = 20;
    d.n_decode = 3;
    d.d_model = 6;
    d.d_k = 4;
    d.d_v = 3;
    return d;
}

std::size_t offset_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const FormatError& e) {
        return e.offset();
    }
    ADD_FAILURE() << "expected FormatError";
    return std::numeric_limits<std::size_t>::max();
}

void put_u32(std::vector<std::uint8_t>& b, std::size_t at, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) b[at + i] = static_cast<std::uint8_t>(v >> (8 * i));
}

}  // namespace

TEST(TraceFormat, HeaderLayout) {
    const auto bytes = encode_trace(generate_trace(1, small_dims(), TraceDistribution::gaussian));
    EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "RKV1");
    EXPECT_EQ(bytes[4], 1);
    EXPECT_EQ(bytes[8], 1);    // layers
    EXPECT_EQ(bytes[12], 2);   // heads
    EXPECT_EQ(bytes[16], 20);  // n_prompt
    EXPECT_EQ(bytes.size(), kTraceHeaderBytes + 4 * small_dims().float_count());
}

TEST(TraceFormat, RoundTripIsByteIdentical) {
    for (auto dist : {TraceDistribution::gaussian, TraceDistribution::clustered}) {
        TraceDims d = small_dims();
        d.n_prompt = 128;
        const auto bytes = encode_trace(generate_trace(7, d, dist));
        const Trace back = decode_trace(bytes);
        EXPECT_EQ(encode_trace(back), bytes);
    }
}

TEST(TraceFormat, FileRoundTrip) {
    const auto path = std::filesystem::temp_directory_path() / "restkv_trace_test.bin";
    const Trace t = generate_trace(3, small_dims(), TraceDistribution::gaussian);
    write_trace(t, path.string());
    const Trace back = read_trace(path.string());
    EXPECT_EQ(back.dims, t.dims);
    EXPECT_EQ(back.prompt, t.prompt);
    EXPECT_EQ(back.head(0, 1).w_o, t.head(0, 1).w_o);
    std::filesystem::remove(path);
}

TEST(TraceFormat, SameSeedSameBytes) {
    const TraceDims d = small_dims();
    EXPECT_EQ(encode_trace(generate_trace(11, d, TraceDistribution::clustered)),
              encode_trace(generate_trace(11, d, TraceDistribution::clustered)));
    EXPECT_NE(encode_trace(generate_trace(11, d, TraceDistribution::gaussian)),
              encode_trace(generate_trace(12, d, TraceDistribution::gaussian)));
}

TEST(TraceFormat, MalformedFilesReportOffsets) {
    const auto good = encode_trace(generate_trace(5, small_dims(), TraceDistribution::gaussian));

    auto bad_magic = good;
    bad_magic[0] = 'X';
    EXPECT_EQ(offset_of([&] { decode_trace(bad_magic); }), 0u);

    auto bad_version = good;
    put_u32(bad_version, 4, 2);
    EXPECT_EQ(offset_of([&] { decode_trace(bad_version); }), 4u);

    auto zero_heads = good;
    put_u32(zero_heads, 12, 0);
    EXPECT_EQ(offset_of([&] { decode_trace(zero_heads); }), 12u);

    const std::vector<std::uint8_t> truncated(good.begin(), good.end() - 5);
    EXPECT_EQ(offset_of([&] { decode_trace(truncated); }), truncated.size());

    const std::vector<std::uint8_t> short_header(good.begin(), good.begin() + 20);
    EXPECT_EQ(offset_of([&] { decode_trace(short_header); }), 20u);

    auto trailing = good;
    trailing.push_back(0);
    EXPECT_EQ(offset_of([&] { decode_trace(trailing); }), good.size());

    auto nan_payload = good;
    put_u32(nan_payload, 40, std::bit_cast<std::uint32_t>(std::numeric_limits<float>::quiet_NaN()));
    EXPECT_EQ(offset_of([&] { decode_trace(nan_payload); }), 40u);
}

TEST(TraceFormat, ZeroDecodeLengthAllowed) {
    TraceDims d = small_dims();
    d.n_decode = 0;
    const auto bytes = encode_trace(generate_trace(1, d, TraceDistribution::gaussian));
    EXPECT_EQ(decode_trace(bytes).decode.rows(), 0u);
}

TEST(Generator, RejectsDegenerateDims) {
    TraceDims d = small_dims();
    d.d_k = 0;
    EXPECT_THROW(generate_trace(1, d, TraceDistribution::gaussian), DomainError);
    EXPECT_THROW(parse_distribution("uniform"), DomainError);
}

TEST(Generator, GaussianEmbeddingStatistics) {
    TraceDims d = small_dims();
    d.n_prompt = 400;
    d.n_decode = 100;
    d.d_model = 32;
    const Trace t = generate_trace(21, d, TraceDistribution::gaussian);
    std::vector<double> all(t.prompt.data().begin(), t.prompt.data().end());
    all.insert(all.end(), t.decode.data().begin(), t.decode.data().end());
    ASSERT_GE(all.size(), 10000u);
    double mean = 0.0;
    for (double x : all) mean += x;
    mean /= static_cast<double>(all.size());
    double var = 0.0;
    for (double x : all) var += (x - mean) * (x - mean);
    var /= static_cast<double>(all.size() - 1);
    // Standard errors at n = 16000: 0.008 for the mean, about 0.011 for the variance.
    EXPECT_NEAR(mean, 0.0, 0.04);
    EXPECT_NEAR(var, 1.0, 0.06);
}

TEST(Generator, ValuesAreSinglePrecision) {
    const Trace t = generate_trace(2, small_dims(), TraceDistribution::clustered);
    for (double x : t.head(0, 0).w_k.data()) EXPECT_EQ(x, static_cast<double>(static_cast<float>(x)));
}

TEST(Generator, PlantedPositions) {
    TraceDims d = small_dims();
    d.n_prompt = 512;
    const Trace t = generate_trace(9, d, TraceDistribution::clustered);
    EXPECT_EQ(t.planted.size(), 8u);
    EXPECT_TRUE(std::is_sorted(t.planted.begin(), t.planted.end()));
    for (std::size_t p : t.planted) EXPECT_LT(p, 384u);
    EXPECT_TRUE(generate_trace(9, d, TraceDistribution::gaussian).planted.empty());
}

TEST(Generator, PlantedTokensRankInTopDecile) {
    TraceDims d;
    d.n_prompt = 512;
    d.n_decode = 4;
    double pct_sum = 0.0;
    std::size_t count = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Trace t = generate_trace(seed, d, TraceDistribution::clustered);
        for (std::size_t l = 0; l < d.layers; ++l)
            for (std::size_t h = 0; h < d.heads; ++h) {
                const HeadInstance inst = prefill(t.head(l, h), t.prompt, 1);
                const ImportanceMatrix im = indicator_matrix(inst);
                const auto row = im.scores.row(0);
                for (std::size_t p : t.planted) {
                    const auto above = std::count_if(row.begin(), row.end(), [&](double s) { return s > row[p]; });
                    pct_sum += static_cast<double>(above) / static_cast<double>(row.size());
                    ++count;
                }
            }
    }
    EXPECT_LT(pct_sum / static_cast<double>(count), 0.10);
}
