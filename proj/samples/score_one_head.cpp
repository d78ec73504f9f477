// Score and evict one synthetic head, then compare decode outputs.

#include <cstdio>

#include "restkv/restkv.hpp"

int main() {
    restkv::TraceDims dims;
    dims.layers = 1;
    dims.heads = 1;
    dims.n_prompt = 128;
    dims.n_decode = 8;
    const restkv::Trace trace = restkv::generate_trace(7, dims, restkv::TraceDistribution::clustered);

    restkv::SmoothingConfig cfg;  // alpha 0.3, beta 2000, window 32
    const restkv::HeadInstance head = restkv::prefill(trace.head(0, 0), trace.prompt, cfg.window);

    const restkv::ImportanceMatrix im = restkv::indicator_matrix(head);
    const restkv::SpatialParams sp = restkv::spatial_params(im, 48, cfg);
    const restkv::SmoothedScores scores = restkv::spatial_smooth(restkv::temporal_smooth(im, cfg), sp);
    const restkv::EvictionDecision kept = restkv::select_top_b(scores, 48);

    std::printf("w_s=%zu gamma_shift=%lld kept=%zu of %zu\n", sp.w_s, static_cast<long long>(sp.gamma_shift),
                kept.kept.size(), head.cache.size());
    std::printf("planted retained: %.2f\n", restkv::planted_retention(kept, trace.planted));

    const auto full = restkv::decode_all(head, trace.decode);
    const auto evicted = restkv::decode_all(restkv::compact(head, kept), trace.decode);
    for (std::size_t i = 0; i < full.outputs.size(); ++i)
        std::printf("step %zu  l2 error %.6f\n", i,
                    restkv::l2_distance(full.outputs[i].span(), evicted.outputs[i].span()));
}
