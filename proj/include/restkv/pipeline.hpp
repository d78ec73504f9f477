#pragma once

// Prefill -> evict once -> decode, per head, compared against the full cache.

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstddef>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <system_error>
#include <tuple>
#include <vector>

#include "restkv/attention.hpp"
#include "restkv/errors.hpp"
#include "restkv/policies.hpp"
#include "restkv/smoothing.hpp"
#include "restkv/trace.hpp"

namespace restkv {

struct ReportRow {
    std::string policy;
    std::size_t layer = 0;
    std::size_t head = 0;
    std::size_t budget = 0;
    double mean_err = 0.0;
    double max_err = 0.0;
    std::size_t kept = 0;
    std::size_t peak_entries = 0;
    double score_ms = 0.0;

    friend bool operator==(const ReportRow&, const ReportRow&) = default;
};

struct RunReport {
    std::vector<ReportRow> rows;

    // Order by (policy, budget, layer, head).
    void sort() {
        std::sort(rows.begin(), rows.end(), [](const ReportRow& a, const ReportRow& b) {
            return std::tie(a.policy, a.budget, a.layer, a.head) < std::tie(b.policy, b.budget, b.layer, b.head);
        });
    }

    void append(const RunReport& other) { rows.insert(rows.end(), other.rows.begin(), other.rows.end()); }

    double mean_error() const {
        if (rows.empty()) return 0.0;
        double s = 0.0;
        for (const auto& r : rows) s += r.mean_err;
        return s / static_cast<double>(rows.size());
    }
};

struct DecodeRun {
    std::vector<Vector> outputs;
    KvCache final_cache;
};

// Decode every row of `tokens` against `instance`'s cache without eviction.
inline DecodeRun decode_all(HeadInstance instance, const Matrix& tokens) {
    DecodeRun run{{}, instance.cache};
    run.outputs.reserve(tokens.rows());
    for (std::size_t i = 0; i < tokens.rows(); ++i) run.outputs.push_back(decode_step(instance, Vector(tokens.row(i))));
    run.final_cache = std::move(instance.cache);
    return run;
}

// Head instance with the cache compacted to `decision.kept`.
inline HeadInstance compact(const HeadInstance& instance, const EvictionDecision& decision) {
    HeadInstance out = instance;
    out.cache = instance.cache.retain(decision.kept);
    return out;
}

// Prefilled heads and full-cache decode outputs for one trace; shared by
// every (policy, budget) evaluated on it.
struct PreparedTrace {
    const Trace* trace = nullptr;
    SmoothingConfig cfg;
    std::vector<std::vector<HeadInstance>> instances;          // [layer][head]
    std::vector<std::vector<std::vector<Vector>>> reference;   // [layer][head][step]
};

inline PreparedTrace prepare(const Trace& trace, const SmoothingConfig& cfg) {
    trace.validate();
    cfg.validate();
    PreparedTrace p;
    p.trace = &trace;
    p.cfg = cfg;
    p.instances.resize(trace.dims.layers);
    p.reference.resize(trace.dims.layers);
    for (std::size_t l = 0; l < trace.dims.layers; ++l) {
        for (std::size_t h = 0; h < trace.dims.heads; ++h) {
            HeadInstance inst = prefill(trace.head(l, h), trace.prompt, cfg.window);
            p.reference[l].push_back(decode_all(inst, trace.decode).outputs);
            p.instances[l].push_back(std::move(inst));
        }
    }
    return p;
}

inline void check_feasible(const Trace& trace, const Policy& policy, const BudgetPlan& plan,
                           const SmoothingConfig& cfg) {
    if (plan.per_layer.size() != trace.dims.layers)
        throw DomainError("budget plan has " + std::to_string(plan.per_layer.size()) + " layers, trace has " +
                          std::to_string(trace.dims.layers));
    const std::size_t minimum = min_feasible_budget(policy, trace.dims.n_prompt, cfg);
    for (std::size_t b : plan.per_layer) {
        if (b < trace.dims.n_prompt && b < minimum)
            throw BudgetError(std::string(to_string(policy.kind)) + ": budget " + std::to_string(b) +
                                  " is infeasible",
                              minimum);
    }
}

struct HeadEvaluation {
    EvictionDecision decision;
    std::vector<double> step_errors;
    KvCache final_cache;
    double score_ms = 0.0;
};

inline HeadEvaluation evaluate_head(const PreparedTrace& prepared, std::size_t layer, std::size_t head,
                                    const Policy& policy, std::size_t budget) {
    const HeadInstance& inst = prepared.instances.at(layer).at(head);
    const auto start = std::chrono::steady_clock::now();
    EvictionDecision decision = decide(policy, inst, budget, prepared.cfg);
    const auto stop = std::chrono::steady_clock::now();
    decision.layer = layer;
    decision.head = head;

    DecodeRun run = decode_all(compact(inst, decision), prepared.trace->decode);
    const auto& ref = prepared.reference[layer][head];
    std::vector<double> errors(run.outputs.size());
    for (std::size_t i = 0; i < errors.size(); ++i) errors[i] = l2_distance(ref[i].span(), run.outputs[i].span());
    return {std::move(decision), std::move(errors), std::move(run.final_cache),
            std::chrono::duration<double, std::milli>(stop - start).count()};
}

inline RunReport run_pipeline(const PreparedTrace& prepared, const Policy& policy, const BudgetPlan& plan) {
    const Trace& trace = *prepared.trace;
    check_feasible(trace, policy, plan, prepared.cfg);
    RunReport report;
    for (std::size_t l = 0; l < trace.dims.layers; ++l) {
        for (std::size_t h = 0; h < trace.dims.heads; ++h) {
            const HeadEvaluation ev = evaluate_head(prepared, l, h, policy, plan.per_layer[l]);
            ReportRow row;
            row.policy = std::string(to_string(policy.kind));
            row.layer = l;
            row.head = h;
            row.budget = plan.per_layer[l];
            for (double e : ev.step_errors) {
                row.mean_err += e;
                row.max_err = std::max(row.max_err, e);
            }
            if (!ev.step_errors.empty()) row.mean_err /= static_cast<double>(ev.step_errors.size());
            row.kept = ev.decision.kept.size();
            row.peak_entries = row.kept + trace.dims.n_decode;
            row.score_ms = ev.score_ms;
            report.rows.push_back(std::move(row));
        }
    }
    return report;
}

inline RunReport run_pipeline(const Trace& trace, const Policy& policy, const BudgetPlan& plan,
                              const SmoothingConfig& cfg) {
    check_feasible(trace, policy, plan, cfg);
    return run_pipeline(prepare(trace, cfg), policy, plan);
}

// Fraction of planted positions that survive `decision`.
inline double planted_retention(const EvictionDecision& decision, const std::vector<std::size_t>& planted) {
    if (planted.empty()) return 1.0;
    std::size_t hit = 0;
    for (std::size_t p : planted)
        if (std::binary_search(decision.kept.begin(), decision.kept.end(), p)) ++hit;
    return static_cast<double>(hit) / static_cast<double>(planted.size());
}

inline constexpr const char* kReportHeader =
    "policy,layer,head,budget,mean_err,max_err,kept,peak_entries,score_ms";

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void write_report_csv(const RunReport& report, std::ostream& out) {
    out << kReportHeader << '\n';
    for (const auto& r : report.rows) {
        out << r.policy << ',' << r.layer << ',' << r.head << ',' << r.budget << ',' << format_double(r.mean_err)
            << ',' << format_double(r.max_err) << ',' << r.kept << ',' << r.peak_entries << ','
            << format_double(r.score_ms) << '\n';
    }
}

inline RunReport read_report_csv(std::istream& in) {
    RunReport report;
    std::string line;
    std::size_t offset = 0;
    if (!std::getline(in, line) || line != kReportHeader) throw FormatError("bad report header", 0);
    offset += line.size() + 1;
    while (std::getline(in, line)) {
        const std::size_t line_at = offset;
        offset += line.size() + 1;
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != 9) throw FormatError("expected 9 report columns", line_at);
        // from_chars round-trips subnormals, which stod rejects as out of range.
        auto parse = [&](const std::string& s, auto& out) {
            const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
            if (ec != std::errc{} || end != s.data() + s.size())
                throw FormatError("unparseable report cell '" + s + "'", line_at);
        };
        ReportRow row;
        row.policy = cells[0];
        parse(cells[1], row.layer);
        parse(cells[2], row.head);
        parse(cells[3], row.budget);
        parse(cells[4], row.mean_err);
        parse(cells[5], row.max_err);
        parse(cells[6], row.kept);
        parse(cells[7], row.peak_entries);
        parse(cells[8], row.score_ms);
        report.rows.push_back(std::move(row));
    }
    return report;
}

}  // namespace restkv
