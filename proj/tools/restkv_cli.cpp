// restkv command-line harness: generate / evaluate / oracle-check / inspect.

#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "restkv/oracle_check.hpp"
#include "restkv/report_json.hpp"
#include "restkv/restkv.hpp"

namespace {

struct GenerateArgs {
    std::uint64_t seed = 0;
    restkv::TraceDims dims;
    std::string dist = "gaussian";
    std::string out;
};

struct EvaluateArgs {
    std::string trace;
    std::vector<std::string> policies{"rest_kv", "snap_attn", "streaming", "random"};
    std::vector<std::size_t> budgets{64, 128, 256, 512, 1024};
    restkv::SmoothingConfig smoothing;
    std::size_t sink = 4;
    std::size_t kernel = 5;
    std::uint64_t seed = 0;
    std::string schedule = "uniform";
    std::string report;
    std::string json;
};

int run_generate(const GenerateArgs& a) {
    const restkv::Trace t = restkv::generate_trace(a.seed, a.dims, restkv::parse_distribution(a.dist));
    restkv::write_trace(t, a.out);
    std::cout << "wrote " << a.out << " (" << a.dims.layers << " layers x " << a.dims.heads << " heads, "
              << a.dims.n_prompt << " prompt + " << a.dims.n_decode << " decode tokens)\n";
    if (!t.planted.empty()) {
        std::cout << "planted positions:";
        for (auto p : t.planted) std::cout << ' ' << p;
        std::cout << '\n';
    }
    return 0;
}

int run_evaluate(const EvaluateArgs& a) {
    const restkv::Trace trace = restkv::read_trace(a.trace);
    a.smoothing.validate();
    std::cout << "config: alpha=" << a.smoothing.alpha << " beta=" << a.smoothing.beta
              << " window=" << a.smoothing.window << " sink=" << a.sink << " kernel=" << a.kernel
              << " schedule=" << a.schedule << '\n';

    std::vector<restkv::Policy> policies;
    for (const auto& name : a.policies) {
        restkv::Policy p;
        p.kind = restkv::parse_policy_kind(name);
        p.sink = a.sink;
        p.kernel = a.kernel;
        p.seed = a.seed;
        p.validate();
        policies.push_back(p);
    }
    const auto schedule = restkv::parse_schedule_kind(a.schedule);
    std::vector<restkv::BudgetPlan> plans;
    for (std::size_t n : a.budgets) {
        plans.push_back(restkv::make_budget_plan(schedule, trace.dims.layers, n, a.smoothing.window));
        // Reject infeasible cells before any scoring work.
        for (const auto& p : policies) restkv::check_feasible(trace, p, plans.back(), a.smoothing);
    }

    const restkv::PreparedTrace prepared = restkv::prepare(trace, a.smoothing);
    restkv::RunReport report;
    for (const auto& p : policies)
        for (const auto& plan : plans) report.append(restkv::run_pipeline(prepared, p, plan));
    report.sort();

    if (!a.report.empty()) {
        std::ofstream out(a.report);
        if (!out) throw std::runtime_error("cannot open " + a.report);
        restkv::write_report_csv(report, out);
    } else {
        restkv::write_report_csv(report, std::cout);
    }
    if (!a.json.empty()) {
        std::ofstream out(a.json);
        if (!out) throw std::runtime_error("cannot open " + a.json);
        out << restkv::report_to_json(report).dump(2) << '\n';
    }

    std::map<std::pair<std::string, std::size_t>, std::pair<double, std::size_t>> summary;
    for (const auto& r : report.rows) {
        auto& cell = summary[{r.policy, r.budget}];
        cell.first += r.mean_err;
        ++cell.second;
    }
    std::cout << "policy,budget,mean_err\n";
    for (const auto& [key, cell] : summary)
        std::cout << key.first << ',' << key.second << ','
                  << restkv::format_double(cell.first / static_cast<double>(cell.second)) << '\n';
    return 0;
}

int run_oracle_check_command(const restkv::OracleCheckOptions& opt) {
    const auto res = restkv::run_oracle_check(opt);
    std::printf("trials=%zu equivalence_failures=%zu worst_relative_gap=%.3e\n", res.trials,
                res.equivalence_failures, res.worst_relative_gap);
    std::printf("argmin_failures=%zu renormalization_failures=%zu worst_renormalization_gap=%.3e\n",
                res.argmin_failures, res.renormalization_failures, res.worst_renormalization_gap);
    std::printf("%s\n", res.passed() ? "PASS" : "FAIL");
    return res.passed() ? 0 : 1;
}

int run_inspect(const std::string& path) {
    const restkv::Trace t = restkv::read_trace(path);
    const auto& d = t.dims;
    std::cout << "layers=" << d.layers << " heads=" << d.heads << " n_prompt=" << d.n_prompt
              << " n_decode=" << d.n_decode << " d_model=" << d.d_model << " d_k=" << d.d_k << " d_v=" << d.d_v
              << '\n';
    return 0;
}

// Config file values fill only options not given on the command line.
void apply_config_file(CLI::App& sub, const std::string& path) {
    for (const auto& item : CLI::ConfigINI().from_file(path)) {
        CLI::Option* opt = sub.get_option_no_throw("--" + item.name);
        if (opt == nullptr || item.name == "config" || item.name == "trace")
            throw std::runtime_error(path + ": unknown config key '" + item.name + "'");
        if (opt->count() > 0) continue;
        opt->add_result(item.inputs);
        opt->run_callback();
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"KV-cache eviction harness: output-reconstruction scoring with spatial-temporal smoothing"};
    app.require_subcommand(1);

    GenerateArgs gen;
    auto* g = app.add_subcommand("generate", "write a seeded synthetic trace");
    g->add_option("--seed", gen.seed);
    g->add_option("--layers", gen.dims.layers)->check(CLI::PositiveNumber);
    g->add_option("--heads", gen.dims.heads)->check(CLI::PositiveNumber);
    g->add_option("--prompt-len", gen.dims.n_prompt)->check(CLI::PositiveNumber);
    g->add_option("--decode-len", gen.dims.n_decode);
    g->add_option("--d-model", gen.dims.d_model)->check(CLI::PositiveNumber);
    g->add_option("--d-k", gen.dims.d_k)->check(CLI::PositiveNumber);
    g->add_option("--d-v", gen.dims.d_v)->check(CLI::PositiveNumber);
    g->add_option("--dist", gen.dist)->check(CLI::IsMember({"gaussian", "clustered"}));
    g->add_option("--out", gen.out)->required();

    EvaluateArgs ev;
    auto* e = app.add_subcommand("evaluate", "score, evict and decode a trace under each policy and budget");
    std::string config_path;
    e->add_option("--config", config_path, "key=value defaults (command-line flags take precedence)")
        ->check(CLI::ExistingFile);
    e->add_option("--trace", ev.trace)->required();
    e->add_option("--policies", ev.policies)->delimiter(',');
    e->add_option("--budgets", ev.budgets)->delimiter(',');
    e->add_option("--alpha", ev.smoothing.alpha);
    e->add_option("--beta", ev.smoothing.beta);
    e->add_option("--window", ev.smoothing.window);
    e->add_option("--sink", ev.sink);
    e->add_option("--kernel", ev.kernel);
    e->add_option("--seed", ev.seed, "seed for the random policy");
    e->add_option("--schedule", ev.schedule)->check(CLI::IsMember({"uniform", "pyramid"}));
    e->add_option("--report", ev.report, "CSV output path (stdout if omitted)");
    e->add_option("--json", ev.json, "optional JSON output path");

    restkv::OracleCheckOptions oc;
    auto* o = app.add_subcommand("oracle-check", "closed-form indicator vs brute-force removal");
    o->add_option("--trials", oc.trials);
    o->add_option("--max-n", oc.max_n);
    o->add_option("--tol", oc.tol);
    o->add_option("--seed", oc.seed);

    std::string inspect_path;
    auto* i = app.add_subcommand("inspect", "print trace dimensions");
    i->add_option("--trace", inspect_path)->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*e && !config_path.empty()) apply_config_file(*e, config_path);
        if (*g) return run_generate(gen);
        if (*e) return run_evaluate(ev);
        if (*o) return run_oracle_check_command(oc);
        if (*i) return run_inspect(inspect_path);
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << '\n';
        return 2;
    }
    return 0;
}
