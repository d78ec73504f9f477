#pragma once

// JSON rendering of a RunReport (nlohmann/json).

#include <json.hpp>

#include "restkv/pipeline.hpp"

namespace restkv {

inline nlohmann::json report_to_json(const RunReport& report) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : report.rows) {
        rows.push_back({{"policy", r.policy},
                        {"layer", r.layer},
                        {"head", r.head},
                        {"budget", r.budget},
                        {"mean_err", r.mean_err},
                        {"max_err", r.max_err},
                        {"kept", r.kept},
                        {"peak_entries", r.peak_entries},
                        {"score_ms", r.score_ms}});
    }
    return {{"rows", rows}};
}

inline RunReport report_from_json(const nlohmann::json& j) {
    RunReport report;
    for (const auto& r : j.at("rows")) {
        report.rows.push_back({r.at("policy").get<std::string>(), r.at("layer").get<std::size_t>(),
                               r.at("head").get<std::size_t>(), r.at("budget").get<std::size_t>(),
                               r.at("mean_err").get<double>(), r.at("max_err").get<double>(),
                               r.at("kept").get<std::size_t>(), r.at("peak_entries").get<std::size_t>(),
                               r.at("score_ms").get<double>()});
    }
    return report;
}

}  // namespace restkv
