#pragma once

// JSON forms of hyperparameter files and synthesis results.

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vqbe/dsl.hpp"
#include "vqbe/errors.hpp"
#include "vqbe/synthesizer.hpp"

namespace vqbe {

/// Reads {b, bw, k, lambda, alpha, n_g, n_p, n_v, duration_values,
/// duration_granularity, predicate_pool, seed, sample_cap, query_cap,
/// active_learning, use_cache, workers}. Missing keys keep their current value.
inline void apply_hyper_json(const nlohmann::json& j, Hyper& h, SearchConfig& c) {
    if (!j.is_object()) throw ParseError("hyperparameter document must be a JSON object", 0, 0);
    try {
        h.b = j.value("b", h.b);
        h.bw = j.value("bw", h.bw);
        h.k = j.value("k", h.k);
        h.lambda = j.value("lambda", h.lambda);
        if (j.contains("alpha")) {
            const auto& a = j.at("alpha");
            if (!a.is_array() || a.size() != 3) throw ParseError("alpha must be an array of three numbers", 0, 0);
            h.alpha = {a[0].get<double>(), a[1].get<double>(), a[2].get<double>()};
        }
        h.seed = j.value("seed", h.seed);
        h.sample_cap = j.value("sample_cap", h.sample_cap);
        h.query_cap = j.value("query_cap", h.query_cap);
        h.active_learning = j.value("active_learning", h.active_learning);
        h.use_cache = j.value("use_cache", h.use_cache);
        h.workers = j.value("workers", h.workers);
        c.n_g = j.value("n_g", c.n_g);
        c.n_p = j.value("n_p", c.n_p);
        c.n_v = j.value("n_v", c.n_v);
        c.duration_values = j.value("duration_values", c.duration_values);
        c.duration_granularity = j.value("duration_granularity", c.duration_granularity);
        c.predicate_pool = j.value("predicate_pool", c.predicate_pool);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("bad hyperparameter value: ") + e.what(), 0, 0);
    }
    if (h.bw < 1 || h.k < 1) throw PreconditionError("bw and k must be at least 1");
    if (h.lambda < 0) throw PreconditionError("lambda must be non-negative");
    c.validate();
}

inline nlohmann::json hyper_to_json(const Hyper& h, const SearchConfig& c) {
    return {{"b", h.b},
            {"bw", h.bw},
            {"k", h.k},
            {"lambda", h.lambda},
            {"alpha", {h.alpha.a1, h.alpha.a2, h.alpha.a3}},
            {"n_g", c.n_g},
            {"n_p", c.n_p},
            {"n_v", c.n_v},
            {"duration_values", c.duration_values},
            {"duration_granularity", c.duration_granularity},
            {"predicate_pool", c.predicate_pool},
            {"seed", h.seed},
            {"sample_cap", h.sample_cap},
            {"query_cap", h.effective_query_cap()},
            {"active_learning", h.active_learning},
            {"use_cache", h.use_cache},
            {"workers", h.workers}};
}

inline nlohmann::json to_json(const CandidateState& c) {
    return {{"query", to_string(c.query)},
            {"canonical", c.key},
            {"complexity", c.complexity},
            {"tp", c.tp},
            {"fp", c.fp},
            {"fn", c.fn},
            {"tn", c.tn},
            {"f1", c.f1},
            {"reg_score", c.reg_score}};
}

inline nlohmann::json to_json(const SynthesisTelemetry& t) {
    return {{"queries_explored", t.queries_explored},
            {"predicate_evals", t.predicate_evals},
            {"cache_hits", t.cache_hits},
            {"cache_misses", t.cache_misses},
            {"segment_evals", t.segment_evals},
            {"wall_time_s", t.wall_time_s}};
}

inline nlohmann::json to_json(const LabeledPool& pool) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& e : pool.entries())
        out.push_back({{"vid", e.vid},
                       {"label", to_string(e.label)},
                       {"provenance", e.provenance == Provenance::initial ? "initial" : "requested"}});
    return out;
}

inline nlohmann::json to_json(const SynthesisResult& r) {
    nlohmann::json top = nlohmann::json::array();
    for (const auto& c : r.top_k) top.push_back(to_json(c));
    return {{"top_k", top},
            {"labels_used", r.labels_used},
            {"iterations", r.iterations},
            {"telemetry", to_json(r.telemetry)},
            {"labels", to_json(r.labels)}};
}

/// [{"vid": ..., "label": "pos"|"neg"}, ...]
inline LabeledPool labels_from_json(const nlohmann::json& j) {
    if (!j.is_array()) throw ParseError("labels must be a JSON array", 0, 0);
    LabeledPool pool;
    for (const auto& e : j) {
        if (!e.is_object() || !e.contains("vid") || !e.contains("label") || !e.at("vid").is_string() ||
            !e.at("label").is_string())
            throw ParseError("each label needs string fields 'vid' and 'label'", 0, 0);
        pool.add(e.at("vid").get<std::string>(), parse_label(e.at("label").get<std::string>()));
    }
    return pool;
}

}  // namespace vqbe
