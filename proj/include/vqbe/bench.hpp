#pragma once

// Experiment harness: generate a dataset, split it, and for every (target,
// budget, noise rate, repetition) synthesize from a few labeled examples with
// a simulated labeler, then score the best query on the held-out split.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vqbe/datagen.hpp"
#include "vqbe/dsl.hpp"
#include "vqbe/errors.hpp"
#include "vqbe/executor.hpp"
#include "vqbe/json_io.hpp"
#include "vqbe/oracle.hpp"
#include "vqbe/parallel.hpp"
#include "vqbe/synthesizer.hpp"

namespace vqbe {

/// F1 of a predicted vid set against the true one, both within `universe`.
inline double f1(const std::set<std::string>& predicted, const std::set<std::string>& truth,
                 const std::set<std::string>& universe) {
    for (const auto* s : {&predicted, &truth})
        for (const auto& v : *s)
            if (!universe.count(v)) throw PreconditionError("vid '" + v + "' outside the evaluation universe");
    int tp = 0;
    for (const auto& v : predicted) tp += static_cast<int>(truth.count(v));
    return f1_from_counts(tp, static_cast<int>(predicted.size()) - tp, static_cast<int>(truth.size()) - tp);
}

inline double median(std::vector<double> v) {
    if (v.empty()) return 0;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2;
}

struct ExperimentSpec {
    std::string name = "experiment";
    GenSpec dataset;
    std::vector<std::string> targets{"TQ1"};  // target ids or query text
    int initial_pos = 2;
    int initial_neg = 10;
    std::vector<int> budgets{30};
    std::vector<double> fn_rates{0.0};  // fp rate is a tenth of each
    Hyper hyper;
    SearchConfig config;
    int repetitions = 10;
    int train_size = 500;
    int test_size = 1000;
    int workers = 1;  // repetitions run concurrently

    void validate() const {
        if (repetitions < 1) throw PreconditionError("repetitions must be at least 1");
        if (train_size < 1 || test_size < 1) throw PreconditionError("train and test sizes must be positive");
        if (dataset.n_segments < train_size + test_size)
            throw PreconditionError("dataset smaller than train_size + test_size");
        if (initial_pos < 1 || initial_neg < 1) throw PreconditionError("need at least one initial pos and neg");
        if (targets.empty() || budgets.empty() || fn_rates.empty())
            throw PreconditionError("targets, budgets and fn_rates must be non-empty");
        for (double r : fn_rates)
            if (r < 0 || r > 1) throw PreconditionError("fn rates must lie in [0, 1]");
        dataset.validate();
        config.validate();
    }
};

/// Adapts a search config to a target: the trajectory pool when none is set,
/// no duration values unless the target itself has a duration constraint,
/// and enough variables for the target.
inline SearchConfig config_for_target(SearchConfig c, const Query& target) {
    if (c.predicate_pool.empty()) c.predicate_pool = trajectory_pool();
    bool durations = false;
    for (const auto& g : target.graphs) durations = durations || g.duration > 1;
    if (!durations) c.duration_values.clear();
    c.n_v = std::max(c.n_v, target.var_count());
    return c;
}

inline ExperimentSpec experiment_from_json(const nlohmann::json& j) {
    ExperimentSpec s;
    try {
        s.name = j.value("name", s.name);
        s.dataset.n_segments = 0;
        if (j.contains("dataset")) s.dataset = gen_spec_from_json(j.at("dataset"));
        if (j.contains("target")) s.targets = {j.at("target").get<std::string>()};
        if (j.contains("targets")) s.targets = j.at("targets").get<std::vector<std::string>>();
        s.initial_pos = j.value("initial_pos", s.initial_pos);
        s.initial_neg = j.value("initial_neg", s.initial_neg);
        if (j.contains("budget")) s.budgets = {j.at("budget").get<int>()};
        if (j.contains("budgets")) s.budgets = j.at("budgets").get<std::vector<int>>();
        if (j.contains("fn_rate")) s.fn_rates = {j.at("fn_rate").get<double>()};
        if (j.contains("fn_rates")) s.fn_rates = j.at("fn_rates").get<std::vector<double>>();
        s.repetitions = j.value("repetitions", s.repetitions);
        s.train_size = j.value("train_size", s.train_size);
        s.test_size = j.value("test_size", s.test_size);
        s.workers = j.value("workers", s.workers);
        s.config.predicate_pool = trajectory_pool();
        if (j.contains("hyper")) apply_hyper_json(j.at("hyper"), s.hyper, s.config);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("bad experiment document: ") + e.what(), 0, 0);
    }
    if (!j.contains("dataset")) s.dataset.n_segments = s.train_size + s.test_size;
    s.validate();
    return s;
}

struct RepetitionRow {
    std::string target;
    int budget = 0;
    double fn_rate = 0;
    int repetition = 0;
    std::uint64_t seed = 0;
    bool ok = true;
    std::string error;
    double test_f1 = 0;
    double train_f1 = 0;
    std::string top_query;
    int tied_best = 0;
    int candidates = 0;
    int labels_used = 0;
    int iterations = 0;
    double wall_time_s = 0;
    std::uint64_t queries_explored = 0;
    std::uint64_t predicate_evals = 0;
    double cache_hit_rate = 0;
};

struct SummaryRow {
    std::string target;
    int budget = 0;
    double fn_rate = 0;
    int runs = 0;
    int failures = 0;
    double median_f1 = 0;
    double median_time_s = 0;
    double k_returned_rate = 0;  // fraction of runs returning exactly k candidates
};

struct ExperimentReport {
    std::string name;
    std::vector<RepetitionRow> rows;
    std::vector<SummaryRow> summary;
};

/// Median test F1 over the candidates tied with the best reg_score.
inline std::pair<double, int> tied_best_test_f1(const SynthesisResult& r, const SegmentStore& test_store,
                                                const std::set<std::string>& truth, const PredicateRegistry& reg) {
    if (r.top_k.empty()) return {0.0, 0};
    std::set<std::string> universe;
    for (const auto& v : test_store.vids()) universe.insert(v);
    std::vector<double> scores;
    for (const auto& c : r.top_k) {
        if (c.reg_score != r.top_k.front().reg_score) break;
        const auto hits = execute(c.query, test_store, reg);
        scores.push_back(f1({hits.begin(), hits.end()}, truth, universe));
    }
    return {median(scores), static_cast<int>(scores.size())};
}

inline std::uint64_t repetition_seed(std::uint64_t base, int rep) {
    return splitmix64(base ^ splitmix64(static_cast<std::uint64_t>(rep) + 0x5151));
}

/// Random n_pos positive and n_neg negative examples among `vids`, as judged
/// by `oracle`. Positives come first.
inline LabeledPool sample_initial_labels(LabelOracle& oracle, const std::vector<std::string>& vids, int n_pos,
                                         int n_neg, std::uint64_t seed) {
    std::vector<std::string> pos, neg;
    for (const auto& v : vids) (oracle.label(v) == Label::pos ? pos : neg).push_back(v);
    if (static_cast<int>(pos.size()) < n_pos || static_cast<int>(neg.size()) < n_neg)
        throw PreconditionError("too few positive or negative segments for the initial labels (" +
                                std::to_string(pos.size()) + " positive, " + std::to_string(neg.size()) +
                                " negative)");
    std::mt19937_64 rng(seed);
    std::shuffle(pos.begin(), pos.end(), rng);
    std::shuffle(neg.begin(), neg.end(), rng);
    LabeledPool initial;
    for (int i = 0; i < n_pos; ++i) initial.add(pos[static_cast<std::size_t>(i)], Label::pos);
    for (int i = 0; i < n_neg; ++i) initial.add(neg[static_cast<std::size_t>(i)], Label::neg);
    return initial;
}

/// Runs one repetition; never throws for synthesis failures (they become a
/// failed row with F1 0).
inline RepetitionRow run_repetition(const ExperimentSpec& spec, const std::string& target_name, const Query& target,
                                    const SearchConfig& config, int budget, double fn_rate, int rep,
                                    const std::shared_ptr<const SegmentStore>& train,
                                    const SegmentStore& test, const std::set<std::string>& test_truth,
                                    const PredicateRegistry& reg) {
    RepetitionRow row;
    row.target = target_name;
    row.budget = budget;
    row.fn_rate = fn_rate;
    row.repetition = rep;
    row.seed = repetition_seed(spec.hyper.seed, rep);
    try {
        std::shared_ptr<LabelOracle> oracle = std::make_shared<GroundTruthOracle>(target, train, reg);
        if (fn_rate > 0) oracle = std::make_shared<NoisyOracle>(oracle, NoiseSpec::protocol(fn_rate, row.seed));

        // Initial examples are drawn from the (possibly noisy) labels, as a
        // user would pick them from a labeled collection.
        const LabeledPool initial = sample_initial_labels(*oracle, train->vids(), spec.initial_pos, spec.initial_neg, row.seed);

        Hyper h = spec.hyper;
        h.b = budget;
        h.seed = row.seed;
        const SynthesisResult res = synthesize(*train, reg, initial, *oracle, config, h);
        auto [f, tied] = tied_best_test_f1(res, test, test_truth, reg);
        row.test_f1 = f;
        row.tied_best = tied;
        row.candidates = static_cast<int>(res.top_k.size());
        if (!res.top_k.empty()) {
            row.top_query = to_string(res.top_k.front().query);
            row.train_f1 = res.top_k.front().f1;
        }
        row.labels_used = res.labels_used;
        row.iterations = res.iterations;
        row.wall_time_s = res.telemetry.wall_time_s;
        row.queries_explored = res.telemetry.queries_explored;
        row.predicate_evals = res.telemetry.predicate_evals;
        const double lookups = static_cast<double>(res.telemetry.cache_hits + res.telemetry.cache_misses);
        row.cache_hit_rate = lookups > 0 ? static_cast<double>(res.telemetry.cache_hits) / lookups : 0.0;
    } catch (const std::exception& e) {
        row.ok = false;
        row.error = e.what();
        row.test_f1 = 0;
    }
    return row;
}

inline ExperimentReport run_experiment(const ExperimentSpec& spec, const PredicateRegistry& reg = builtin_registry()) {
    spec.validate();
    const SegmentStore all = generate(spec.dataset, spec.workers);
    const auto vids = all.vids();
    const std::vector<std::string> train_vids(vids.begin(), vids.begin() + spec.train_size);
    const std::vector<std::string> test_vids(vids.begin() + spec.train_size,
                                             vids.begin() + spec.train_size + spec.test_size);
    const auto train = std::make_shared<const SegmentStore>(all.subset(train_vids));
    const SegmentStore test = all.subset(test_vids);

    ExperimentReport report;
    report.name = spec.name;
    struct Job {
        std::string name;
        std::size_t target;
        int budget;
        double fn;
        int rep;
    };
    std::vector<Query> targets;
    std::vector<std::set<std::string>> truths;
    std::vector<SearchConfig> configs;
    std::vector<Job> jobs;
    for (std::size_t ti = 0; ti < spec.targets.size(); ++ti) {
        const Query q = resolve_target(spec.targets[ti], reg);
        targets.push_back(q);
        const auto hits = execute(q, test, reg);
        truths.emplace_back(hits.begin(), hits.end());
        configs.push_back(config_for_target(spec.config, q));
        for (int b : spec.budgets)
            for (double fn : spec.fn_rates)
                for (int r = 0; r < spec.repetitions; ++r) jobs.push_back({spec.targets[ti], ti, b, fn, r});
    }
    report.rows.resize(jobs.size());
    parallel_for(jobs.size(), spec.workers, [&](std::size_t i) {
        const Job& j = jobs[i];
        report.rows[i] = run_repetition(spec, j.name, targets[j.target], configs[j.target], j.budget, j.fn, j.rep,
                                        train, test, truths[j.target], reg);
    });

    std::map<std::tuple<std::string, int, double>, std::vector<const RepetitionRow*>> groups;
    std::vector<std::tuple<std::string, int, double>> order;
    for (const auto& r : report.rows) {
        auto key = std::make_tuple(r.target, r.budget, r.fn_rate);
        if (!groups.count(key)) order.push_back(key);
        groups[key].push_back(&r);
    }
    for (const auto& key : order) {
        const auto& rows = groups[key];
        SummaryRow s;
        std::tie(s.target, s.budget, s.fn_rate) = key;
        std::vector<double> f1s, times;
        int full = 0;
        for (const auto* r : rows) {
            ++s.runs;
            if (!r->ok) ++s.failures;
            f1s.push_back(r->test_f1);
            if (r->ok) times.push_back(r->wall_time_s);
            if (r->ok && r->candidates == spec.hyper.k) ++full;
        }
        s.median_f1 = median(f1s);
        s.median_time_s = median(times);
        s.k_returned_rate = static_cast<double>(full) / s.runs;
        report.summary.push_back(s);
    }
    return report;
}

inline nlohmann::json to_json(const ExperimentReport& r) {
    nlohmann::json rows = nlohmann::json::array(), summary = nlohmann::json::array();
    for (const auto& x : r.rows)
        rows.push_back({{"target", x.target},
                        {"budget", x.budget},
                        {"fn_rate", x.fn_rate},
                        {"repetition", x.repetition},
                        {"seed", x.seed},
                        {"status", x.ok ? "ok" : "failed"},
                        {"error", x.error},
                        {"test_f1", x.test_f1},
                        {"train_f1", x.train_f1},
                        {"top_query", x.top_query},
                        {"tied_best", x.tied_best},
                        {"candidates", x.candidates},
                        {"labels_used", x.labels_used},
                        {"iterations", x.iterations},
                        {"wall_time_s", x.wall_time_s},
                        {"queries_explored", x.queries_explored},
                        {"predicate_evals", x.predicate_evals},
                        {"cache_hit_rate", x.cache_hit_rate}});
    for (const auto& s : r.summary)
        summary.push_back({{"target", s.target},
                           {"budget", s.budget},
                           {"fn_rate", s.fn_rate},
                           {"runs", s.runs},
                           {"failures", s.failures},
                           {"median_f1", s.median_f1},
                           {"median_time_s", s.median_time_s},
                           {"k_returned_rate", s.k_returned_rate}});
    return {{"name", r.name}, {"rows", rows}, {"summary", summary}};
}

inline std::string to_csv(const ExperimentReport& r) {
    std::ostringstream out;
    out << "target,budget,fn_rate,repetition,seed,status,test_f1,train_f1,candidates,labels_used,iterations,"
           "wall_time_s,queries_explored,predicate_evals,cache_hit_rate,top_query,error\n";
    for (const auto& x : r.rows) {
        out << detail::csv_field(x.target) << ',' << x.budget << ',' << x.fn_rate << ',' << x.repetition << ','
            << x.seed << ',' << (x.ok ? "ok" : "failed") << ',' << x.test_f1 << ',' << x.train_f1 << ','
            << x.candidates << ',' << x.labels_used << ',' << x.iterations << ',' << x.wall_time_s << ','
            << x.queries_explored << ',' << x.predicate_evals << ',' << x.cache_hit_rate << ','
            << detail::csv_field(x.top_query) << ',' << detail::csv_field(x.error) << '\n';
    }
    return out.str();
}

/// Line chart of median F1 per target against budget or noise rate.
/// Returns an empty string when the sweep has a single x value.
inline std::string svg_plot(const ExperimentReport& r, bool by_noise) {
    std::map<std::string, std::vector<std::pair<double, double>>> series;
    std::set<double> xs;
    for (const auto& s : r.summary) {
        const double x = by_noise ? s.fn_rate : s.budget;
        series[s.target].emplace_back(x, s.median_f1);
        xs.insert(x);
    }
    if (xs.size() < 2) return {};
    const double w = 480, h = 320, m = 48;
    const double x0 = *xs.begin(), x1 = *xs.rbegin();
    auto px = [&](double x) { return m + (x - x0) / (x1 - x0) * (w - 2 * m); };
    auto py = [&](double y) { return h - m - y * (h - 2 * m); };
    static const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                   "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
    o << "<line x1=\"" << m << "\" y1=\"" << h - m << "\" x2=\"" << w - m << "\" y2=\"" << h - m
      << "\" stroke=\"black\"/>\n";
    o << "<line x1=\"" << m << "\" y1=\"" << m << "\" x2=\"" << m << "\" y2=\"" << h - m << "\" stroke=\"black\"/>\n";
    o << "<text x=\"" << w / 2 << "\" y=\"" << h - 10 << "\" text-anchor=\"middle\">"
      << (by_noise ? "false negative rate" : "labeling budget") << "</text>\n";
    o << "<text x=\"14\" y=\"" << h / 2 << "\" transform=\"rotate(-90 14 " << h / 2
      << ")\" text-anchor=\"middle\">median F1</text>\n";
    for (double x : xs)
        o << "<text x=\"" << px(x) << "\" y=\"" << h - m + 16 << "\" text-anchor=\"middle\" font-size=\"10\">" << x
          << "</text>\n";
    for (double y : {0.0, 0.5, 1.0})
        o << "<text x=\"" << m - 6 << "\" y=\"" << py(y) + 4 << "\" text-anchor=\"end\" font-size=\"10\">" << y
          << "</text>\n";
    std::size_t ci = 0;
    for (auto& [name, pts] : series) {
        std::sort(pts.begin(), pts.end());
        const char* c = colors[ci % 10];
        o << "<polyline fill=\"none\" stroke=\"" << c << "\" points=\"";
        for (const auto& [x, y] : pts) o << px(x) << ',' << py(y) << ' ';
        o << "\"/>\n";
        o << "<text x=\"" << w - m + 4 << "\" y=\"" << m + 12 * static_cast<double>(ci) << "\" fill=\"" << c
          << "\" font-size=\"10\">" << name << "</text>\n";
        ++ci;
    }
    o << "</svg>\n";
    return o.str();
}

}  // namespace vqbe
