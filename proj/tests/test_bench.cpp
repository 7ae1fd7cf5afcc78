#include <gtest/gtest.h>

#include "support.hpp"

using namespace vqbe;

namespace {

ExperimentSpec small_spec() {
    ExperimentSpec s;
    s.name = "smoke";
    s.dataset.n_segments = 300;
    s.dataset.seed = 1;
    s.train_size = 150;
    s.test_size = 150;
    s.targets = {"TQ6"};
    s.budgets = {14, 24};
    s.repetitions = 3;
    s.hyper.k = 10;
    s.config.predicate_pool = trajectory_pool();
    return s;
}

}  // namespace

TEST(BenchMetrics, F1OnSets) {
    const std::set<std::string> u{"a", "b", "c", "d"};
    EXPECT_NEAR(f1({"a"}, {"a", "b"}, u), 2.0 / 3.0, 1e-12);
    EXPECT_DOUBLE_EQ(f1({"a", "b"}, {"a", "b"}, u), 1.0);
    EXPECT_DOUBLE_EQ(f1({"a", "b"}, {"a", "c"}, u), 0.5);
    EXPECT_DOUBLE_EQ(f1({"c"}, {"a"}, u), 0.0);
    EXPECT_DOUBLE_EQ(f1({}, {"a"}, u), 0.0);
    EXPECT_DOUBLE_EQ(f1({}, {}, u), 0.0);
    EXPECT_THROW(f1({"z"}, {"a"}, u), PreconditionError);
}

TEST(BenchMetrics, Median) {
    EXPECT_EQ(median({}), 0.0);
    EXPECT_EQ(median({3}), 3.0);
    EXPECT_EQ(median({4, 1, 3}), 3.0);
    EXPECT_EQ(median({4, 1, 3, 2}), 2.5);
}

TEST(BenchMetrics, RepetitionSeedsDiffer) {
    std::set<std::uint64_t> seen;
    for (int r = 0; r < 50; ++r) seen.insert(repetition_seed(0, r));
    EXPECT_EQ(seen.size(), 50u);
    EXPECT_EQ(repetition_seed(7, 3), repetition_seed(7, 3));
}

TEST(BenchMetrics, TiedBestTakesMedianOverTies) {
    const SegmentStore store({vqbe::testing::scripted_pair("s1", "nnmff"), vqbe::testing::scripted_pair("s2", "nnmmm"),
                              vqbe::testing::scripted_pair("s3", "mmmff")});
    const auto reg = builtin_registry();
    SynthesisResult r;
    for (const char* t : {"Near(o1, o2)", "Far(o1, o2)", "Behind(o1, o2)"}) {
        CandidateState c;
        c.query = parse(t, reg);
        c.reg_score = std::string(t) == "Behind(o1, o2)" ? 0.1 : 0.9;
        r.top_k.push_back(c);
    }
    // truth {s1, s2}: Near scores 1, Far scores 0.5; Behind is not tied
    const auto [f, tied] = tied_best_test_f1(r, store, {"s1", "s2"}, reg);
    EXPECT_EQ(tied, 2);
    EXPECT_DOUBLE_EQ(f, 0.75);
    EXPECT_EQ(tied_best_test_f1(SynthesisResult{}, store, {"s1"}, reg).second, 0);
}

TEST(BenchConfig, TargetAdaptation) {
    const auto reg = builtin_registry();
    const auto plain = config_for_target(SearchConfig{}, resolve_target("TQ6", reg));
    EXPECT_TRUE(plain.duration_values.empty());
    EXPECT_EQ(plain.predicate_pool, trajectory_pool());
    const auto dur = config_for_target(SearchConfig{}, resolve_target("TQ1D", reg));
    EXPECT_EQ(dur.duration_values, (std::vector<int>{5, 10, 15}));
    EXPECT_EQ(config_for_target(SearchConfig{}, resolve_target("SQ2", reg)).n_v, 3);
}

TEST(BenchConfig, ExperimentJson) {
    const auto j = nlohmann::json::parse(R"({
        "name": "x", "targets": ["TQ1", "TQ6"], "budgets": [20, 30], "fn_rates": [0, 0.2],
        "repetitions": 2, "train_size": 40, "test_size": 60,
        "hyper": {"bw": 4, "k": 7, "lambda": 0.05}
    })");
    const auto s = experiment_from_json(j);
    EXPECT_EQ(s.targets.size(), 2u);
    EXPECT_EQ(s.dataset.n_segments, 100);
    EXPECT_EQ(s.hyper.bw, 4);
    EXPECT_EQ(s.hyper.k, 7);
    EXPECT_DOUBLE_EQ(s.hyper.lambda, 0.05);
    EXPECT_EQ(s.config.predicate_pool, trajectory_pool());
    EXPECT_THROW(experiment_from_json(nlohmann::json::parse(R"({"repetitions": 0})")), PreconditionError);
    EXPECT_THROW(experiment_from_json(nlohmann::json::parse(R"({"budgets": "many"})")), ParseError);
    EXPECT_THROW(experiment_from_json(nlohmann::json::parse(R"({"fn_rates": [1.5]})")), PreconditionError);
}

TEST(BenchRun, SmokeSweep) {
    const auto spec = small_spec();
    const auto report = run_experiment(spec);
    ASSERT_EQ(report.rows.size(), 2u * 3u);
    ASSERT_EQ(report.summary.size(), 2u);
    for (const auto& r : report.rows) {
        EXPECT_TRUE(r.ok) << r.error;
        EXPECT_EQ(r.labels_used, r.budget);
        EXPECT_GE(r.test_f1, 0.0);
        EXPECT_LE(r.test_f1, 1.0);
        EXPECT_GE(r.tied_best, 1);
        EXPECT_FALSE(r.top_query.empty());
    }
    EXPECT_EQ(report.summary[0].budget, 14);
    EXPECT_EQ(report.summary[1].budget, 24);
    EXPECT_EQ(report.summary[0].runs, 3);
    EXPECT_DOUBLE_EQ(report.summary[0].k_returned_rate, 1.0);

    const std::string csv = to_csv(report);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 7);
    EXPECT_EQ(to_json(report).at("rows").size(), 6u);
    EXPECT_NE(svg_plot(report, false).find("<polyline"), std::string::npos);
    EXPECT_TRUE(svg_plot(report, true).empty());
}

TEST(BenchRun, DeterministicAcrossWorkerCounts) {
    auto spec = small_spec();
    spec.budgets = {20};
    spec.repetitions = 2;
    const auto a = run_experiment(spec);
    spec.workers = 2;
    const auto b = run_experiment(spec);
    ASSERT_EQ(a.rows.size(), b.rows.size());
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
        EXPECT_EQ(a.rows[i].top_query, b.rows[i].top_query);
        EXPECT_EQ(a.rows[i].test_f1, b.rows[i].test_f1);
    }
}

TEST(BenchRun, ImpossibleInitialLabelsBecomeFailedRows) {
    auto spec = small_spec();
    spec.targets = {"(Near(o1, o2), Far(o1, o2))"};  // never true
    spec.budgets = {20};
    spec.repetitions = 1;
    const auto report = run_experiment(spec);
    ASSERT_EQ(report.rows.size(), 1u);
    EXPECT_FALSE(report.rows[0].ok);
    EXPECT_EQ(report.rows[0].test_f1, 0.0);
    EXPECT_EQ(report.summary[0].failures, 1);
}

TEST(JsonIo, HyperRoundTrip) {
    Hyper h;
    SearchConfig c;
    apply_hyper_json(nlohmann::json::parse(R"({"b": 44, "bw": 3, "alpha": [2, 1, 0.5], "duration_values": [4, 8],
                                               "predicate_pool": ["Near", "Far"], "active_learning": false})"),
                     h, c);
    EXPECT_EQ(h.b, 44);
    EXPECT_EQ(h.alpha.a3, 0.5);
    EXPECT_FALSE(h.active_learning);
    Hyper h2;
    SearchConfig c2;
    apply_hyper_json(hyper_to_json(h, c), h2, c2);
    EXPECT_EQ(hyper_to_json(h2, c2), hyper_to_json(h, c));
    EXPECT_THROW(apply_hyper_json(nlohmann::json::parse(R"({"alpha": [1, 2]})"), h, c), ParseError);
    EXPECT_THROW(apply_hyper_json(nlohmann::json::parse(R"({"k": 0})"), h, c), PreconditionError);
    EXPECT_THROW(apply_hyper_json(nlohmann::json::parse(R"({"duration_values": [8, 4]})"), h, c), PreconditionError);
    EXPECT_THROW(apply_hyper_json(nlohmann::json::parse("[]"), h, c), ParseError);
}

TEST(JsonIo, LabelsRoundTrip) {
    LabeledPool p{{"a", Label::pos}, {"b", Label::neg}};
    p.add("c", Label::pos, Provenance::requested);
    const auto back = labels_from_json(to_json(p));
    ASSERT_EQ(back.size(), 3u);
    EXPECT_EQ(back.entries()[2].vid, "c");
    EXPECT_EQ(back.count(Label::pos), 2u);
    EXPECT_THROW(labels_from_json(nlohmann::json::parse(R"([{"vid": "a"}])")), ParseError);
    EXPECT_THROW(labels_from_json(nlohmann::json::parse(R"([{"vid": "a", "label": "pos"}, {"vid": "a", "label": "neg"}])")),
                 PreconditionError);
}
