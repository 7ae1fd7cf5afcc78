#include <gtest/gtest.h>

#include <functional>
#include <random>

#include "support.hpp"

using namespace vqbe;
using namespace vqbe::testing;

namespace {

const PredicateRegistry& reg() {
    static const PredicateRegistry r = builtin_registry();
    return r;
}

Query q(const std::string& text) { return parse(text, reg(), 3); }

PredicateRegistry cross_check_pool() {
    return reg().subset({"Near", "Far", "LeftOf", "RightOf", "FrontOf", "Behind", "Left", "Right", "Top", "Bottom",
                         "Material"});
}

// Per-frame truth of a graph under an assignment, straight from eval_predicate.
bool holds(const RegionGraphSpec& g, const Segment& s, const std::vector<int>& oids, int f) {
    for (const auto& a : g.atoms) {
        std::vector<int> args;
        for (int i = 0; i < a.arity; ++i) {
            const int oid = oids[static_cast<std::size_t>(a.vars[i])];
            if (!s.find_track(oid)->frames[f].present) return false;
            args.push_back(oid);
        }
        std::optional<std::string_view> c;
        if (!a.constant.empty()) c = a.constant;
        if (!eval_predicate(reg().at(a.predicate), s, f, args, c)) return false;
    }
    return true;
}

using Runs = std::vector<std::pair<int, int>>;

// Every witness (run tuple) for one assignment.
std::vector<Runs> all_witnesses(const Query& x, const Segment& s, const std::vector<int>& oids) {
    std::vector<Runs> out;
    Runs cur(x.graphs.size());
    std::function<void(std::size_t, int)> rec = [&](std::size_t gi, int from) {
        if (gi == x.graphs.size()) {
            out.push_back(cur);
            return;
        }
        for (int st = from; st < s.frame_count; ++st)
            for (int e = st; e < s.frame_count; ++e) {
                if (!holds(x.graphs[gi], s, oids, e)) break;
                if (e - st + 1 < x.graphs[gi].duration) continue;
                cur[gi] = {st, e};
                rec(gi + 1, e + 1);
            }
    };
    rec(0, 0);
    return out;
}

bool valid_witness(const Query& x, const Segment& s, const std::vector<int>& oids, const Runs& runs) {
    for (std::size_t i = 0; i < runs.size(); ++i) {
        auto [st, e] = runs[i];
        if (e - st + 1 < x.graphs[i].duration) return false;
        if (i > 0 && st <= runs[i - 1].second) return false;
        for (int f = st; f <= e; ++f)
            if (!holds(x.graphs[i], s, oids, f)) return false;
    }
    return true;
}

struct Instance {
    Query query;
    Segment segment;
};

std::vector<Instance> random_instances(std::uint64_t seed, int n) {
    std::mt19937_64 rng(seed);
    const auto pool = cross_check_pool();
    std::vector<Instance> out;
    for (int i = 0; i < n; ++i) {
        const int frames = std::uniform_int_distribution<int>(4, 12)(rng);
        const int objects = std::uniform_int_distribution<int>(1, 3)(rng);
        const int n_v = std::uniform_int_distribution<int>(1, 3)(rng);
        out.push_back({random_query(rng, pool, n_v, 3, 5), random_small_segment(rng, "r" + std::to_string(i), frames, objects)});
    }
    return out;
}

SegmentStore small_store(int n, std::uint64_t seed = 9) {
    GenSpec g;
    g.n_segments = n;
    g.seed = seed;
    return generate(g);
}

}  // namespace

TEST(Match, WalkthroughEarliestRuns) {
    const auto x = q(kWalkthroughQuery);
    const auto m = match(x, walkthrough_v1(), reg());
    ASSERT_TRUE(m.has_value());
    EXPECT_EQ(m->runs, (Runs{{2, 3}, {5, 6}, {7, 7}}));
    EXPECT_EQ(m->oids, (std::vector<int>{0, 1}));
    EXPECT_FALSE(match(x, walkthrough_v2(), reg()).has_value());
    EXPECT_FALSE(match_reference(x, walkthrough_v2(), reg()).has_value());
}

TEST(Match, EmptyFirstGraphGivesNone) {
    const auto seg = scripted_pair("v", "mmmmnnnn");
    EXPECT_FALSE(match(q("Far(o1, o2); Near(o1, o2)"), seg, reg()).has_value());
}

TEST(Match, TooFewObjectsIsNoneNotError) {
    const auto seg = make_segment("v", {{0, std::vector<Place>(3, Place{50, 50})}});
    EXPECT_FALSE(match(q("Near(o1, o2)"), seg, reg()).has_value());
    EXPECT_FALSE(match_reference(q("Near(o1, o2)"), seg, reg()).has_value());
    EXPECT_TRUE(match(q("Top(o1)"), seg, reg()).has_value());
}

TEST(Match, DurationRunsMustBeContiguous) {
    const auto seg = scripted_pair("v", "nnmnnmnn");
    EXPECT_FALSE(match(q("Duration(Near(o1, o2), 3)"), seg, reg()).has_value());
    EXPECT_TRUE(match(q("Duration(Near(o1, o2), 2)"), seg, reg()).has_value());
}

TEST(Match, SequenceNeedsStrictOrder) {
    const auto seg = scripted_pair("v", "fn");
    EXPECT_TRUE(match(q("Far(o1, o2); Near(o1, o2)"), seg, reg()).has_value());
    EXPECT_FALSE(match(q("Near(o1, o2); Far(o1, o2)"), seg, reg()).has_value());
    EXPECT_FALSE(match(q("Near(o1, o2); Near(o1, o2)"), scripted_pair("w", "mnm"), reg()).has_value());
    EXPECT_TRUE(match(q("Near(o1, o2); Near(o1, o2)"), scripted_pair("w", "nmn"), reg()).has_value());
}

TEST(Match, AbsentObjectMakesPredicateFalse) {
    std::vector<Place> a(3, Place{100, 100}), b(3, Place{110, 100});
    b[1].present = false;
    const auto seg = make_segment("v", {{0, a}, {1, b}});
    EXPECT_FALSE(match(q("Duration(Near(o1, o2), 2)"), seg, reg()).has_value());
    EXPECT_TRUE(match(q("Near(o1, o2); Near(o1, o2)"), seg, reg()).has_value());
    EXPECT_TRUE(match(q("Duration(Left(o1), 3)"), seg, reg()).has_value());
}

TEST(Match, WindowIsUnsupported) {
    const auto seg = walkthrough_v1();
    EXPECT_THROW(match(q("Near(o1, o2); Window(5)"), seg, reg()), UnsupportedError);
}

TEST(MatchReference, Window) {
    const auto seg = scripted_pair("v", "fmmmmn");
    EXPECT_FALSE(match_reference(q("Far(o1, o2); Near(o1, o2); Window(0)"), seg, reg()).has_value());
    EXPECT_FALSE(match_reference(q("Near(o1, o2); Window(0)"), seg, reg()).has_value());
    EXPECT_FALSE(match_reference(q("Far(o1, o2); Near(o1, o2); Window(5)"), seg, reg()).has_value());
    EXPECT_TRUE(match_reference(q("Far(o1, o2); Near(o1, o2); Window(6)"), seg, reg()).has_value());
}

TEST(MatchReference, SingleGraph) {
    const auto seg = scripted_pair("v", "mmmm");
    EXPECT_FALSE(match_reference(q("Near(o1, o2)"), seg, reg()).has_value());
    EXPECT_TRUE(match_reference(q("LeftOf(o1, o2)"), seg, reg()).has_value());
}

TEST(MatchReference, GuardRejectsLargeSegments) {
    const auto store = small_store(1);
    EXPECT_THROW(match_reference(q("Near(o1, o2); Far(o1, o2); Near(o1, o2)"), store.segments()[0], reg()),
                 CapacityError);
}

TEST(MatchProperties, AgreesWithReferenceOn600Instances) {
    int positives = 0;
    const auto inst = random_instances(2024, 600);
    for (const auto& [x, s] : inst) {
        const bool fast = match(x, s, reg()).has_value();
        const bool slow = match_reference(x, s, reg()).has_value();
        ASSERT_EQ(fast, slow) << to_string(x) << " on " << s.vid;
        positives += fast;
    }
    // both outcomes must be well represented for the check to mean anything
    EXPECT_GT(positives, 60);
    EXPECT_LT(positives, 540);
}

TEST(MatchProperties, WitnessIsValidAndEarliest) {
    int checked = 0;
    for (const auto& [x, s] : random_instances(77, 300)) {
        const auto m = match(x, s, reg());
        if (!m) continue;
        ++checked;
        ASSERT_TRUE(valid_witness(x, s, m->oids, m->runs)) << to_string(x);
        for (std::size_t i = 0; i < m->runs.size(); ++i)
            EXPECT_EQ(m->runs[i].second - m->runs[i].first + 1, x.graphs[i].duration);
        for (const auto& w : all_witnesses(x, s, m->oids))
            for (std::size_t i = 0; i < w.size(); ++i) ASSERT_LE(m->runs[i].first, w[i].first) << to_string(x);
    }
    EXPECT_GT(checked, 30);
}

TEST(MatchProperties, ReplacingFirstRunWithEarliestPreservesMatch) {
    int checked = 0;
    for (const auto& [x, s] : random_instances(78, 300)) {
        const auto m = match(x, s, reg());
        if (!m) continue;
        for (auto w : all_witnesses(x, s, m->oids)) {
            w[0] = m->runs[0];
            ASSERT_TRUE(valid_witness(x, s, m->oids, w)) << to_string(x);
            ++checked;
        }
    }
    EXPECT_GT(checked, 100);
}

TEST(MatchProperties, FirstAssignmentIsLexicographicallySmallest) {
    for (const auto& [x, s] : random_instances(79, 300)) {
        const auto m = match(x, s, reg());
        if (!m) continue;
        // no lexicographically smaller injective assignment has a witness
        std::vector<int> oids;
        for (const auto& t : s.tracks) oids.push_back(t.oid);
        std::vector<int> cur;
        std::function<bool()> smaller_exists = [&]() -> bool {
            if (cur.size() == m->oids.size()) return cur < m->oids && !all_witnesses(x, s, cur).empty();
            for (int o : oids) {
                if (std::find(cur.begin(), cur.end(), o) != cur.end()) continue;
                cur.push_back(o);
                const bool r = smaller_exists();
                cur.pop_back();
                if (r) return true;
            }
            return false;
        };
        EXPECT_FALSE(smaller_exists()) << to_string(x);
    }
}

TEST(Execute, EmptyVidList) {
    const auto store = small_store(5);
    EXPECT_TRUE(execute(q("Near(o1, o2)"), store, {}, reg()).empty());
}

TEST(Execute, UnknownVidIsError) {
    const auto store = small_store(5);
    EXPECT_THROW(execute(q("Near(o1, o2)"), store, {"nope"}, reg()), BoundsError);
}

TEST(Execute, CacheTransparency) {
    const auto store = small_store(150);
    PrefixCache cache;
    std::mt19937_64 rng(4);
    const auto pool = reg().subset(trajectory_pool());
    for (int i = 0; i < 40; ++i) {
        const Query x = random_query(rng, pool, 2, 3, 4, {1, 5, 10});
        const auto cold = execute(x, store, reg());
        const auto warm1 = execute(x, store, reg(), {&cache, nullptr, 1});
        const auto warm2 = execute(x, store, reg(), {&cache, nullptr, 1});
        EXPECT_EQ(cold, warm1) << to_string(x);
        EXPECT_EQ(cold, warm2) << to_string(x);
    }
}

TEST(Execute, TinyCacheStaysCorrect) {
    const auto store = small_store(60);
    PrefixCache cache(8);
    std::mt19937_64 rng(6);
    const auto pool = reg().subset(trajectory_pool());
    for (int i = 0; i < 30; ++i) {
        const Query x = random_query(rng, pool, 2, 3, 4, {1, 5});
        EXPECT_EQ(execute(x, store, reg()), execute(x, store, reg(), {&cache, nullptr, 2}));
    }
    EXPECT_LE(cache.size(), 8u + 16u);
}

TEST(Execute, SharedPrefixReevaluatesOnlyFinalGraph) {
    // LeftOf(o1, o2) holds everywhere for assignment (0, 1) in scripted pairs.
    const SegmentStore store({scripted_pair("a", "mffmnnmmmm"), scripted_pair("b", "nnnnnnnnnf"),
                              scripted_pair("c", "fmmmmmmmnm")});
    const auto x = q("Far(o1, o2); Near(o1, o2)");
    const auto y = q("Far(o1, o2); Near(o1, o2); LeftOf(o1, o2)");
    PrefixCache cache;
    Telemetry first;
    EXPECT_EQ(execute(x, store, reg(), {&cache, &first, 1}), (std::vector<std::string>{"a", "c"}));
    Telemetry second;
    EXPECT_EQ(execute(y, store, reg(), {&cache, &second, 1}), (std::vector<std::string>{"a", "c"}));
    // a: Far@1, Near@4, LeftOf checked once at 5. b: both assignments fail at
    // the cached Near prefix. c: Far@0, Near@8, LeftOf checked once at 9.
    EXPECT_EQ(second.predicate_evals.load(), 2u);
    EXPECT_EQ(second.cache_hits.load(), 2u + 4u + 2u);
    EXPECT_EQ(second.cache_misses.load(), 2u);
    EXPECT_EQ(second.segment_evals.load(), 3u);

    // first run, by hand: a scans Far 0..1 (2 evals) then Near 2..4 (3);
    // b (0,1): Far 0..9 (10) then nothing left; b (1,0): the same 10;
    // c: Far at 0 (1) then Near 1..8 (8).
    EXPECT_EQ(first.predicate_evals.load(), 2u + 3u + 20u + 9u);

    Telemetry uncached;
    execute(y, store, reg(), {nullptr, &uncached, 1});
    EXPECT_EQ(uncached.predicate_evals.load(), first.predicate_evals.load() + 2u);
    EXPECT_EQ(uncached.cache_hits.load(), 0u);
}

TEST(Execute, ParallelDeterminism) {
    const auto store = small_store(300, 21);
    std::mt19937_64 rng(8);
    const auto pool = reg().subset(trajectory_pool());
    for (int i = 0; i < 20; ++i) {
        const Query x = random_query(rng, pool, 2, 3, 4, {1, 5, 10});
        PrefixCache c1, c4;
        const auto one = execute(x, store, reg(), {&c1, nullptr, 1});
        const auto four = execute(x, store, reg(), {&c4, nullptr, 4});
        EXPECT_EQ(one, four);
        EXPECT_EQ(one, execute(x, store, reg(), {nullptr, nullptr, 3}));
    }
}

TEST(Execute, RefinementShrinksResults) {
    const auto store = small_store(200, 3);
    std::mt19937_64 rng(10);
    const auto pool = reg().subset(trajectory_pool());
    const SearchConfig config{3, 5, 2, {5, 10, 15}, 5, {}};
    for (int i = 0; i < 12; ++i) {
        const Query x = random_query(rng, pool, 2, 2, 3, {1, 5});
        const auto base = execute(x, store, reg());
        std::mt19937_64 pick(i);
        auto children = expand_query(x, config, pool);
        std::shuffle(children.begin(), children.end(), pick);
        children.resize(std::min<std::size_t>(children.size(), 15));
        for (const auto& y : children) {
            const auto sub = execute(y, store, reg());
            EXPECT_TRUE(std::includes(base.begin(), base.end(), sub.begin(), sub.end()))
                << to_string(x) << " -> " << to_string(y);
        }
    }
}

TEST(Execute, GeneratedSegmentsHaveAPairAssignment) {
    const auto store = small_store(100);
    const auto hits = execute(q("(LeftOf(o1, o2), RightOf(o2, o1))"), store, reg());
    EXPECT_EQ(hits.size(), store.size());
}
