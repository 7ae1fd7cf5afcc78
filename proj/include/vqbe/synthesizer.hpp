#pragma once

// Bottom-up beam search over queries with active label acquisition.
//
// Each iteration expands every query in the beam, scores the expansions on
// the labeled pool, asks the oracle for the unlabeled segments the expansions
// disagree on most, keeps the best `bw` expansions by F1 as the next beam and
// folds the expansions into a top-k list ranked by F1 minus a complexity
// penalty.

#include <algorithm>
#include <bit>
#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "vqbe/dsl.hpp"
#include "vqbe/errors.hpp"
#include "vqbe/executor.hpp"
#include "vqbe/oracle.hpp"
#include "vqbe/parallel.hpp"
#include "vqbe/predicates.hpp"
#include "vqbe/scene_model.hpp"

namespace vqbe {

enum class Provenance : std::uint8_t { initial, requested };

struct LabeledEntry {
    std::string vid;
    Label label = Label::neg;
    Provenance provenance = Provenance::initial;
};

/// Labeled segments in arrival order. Vids are unique.
class LabeledPool {
public:
    LabeledPool() = default;
    LabeledPool(std::initializer_list<std::pair<std::string, Label>> init) {
        for (const auto& [v, l] : init) add(v, l);
    }

    void add(const std::string& vid, Label label, Provenance p = Provenance::initial) {
        if (!index_.insert(vid).second) throw PreconditionError("vid '" + vid + "' labeled twice");
        entries_.push_back({vid, label, p});
    }

    const std::vector<LabeledEntry>& entries() const noexcept { return entries_; }
    std::size_t size() const noexcept { return entries_.size(); }
    bool contains(const std::string& vid) const { return index_.count(vid) != 0; }

    std::size_t count(Label l) const {
        return static_cast<std::size_t>(
            std::count_if(entries_.begin(), entries_.end(), [&](const auto& e) { return e.label == l; }));
    }

private:
    std::vector<LabeledEntry> entries_;
    std::unordered_set<std::string> index_;
};

struct CandidateState {
    Query query;
    std::string key;  // canonical text
    double complexity = 0;
    int tp = 0, fp = 0, fn = 0, tn = 0;
    double f1 = 0;
    double reg_score = 0;
};

inline double f1_from_counts(int tp, int fp, int fn) {
    const int denom = 2 * tp + fp + fn;
    return denom == 0 ? 0.0 : 2.0 * tp / denom;
}

/// reg_score descending, then lower complexity, then canonical text.
inline bool rank_before(const CandidateState& a, const CandidateState& b) {
    if (a.reg_score != b.reg_score) return a.reg_score > b.reg_score;
    if (a.complexity != b.complexity) return a.complexity < b.complexity;
    return a.key < b.key;
}

/// Raw F1 descending, then lower complexity, then canonical text.
inline bool beam_before(const CandidateState& a, const CandidateState& b) {
    if (a.f1 != b.f1) return a.f1 > b.f1;
    if (a.complexity != b.complexity) return a.complexity < b.complexity;
    return a.key < b.key;
}

struct BudgetSchedule {
    int total_budget = 0;
    int initial_count = 0;
    std::vector<int> per_iteration;

    int planned_iterations() const noexcept { return static_cast<int>(per_iteration.size()); }
    int allotment(int iteration) const {
        return iteration < planned_iterations() ? per_iteration[static_cast<std::size_t>(iteration)] : 0;
    }
};

/// Spreads b - initial_count labels evenly over n_p + n_g * n_d iterations,
/// earlier iterations taking the remainder.
inline BudgetSchedule plan_budget(int b, int initial_count, const SearchConfig& config) {
    if (b < initial_count) throw PreconditionError("labeling budget is smaller than the initial label count");
    const int t = config.n_p + config.n_g * config.n_d();
    const int r = b - initial_count;
    BudgetSchedule s{b, initial_count, std::vector<int>(static_cast<std::size_t>(t))};
    for (int i = 0; i < t; ++i) s.per_iteration[static_cast<std::size_t>(i)] = r / t + (i < r % t ? 1 : 0);
    return s;
}

struct Hyper {
    int b = 30;
    int bw = 10;
    int k = 100;
    double lambda = 0.01;
    Alpha alpha;
    std::uint64_t seed = 0;
    int sample_cap = 100;
    int query_cap = 0;  // 0: 2 * bw
    bool active_learning = true;
    bool use_cache = true;
    std::size_t cache_capacity = PrefixCache::kDefaultCapacity;
    int workers = 1;

    int effective_query_cap() const noexcept { return query_cap > 0 ? query_cap : 2 * bw; }
};

struct IterationTrace {
    int iteration = 0;
    std::size_t expanded = 0;      // |S'|
    std::size_t beam_size = 0;     // |S| after sampling
    std::size_t topk_size = 0;     // |Q_t| after retaining
    int labels_requested = 0;
    std::vector<std::string> expanded_keys;  // keys of the beam expanded this iteration
    std::vector<double> topk_scores;         // reg_score of Q_t in rank order
};

struct SynthesisTelemetry {
    std::uint64_t queries_explored = 0;
    std::uint64_t predicate_evals = 0;
    std::uint64_t cache_hits = 0;
    std::uint64_t cache_misses = 0;
    std::uint64_t segment_evals = 0;
    double wall_time_s = 0;
};

struct SynthesisResult {
    std::vector<CandidateState> top_k;
    int labels_used = 0;
    int iterations = 0;
    SynthesisTelemetry telemetry;
    LabeledPool labels;
    std::vector<IterationTrace> trace;
};

/// Thrown when the oracle fails mid-search; carries what was found so far.
class SynthesisAborted : public Error {
public:
    SynthesisAborted(const std::string& msg, SynthesisResult partial)
        : Error(msg), partial_(std::make_shared<SynthesisResult>(std::move(partial))) {}
    const SynthesisResult& partial() const noexcept { return *partial_; }

private:
    std::shared_ptr<SynthesisResult> partial_;
};

struct SynthesisProgress {
    int iteration = 0;
    int labels_used = 0;
    std::size_t beam_size = 0;
    std::vector<CandidateState> top;  // at most 5
};

struct SynthesisHooks {
    std::function<void(const SynthesisProgress&)> on_progress;
};

// --------------------------------------------------------------------------
// Expansion

/// Every atom over variables o1..o_{n_v} for the predicates of `pool`.
inline std::vector<PredicateAtom> all_atoms(const PredicateRegistry& pool, int n_v) {
    std::vector<PredicateAtom> out;
    for (const auto& d : pool.defs()) {
        if (d.arity == 1) {
            for (int v = 0; v < n_v; ++v) {
                if (d.takes_constant()) {
                    for (const auto& c : d.const_domain) out.push_back({d.name, 1, {v, -1}, c});
                } else {
                    out.push_back({d.name, 1, {v, -1}, {}});
                }
            }
        } else {
            for (int a = 0; a < n_v; ++a)
                for (int b = 0; b < n_v; ++b)
                    if (a != b) out.push_back({d.name, 2, {a, b}, {}});
        }
    }
    return out;
}

namespace detail {

inline bool prefix_vars(unsigned mask, int n_v) {
    return (mask & (mask + 1)) == 0 && std::popcount(mask) <= n_v;
}

inline int next_duration(int d, const std::vector<int>& values) {
    for (int v : values)
        if (v > d) return v;
    return -1;
}

}  // namespace detail

/// One-step refinements of q: add an atom to a graph, insert a one-atom graph
/// at any position, or advance one graph's duration. Deduplicated by
/// canonical key, in generation order.
inline std::vector<Query> expand_query(const Query& q, const SearchConfig& config, const PredicateRegistry& pool) {
    std::vector<Query> out;
    std::unordered_set<std::string> seen;
    auto add = [&](Query cand) {
        if (!detail::prefix_vars(cand.var_mask(), config.n_v)) return;
        if (seen.insert(canonical(cand)).second) out.push_back(std::move(cand));
    };
    const auto atoms = all_atoms(pool, config.n_v);
    if (q.atom_count() < config.n_p) {
        for (std::size_t gi = 0; gi < q.graphs.size(); ++gi) {
            for (const auto& a : atoms) {
                if (q.graphs[gi].contains(a)) continue;
                Query c = q;
                c.graphs[gi].atoms.push_back(a);
                c.graphs[gi].normalize();
                add(std::move(c));
            }
        }
        if (static_cast<int>(q.graphs.size()) < config.n_g) {
            for (std::size_t pos = 0; pos <= q.graphs.size(); ++pos) {
                for (const auto& a : atoms) {
                    Query c = q;
                    c.graphs.insert(c.graphs.begin() + static_cast<std::ptrdiff_t>(pos), RegionGraphSpec{{a}, 1});
                    add(std::move(c));
                }
            }
        }
    }
    for (std::size_t gi = 0; gi < q.graphs.size(); ++gi) {
        const int d = detail::next_duration(q.graphs[gi].duration, config.duration_values);
        if (d < 0) continue;
        Query c = q;
        c.graphs[gi].duration = d;
        add(std::move(c));
    }
    return out;
}

// --------------------------------------------------------------------------
// Selection

/// Top bw candidates by raw F1 (ties: lower complexity, then canonical text).
inline std::vector<CandidateState> sample_queries(std::vector<CandidateState> candidates, int bw) {
    const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(std::max(bw, 0)), candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(n), candidates.end(),
                      beam_before);
    candidates.resize(n);
    return candidates;
}

/// Sorts by rank_before and truncates to k. Callers rescore first.
inline std::vector<CandidateState> rank_top(std::vector<CandidateState> candidates, int k) {
    std::sort(candidates.begin(), candidates.end(), rank_before);
    if (candidates.size() > static_cast<std::size_t>(std::max(k, 0))) candidates.resize(static_cast<std::size_t>(k));
    return candidates;
}

/// Confusion counts, F1 and regularized score of q on the labeled pool.
inline CandidateState score_query(const Query& q, const SegmentStore& store, const LabeledPool& labels,
                                  const PredicateRegistry& reg, double lambda, const Alpha& alpha,
                                  const SearchConfig& config) {
    CandidateState c;
    c.query = q;
    c.key = canonical(q);
    c.complexity = complexity(q, alpha, config);
    const CompiledQuery cq(q, reg);
    for (const auto& e : labels.entries()) {
        const bool hit = matches(cq, store.at(e.vid));
        const bool pos = e.label == Label::pos;
        if (hit) (pos ? c.tp : c.fp)++;
        else (pos ? c.fn : c.tn)++;
    }
    c.f1 = f1_from_counts(c.tp, c.fp, c.fn);
    c.reg_score = c.f1 - lambda * c.complexity;
    return c;
}

/// Re-scores every candidate on the current labels and keeps the best k.
inline std::vector<CandidateState> retain_top_queries(const std::vector<CandidateState>& candidates,
                                                      const SegmentStore& store, const LabeledPool& labels,
                                                      const PredicateRegistry& reg, int k, double lambda,
                                                      const Alpha& alpha, const SearchConfig& config) {
    std::vector<CandidateState> out;
    out.reserve(candidates.size());
    for (const auto& c : candidates) out.push_back(score_query(c.query, store, labels, reg, lambda, alpha, config));
    return rank_top(std::move(out), k);
}


inline double disagreement(double w_pos, double w_neg) {
    const double total = w_pos + w_neg;
    return total > 0 ? std::min(w_pos, w_neg) / total : 0.0;
}

/// Picks n vids from `unlabeled` where the weighted candidates disagree most.
/// Scores a uniform sample of min(sample_cap, |U|) vids against a uniform
/// sample of min(query_cap, |candidates|) candidates; matches(i, vid) says
/// whether candidate i matches vid. Ties go to the smaller vid.
template <typename Rng>
std::vector<std::string> pick_next_segments(const std::vector<std::string>& unlabeled,
                                            const std::vector<double>& weights, int n, int sample_cap, int query_cap,
                                            const std::function<bool(std::size_t, const std::string&)>& matches,
                                            Rng& rng, int workers = 1) {
    if (n <= 0 || unlabeled.empty()) return {};
    if (static_cast<std::size_t>(n) >= unlabeled.size()) return unlabeled;

    auto sample_indices = [&](std::size_t total, std::size_t want) {
        std::vector<std::size_t> idx(total);
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        want = std::min(want, total);
        for (std::size_t i = 0; i < want; ++i) {
            std::uniform_int_distribution<std::size_t> d(i, total - 1);
            std::swap(idx[i], idx[d(rng)]);
        }
        idx.resize(want);
        return idx;
    };
    const auto vids = sample_indices(unlabeled.size(), static_cast<std::size_t>(std::max(sample_cap, 0)));
    const auto queries = sample_indices(weights.size(), static_cast<std::size_t>(std::max(query_cap, 0)));

    std::vector<double> score(vids.size());
    parallel_for(vids.size(), workers, [&](std::size_t i) {
        double w_pos = 0, w_neg = 0;
        for (std::size_t qi : queries) {
            const double w = std::max(weights[qi], 0.0);
            (matches(qi, unlabeled[vids[i]]) ? w_pos : w_neg) += w;
        }
        score[i] = disagreement(w_pos, w_neg);
    });
    std::vector<std::size_t> order(vids.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (score[a] != score[b]) return score[a] > score[b];
        return unlabeled[vids[a]] < unlabeled[vids[b]];
    });
    std::vector<std::string> out;
    for (std::size_t i = 0; i < order.size() && out.size() < static_cast<std::size_t>(n); ++i)
        out.push_back(unlabeled[vids[order[i]]]);
    return out;
}

// --------------------------------------------------------------------------
// The search

class Synthesizer {
public:
    Synthesizer(const Synthesizer&) = delete;
    Synthesizer& operator=(const Synthesizer&) = delete;

    Synthesizer(const SegmentStore& store, const PredicateRegistry& registry, SearchConfig config, Hyper hyper)
        : store_(store),
          registry_(registry),
          pool_(config.predicate_pool.empty() ? registry : registry.subset(config.predicate_pool)),
          config_(std::move(config)),
          hyper_(hyper),
          cache_(hyper.use_cache ? std::make_unique<PrefixCache>(hyper.cache_capacity) : nullptr),
          rng_(hyper.seed) {
        config_.validate();
        if (hyper_.bw < 1 || hyper_.k < 1) throw PreconditionError("bw and k must be at least 1");
    }

    SynthesisResult run(const LabeledPool& initial, LabelOracle& oracle, const SynthesisHooks& hooks = {}) {
        const auto t0 = std::chrono::steady_clock::now();
        if (initial.count(Label::pos) == 0 || initial.count(Label::neg) == 0)
            throw PreconditionError("initial labels need at least one positive and one negative segment");
        for (const auto& e : initial.entries())
            if (store_.find(e.vid) == nullptr) throw PreconditionError("labeled vid '" + e.vid + "' not in dataset");
        const BudgetSchedule schedule = plan_budget(hyper_.b, static_cast<int>(initial.size()), config_);

        labels_ = initial;
        for (const auto& v : store_.vids())
            if (!labels_.contains(v)) unlabeled_.insert(v);
        labeled_segs_.clear();
        for (const auto& e : labels_.entries()) labeled_segs_.push_back(&store_.at(e.vid));

        SynthesisResult result;
        std::vector<Query> beam{Query{}};
        std::unordered_set<std::string> expanded;
        std::vector<Candidate> topk;
        int iteration = 0;

        auto finish = [&] {
            for (const auto& c : topk) result.top_k.push_back(c.state);
            result.labels_used = static_cast<int>(labels_.size());
            result.iterations = iteration;
            result.labels = labels_;
            result.telemetry.queries_explored = explored_;
            result.telemetry.predicate_evals = telemetry_.predicate_evals;
            result.telemetry.cache_hits = telemetry_.cache_hits;
            result.telemetry.cache_misses = telemetry_.cache_misses;
            result.telemetry.segment_evals = telemetry_.segment_evals;
            result.telemetry.wall_time_s =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        };

        while (!beam.empty()) {
            IterationTrace tr;
            tr.iteration = iteration;

            std::vector<Candidate> next;
            std::unordered_set<std::string> fresh;
            for (const auto& q : beam) {
                const std::string key = canonical(q);
                if (!expanded.insert(key).second) continue;
                tr.expanded_keys.push_back(key);
                for (auto& c : expand_query(q, config_, pool_)) {
                    std::string ck = canonical(c);
                    if (expanded.count(ck) || !fresh.insert(ck).second) continue;
                    next.push_back(make_candidate(std::move(c), std::move(ck)));
                }
            }
            tr.expanded = next.size();
            explored_ += next.size();
            rescore(next);

            const int want = schedule.allotment(iteration);
            if (want > 0 && !next.empty() && !unlabeled_.empty()) {
                const auto picked = pick(next, want);
                std::vector<Label> got;
                try {
                    got = oracle.label_batch(picked);
                } catch (const std::exception& e) {
                    topk = retain(std::move(topk), {});
                    finish();
                    throw SynthesisAborted(std::string("oracle failed: ") + e.what(), std::move(result));
                }
                if (got.size() != picked.size()) throw OracleError("oracle returned a short label batch");
                for (std::size_t i = 0; i < picked.size(); ++i) {
                    labels_.add(picked[i], got[i], Provenance::requested);
                    labeled_segs_.push_back(&store_.at(picked[i]));
                    unlabeled_.erase(picked[i]);
                }
                tr.labels_requested = static_cast<int>(picked.size());
                rescore(next);
            }

            std::vector<CandidateState> states;
            states.reserve(next.size());
            for (const auto& c : next) states.push_back(c.state);
            const auto chosen = sample_queries(std::move(states), hyper_.bw);
            beam.clear();
            for (const auto& s : chosen) beam.push_back(s.query);
            tr.beam_size = beam.size();

            topk = retain(std::move(topk), std::move(next));
            tr.topk_size = topk.size();
            for (const auto& c : topk) tr.topk_scores.push_back(c.state.reg_score);
            result.trace.push_back(std::move(tr));
            ++iteration;

            if (hooks.on_progress) {
                SynthesisProgress p{iteration, static_cast<int>(labels_.size()), beam.size(), {}};
                for (std::size_t i = 0; i < topk.size() && i < 5; ++i) p.top.push_back(topk[i].state);
                hooks.on_progress(p);
            }
        }
        finish();
        return result;
    }

    const Telemetry& telemetry() const noexcept { return telemetry_; }

private:
    struct Candidate {
        CandidateState state;
        std::shared_ptr<const CompiledQuery> compiled;
        std::size_t scored = 0;  // labeled entries already folded into the counts
    };

    Candidate make_candidate(Query q, std::string key) {
        Candidate c;
        c.state.complexity = complexity(q, hyper_.alpha, config_);
        c.compiled = std::make_shared<const CompiledQuery>(q, registry_, cache_.get());
        c.state.query = std::move(q);
        c.state.key = std::move(key);
        return c;
    }

    void update(Candidate& c) {
        const auto& entries = labels_.entries();
        for (; c.scored < entries.size(); ++c.scored) {
            const bool hit = matches(*c.compiled, *labeled_segs_[c.scored], &telemetry_);
            const bool pos = entries[c.scored].label == Label::pos;
            if (hit) (pos ? c.state.tp : c.state.fp)++;
            else (pos ? c.state.fn : c.state.tn)++;
        }
        c.state.f1 = f1_from_counts(c.state.tp, c.state.fp, c.state.fn);
        c.state.reg_score = c.state.f1 - hyper_.lambda * c.state.complexity;
    }

    void rescore(std::vector<Candidate>& cs) {
        parallel_for(cs.size(), hyper_.workers, [&](std::size_t i) { update(cs[i]); });
    }

    std::vector<std::string> pick(const std::vector<Candidate>& cands, int n) {
        const std::vector<std::string> u(unlabeled_.begin(), unlabeled_.end());
        if (!hyper_.active_learning) {
            std::vector<std::string> pool = u;
            const std::size_t want = std::min<std::size_t>(static_cast<std::size_t>(n), pool.size());
            for (std::size_t i = 0; i < want; ++i) {
                std::uniform_int_distribution<std::size_t> d(i, pool.size() - 1);
                std::swap(pool[i], pool[d(rng_)]);
            }
            pool.resize(want);
            return pool;
        }
        std::vector<double> weights;
        weights.reserve(cands.size());
        for (const auto& c : cands) weights.push_back(std::max(c.state.reg_score, 0.0));
        auto m = [&](std::size_t qi, const std::string& vid) {
            return matches(*cands[qi].compiled, store_.at(vid), &telemetry_);
        };
        return pick_next_segments(u, weights, n, hyper_.sample_cap, hyper_.effective_query_cap(), m, rng_,
                                  hyper_.workers);
    }

    std::vector<Candidate> retain(std::vector<Candidate> topk, std::vector<Candidate> fresh) {
        for (auto& c : fresh) topk.push_back(std::move(c));
        rescore(topk);
        std::sort(topk.begin(), topk.end(), [](const Candidate& a, const Candidate& b) {
            return rank_before(a.state, b.state);
        });
        if (topk.size() > static_cast<std::size_t>(hyper_.k)) topk.resize(static_cast<std::size_t>(hyper_.k));
        return topk;
    }

    const SegmentStore& store_;
    PredicateRegistry registry_;  // compiled queries point into this copy
    PredicateRegistry pool_;
    SearchConfig config_;
    Hyper hyper_;
    std::unique_ptr<PrefixCache> cache_;
    std::mt19937_64 rng_;
    Telemetry telemetry_;
    LabeledPool labels_;
    std::vector<const Segment*> labeled_segs_;
    std::set<std::string> unlabeled_;
    std::uint64_t explored_ = 0;
};

inline SynthesisResult synthesize(const SegmentStore& store, const PredicateRegistry& registry,
                                  const LabeledPool& initial, LabelOracle& oracle, const SearchConfig& config,
                                  const Hyper& hyper, const SynthesisHooks& hooks = {}) {
    Synthesizer s(store, registry, config, hyper);
    return s.run(initial, oracle, hooks);
}

}  // namespace vqbe
