#pragma once

// Segment-level query evaluation.
//
// The fast path computes, per variable assignment, the earliest end frame of
// each region graph given the earliest end of its predecessor: any matching
// event can have its i-th run replaced by the earliest run that starts after
// run i-1, so keeping one frame per prefix is enough to decide a match.
// Results for every query prefix are cached per (prefix, segment,
// assignment-of-the-prefix's-variables).

#include <array>
#include <atomic>
#include <cstdint>
#include <functional>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "vqbe/dsl.hpp"
#include "vqbe/errors.hpp"
#include "vqbe/lru_cache.hpp"
#include "vqbe/parallel.hpp"
#include "vqbe/predicates.hpp"
#include "vqbe/scene_model.hpp"

namespace vqbe {

/// Witness for one segment: oids[v] is the object bound to variable v,
/// runs[i] the inclusive frame range of region graph i.
struct EventMatch {
    std::string vid;
    std::vector<int> oids;
    std::vector<std::pair<int, int>> runs;

    friend bool operator==(const EventMatch&, const EventMatch&) = default;
};

/// Counters shared with the benchmark harness.
struct Telemetry {
    std::atomic<std::uint64_t> predicate_evals{0};
    std::atomic<std::uint64_t> cache_hits{0};
    std::atomic<std::uint64_t> cache_misses{0};
    std::atomic<std::uint64_t> segment_evals{0};

    void reset() {
        predicate_evals = 0;
        cache_hits = 0;
        cache_misses = 0;
        segment_evals = 0;
    }
};

struct PrefixKey {
    std::uint32_t prefix = 0;   // interned canonical text of graphs[0..i]
    std::uint32_t segment = 0;  // interned vid
    std::array<std::int16_t, kMaxVars> assignment{-1, -1, -1, -1};  // track index per canonical variable

    friend bool operator==(const PrefixKey&, const PrefixKey&) = default;
};

struct PrefixKeyHash {
    std::size_t operator()(const PrefixKey& k) const noexcept {
        std::uint64_t h = (std::uint64_t{k.prefix} << 32) ^ k.segment;
        for (auto a : k.assignment) h = h * 0x100000001b3ULL ^ static_cast<std::uint16_t>(a);
        h ^= h >> 33;
        h *= 0xff51afd7ed558ccdULL;
        h ^= h >> 33;
        return static_cast<std::size_t>(h);
    }
};

/// Earliest end frame of every evaluated query prefix (-1 = no match).
/// Bounded LRU; tolerates concurrent use.
class PrefixCache {
public:
    static constexpr std::size_t kDefaultCapacity = std::size_t{1} << 20;

    explicit PrefixCache(std::size_t capacity = kDefaultCapacity) : entries_(capacity) {}

    std::uint32_t intern_prefix(const std::string& text) { return intern(prefixes_, text); }
    std::uint32_t intern_segment(const std::string& vid) { return intern(segments_, vid); }

    std::optional<int> get(const PrefixKey& k) { return entries_.get(k); }
    void put(const PrefixKey& k, int earliest_end) { entries_.put(k, earliest_end); }
    std::size_t size() const { return entries_.size(); }

private:
    std::uint32_t intern(std::unordered_map<std::string, std::uint32_t>& table, const std::string& s) {
        {
            std::shared_lock lock(intern_mu_);
            auto it = table.find(s);
            if (it != table.end()) return it->second;
        }
        std::unique_lock lock(intern_mu_);
        auto [it, fresh] = table.try_emplace(s, static_cast<std::uint32_t>(table.size()));
        return it->second;
    }

    ShardedLruCache<PrefixKey, int, PrefixKeyHash> entries_;
    std::shared_mutex intern_mu_;
    std::unordered_map<std::string, std::uint32_t> prefixes_;
    std::unordered_map<std::string, std::uint32_t> segments_;
};

/// A query resolved against a registry (and optionally a cache) once, then
/// evaluated over many segments.
class CompiledQuery {
public:
    struct Atom {
        const PredicateDef* def;
        int v0, v1;
        std::string constant;
    };
    struct Graph {
        std::vector<Atom> atoms;
        int duration;
    };

    CompiledQuery(const Query& q, const PredicateRegistry& reg, PrefixCache* cache = nullptr)
        : cache_(cache), num_vars_(q.var_count()), window_(q.window) {
        for (const auto& g : q.graphs) {
            Graph cg{{}, g.duration};
            for (const auto& a : g.atoms) {
                const PredicateDef& def = reg.at(a.predicate);
                if (def.arity != a.arity) throw DomainError("arity mismatch for " + a.predicate);
                cg.atoms.push_back({&def, a.vars[0], a.arity == 2 ? a.vars[1] : -1, a.constant});
            }
            graphs_.push_back(std::move(cg));
        }
        if (cache_ != nullptr) {
            Query prefix;
            for (const auto& g : q.graphs) {
                prefix.graphs.push_back(g);
                const auto cf = canonical_form(prefix);
                Prefix p;
                p.id = cache_->intern_prefix(cf.key);
                p.mask = prefix.var_mask();
                p.renaming = cf.renaming;
                prefixes_.push_back(p);
            }
        }
    }

    const std::vector<Graph>& graphs() const noexcept { return graphs_; }
    int num_vars() const noexcept { return num_vars_; }
    bool has_window() const noexcept { return window_.has_value(); }
    PrefixCache* cache() const noexcept { return cache_; }

    struct Prefix {
        std::uint32_t id = 0;
        unsigned mask = 0;
        std::array<int, kMaxVars> renaming{};
    };
    const std::vector<Prefix>& prefixes() const noexcept { return prefixes_; }

private:
    PrefixCache* cache_;
    int num_vars_;
    std::optional<int> window_;
    std::vector<Graph> graphs_;
    std::vector<Prefix> prefixes_;
};

namespace detail {

// Does graph `g` hold at frame f under the assignment (tracks indexed by variable)?
inline bool graph_holds(const CompiledQuery::Graph& g, const Segment& seg, const ObjectTrack* const* tracks, int f,
                        std::uint64_t& evals) {
    for (const auto& a : g.atoms) {
        const FrameState& s0 = tracks[a.v0]->frames[f];
        if (!s0.present) return false;
        const FrameState* s1 = nullptr;
        if (a.v1 >= 0) {
            s1 = &tracks[a.v1]->frames[f];
            if (!s1->present) return false;
        }
        ++evals;
        if (!eval_states(*a.def, seg, *tracks[a.v0], s0, s1, a.constant)) return false;
    }
    return true;
}

// End frame of the earliest run of exactly g.duration consecutive holding
// frames that starts at or after `start`; -1 if none.
inline int earliest_run_end(const CompiledQuery::Graph& g, const Segment& seg, const ObjectTrack* const* tracks,
                            int start, std::uint64_t& evals) {
    int run = 0;
    for (int f = start; f < seg.frame_count; ++f) {
        if (seg.frame_count - f + run < g.duration) return -1;
        if (graph_holds(g, seg, tracks, f, evals)) {
            if (++run == g.duration) return f;
        } else {
            run = 0;
        }
    }
    return -1;
}

struct EvalCounters {
    std::uint64_t evals = 0, hits = 0, misses = 0;
};

// Earliest end of the whole query under one assignment, consulting and
// filling the prefix cache.
inline int earliest_end(const CompiledQuery& cq, const Segment& seg, std::uint32_t seg_id, const int* assign,
                        const ObjectTrack* const* tracks, EvalCounters& c) {
    const auto& graphs = cq.graphs();
    const std::size_t k = graphs.size();
    PrefixCache* cache = cq.cache();
    auto key_for = [&](std::size_t i) {
        const auto& p = cq.prefixes()[i];
        PrefixKey key;
        key.prefix = p.id;
        key.segment = seg_id;
        for (int v = 0; v < cq.num_vars(); ++v)
            if (p.mask & (1u << v)) key.assignment[p.renaming[v]] = static_cast<std::int16_t>(assign[v]);
        return key;
    };
    int prev_end = -1;
    std::size_t i = 0;
    if (cache != nullptr) {
        for (; i < k; ++i) {
            auto hit = cache->get(key_for(i));
            if (!hit) {
                ++c.misses;
                break;
            }
            ++c.hits;
            if (*hit < 0) return -1;
            prev_end = *hit;
        }
    }
    for (; i < k; ++i) {
        const int e = earliest_run_end(graphs[i], seg, tracks, prev_end + 1, c.evals);
        if (cache != nullptr) cache->put(key_for(i), e);
        if (e < 0) return -1;
        prev_end = e;
    }
    return prev_end;
}

// Visits injective assignments of n variables over the segment's tracks in
// lexicographic order until `visit` returns true.
template <typename Visit>
bool for_each_assignment(int n, int n_tracks, Visit&& visit) {
    if (n > n_tracks) return false;
    std::array<int, kMaxVars> a{};
    std::array<bool, 64> used{};
    if (n_tracks > 64) throw CapacityError("segments with more than 64 objects are not supported");
    int depth = 0;
    a[0] = -1;
    while (depth >= 0 && n > 0) {
        if (a[depth] >= 0) used[a[depth]] = false;
        int next = a[depth] + 1;
        while (next < n_tracks && used[next]) ++next;
        if (next >= n_tracks) {
            a[depth] = -1;
            --depth;
            continue;
        }
        a[depth] = next;
        used[next] = true;
        if (depth + 1 < n) {
            a[++depth] = -1;
            continue;
        }
        if (visit(a.data())) return true;
    }
    return false;
}

inline void flush(const EvalCounters& c, Telemetry* t) {
    if (t == nullptr) return;
    t->predicate_evals.fetch_add(c.evals, std::memory_order_relaxed);
    t->cache_hits.fetch_add(c.hits, std::memory_order_relaxed);
    t->cache_misses.fetch_add(c.misses, std::memory_order_relaxed);
    t->segment_evals.fetch_add(1, std::memory_order_relaxed);
}

}  // namespace detail

/// First satisfying assignment (lexicographic in oid order) or nullopt.
inline std::optional<std::vector<int>> first_matching_assignment(const CompiledQuery& cq, const Segment& seg,
                                                                 Telemetry* telemetry = nullptr) {
    if (cq.has_window())
        throw UnsupportedError("window specifications are only supported by match_reference");
    if (cq.graphs().empty()) return std::nullopt;
    const int n = cq.num_vars();
    const int nt = static_cast<int>(seg.tracks.size());
    const std::uint32_t seg_id = cq.cache() ? cq.cache()->intern_segment(seg.vid) : 0;
    detail::EvalCounters c;
    std::optional<std::vector<int>> found;
    std::array<const ObjectTrack*, kMaxVars> tracks{};
    detail::for_each_assignment(n, nt, [&](const int* a) {
        for (int v = 0; v < n; ++v) tracks[v] = &seg.tracks[a[v]];
        if (detail::earliest_end(cq, seg, seg_id, a, tracks.data(), c) >= 0) {
            found.emplace(a, a + n);
            return true;
        }
        return false;
    });
    detail::flush(c, telemetry);
    return found;
}

inline bool matches(const CompiledQuery& cq, const Segment& seg, Telemetry* telemetry = nullptr) {
    return first_matching_assignment(cq, seg, telemetry).has_value();
}

/// Earliest-greedy witness for the lexicographically first satisfying
/// assignment, or nullopt when the segment has no matching event.
inline std::optional<EventMatch> match(const Query& q, const Segment& seg, const PredicateRegistry& reg,
                                       PrefixCache* cache = nullptr, Telemetry* telemetry = nullptr) {
    const CompiledQuery cq(q, reg, cache);
    auto assign = first_matching_assignment(cq, seg, telemetry);
    if (!assign) return std::nullopt;
    EventMatch m;
    m.vid = seg.vid;
    std::array<const ObjectTrack*, kMaxVars> tracks{};
    for (std::size_t v = 0; v < assign->size(); ++v) {
        tracks[v] = &seg.tracks[(*assign)[v]];
        m.oids.push_back(tracks[v]->oid);
    }
    std::uint64_t evals = 0;
    int prev_end = -1;
    for (const auto& g : cq.graphs()) {
        const int e = detail::earliest_run_end(g, seg, tracks.data(), prev_end + 1, evals);
        if (e < 0) throw EvaluationError("internal: cached prefix disagrees with recomputation");
        m.runs.emplace_back(e - g.duration + 1, e);
        prev_end = e;
    }
    return m;
}

/// Exhaustive reference semantics: every injective assignment and every tuple
/// of runs (s_i, e_i) with all frames of run i satisfying graph i, run length
/// >= duration_i, e_i < s_{i+1}, and e_k - s_1 < window when a window is set.
/// Returns the first witness found.
inline std::optional<EventMatch> match_reference(const Query& q, const Segment& seg, const PredicateRegistry& reg) {
    if (q.graphs.empty()) return std::nullopt;
    const int n = q.var_count();
    const int nt = static_cast<int>(seg.tracks.size());
    if (n > nt) return std::nullopt;
    double assignments = 1;
    for (int i = 0; i < n; ++i) assignments *= nt - i;
    const double tuples = std::pow(static_cast<double>(seg.frame_count), 2.0 * q.graphs.size());
    if (tuples * assignments > 1e8)
        throw CapacityError("segment '" + seg.vid + "' too large for exhaustive reference matching");

    const int frames = seg.frame_count;
    std::vector<int> assign(n);
    std::vector<bool> used(nt, false);
    std::vector<std::vector<char>> holds(q.graphs.size(), std::vector<char>(frames));
    std::vector<std::pair<int, int>> runs(q.graphs.size());
    std::optional<EventMatch> out;

    auto frame_holds = [&](const RegionGraphSpec& g, int f) {
        for (const auto& a : g.atoms) {
            std::vector<int> oids;
            for (int i = 0; i < a.arity; ++i) {
                const ObjectTrack& t = seg.tracks[assign[a.vars[i]]];
                if (!t.frames[f].present) return false;
                oids.push_back(t.oid);
            }
            std::optional<std::string_view> c;
            if (!a.constant.empty()) c = a.constant;
            if (!eval_predicate(reg.at(a.predicate), seg, f, oids, c)) return false;
        }
        return true;
    };

    std::function<bool(std::size_t, int)> runs_from = [&](std::size_t gi, int min_start) -> bool {
        if (gi == q.graphs.size()) {
            if (q.window && !(runs.back().second - runs.front().first < *q.window)) return false;
            return true;
        }
        const int d = q.graphs[gi].duration;
        for (int s = min_start; s < frames; ++s)
            for (int e = s + d - 1; e < frames; ++e) {
                bool ok = true;
                for (int f = s; f <= e && ok; ++f) ok = holds[gi][f] != 0;
                if (!ok) continue;
                runs[gi] = {s, e};
                if (runs_from(gi + 1, e + 1)) return true;
            }
        return false;
    };

    std::function<bool(int)> assign_from = [&](int v) -> bool {
        if (v == n) {
            for (std::size_t gi = 0; gi < q.graphs.size(); ++gi)
                for (int f = 0; f < frames; ++f) holds[gi][f] = frame_holds(q.graphs[gi], f);
            if (!runs_from(0, 0)) return false;
            EventMatch m;
            m.vid = seg.vid;
            for (int i = 0; i < n; ++i) m.oids.push_back(seg.tracks[assign[i]].oid);
            m.runs = runs;
            out = std::move(m);
            return true;
        }
        for (int t = 0; t < nt; ++t) {
            if (used[t]) continue;
            used[t] = true;
            assign[v] = t;
            const bool done = assign_from(v + 1);
            used[t] = false;
            if (done) return true;
        }
        return false;
    };
    assign_from(0);
    return out;
}

struct ExecuteOptions {
    PrefixCache* cache = nullptr;
    Telemetry* telemetry = nullptr;
    int workers = 1;
};

/// Vids (ascending) among `vids` whose segment contains a matching event.
inline std::vector<std::string> execute(const Query& q, const SegmentStore& store, const std::vector<std::string>& vids,
                                        const PredicateRegistry& reg, const ExecuteOptions& opts = {}) {
    const CompiledQuery cq(q, reg, opts.cache);
    std::vector<const Segment*> segs;
    segs.reserve(vids.size());
    for (const auto& v : vids) segs.push_back(&store.at(v));
    std::vector<char> hit(segs.size(), 0);
    parallel_for(segs.size(), opts.workers, [&](std::size_t i) { hit[i] = matches(cq, *segs[i], opts.telemetry); });
    std::vector<std::string> out;
    for (std::size_t i = 0; i < segs.size(); ++i)
        if (hit[i]) out.push_back(segs[i]->vid);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

inline std::vector<std::string> execute(const Query& q, const SegmentStore& store, const PredicateRegistry& reg,
                                        const ExecuteOptions& opts = {}) {
    return execute(q, store, store.vids(), reg, opts);
}

}  // namespace vqbe
