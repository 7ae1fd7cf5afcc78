#pragma once

// Hand-built fixtures shared by the unit tests.

#include <map>
#include <random>
#include <string>
#include <vector>

#include "vqbe/vqbe.hpp"

namespace vqbe::testing {

struct Place {
    double cx = 0, cy = 0;
    double depth = 1;
    double size = 20;
    bool present = true;
};

inline BBox box_at(double cx, double cy, double size) {
    return {cx - size / 2, cy - size / 2, cx + size / 2, cy + size / 2};
}

/// tracks[oid] = per-frame placement; props apply to every frame.
inline Segment make_segment(const std::string& vid, const std::map<int, std::vector<Place>>& tracks,
                            const std::map<int, std::map<std::string, std::string>>& props = {}, int width = 480,
                            int height = 320) {
    Segment s;
    s.vid = vid;
    s.width = width;
    s.height = height;
    s.frame_count = tracks.empty() ? 1 : static_cast<int>(tracks.begin()->second.size());
    for (const auto& [oid, places] : tracks) {
        ObjectTrack t;
        t.oid = oid;
        t.cid = "thing";
        if (auto it = props.find(oid); it != props.end())
            for (const auto& [k, v] : it->second) t.props.emplace_back(k, v);
        std::sort(t.props.begin(), t.props.end());
        for (const auto& p : places) t.frames.push_back({box_at(p.cx, p.cy, p.size), p.depth, p.present});
        s.tracks.push_back(std::move(t));
    }
    s.validate();
    return s;
}

/// Two 20px objects whose pairwise relation follows `script`, one char per
/// frame: 'n' near, 'f' far, 'm' neither. Object 0 is behind object 1 at the
/// frames in `behind`; elsewhere their depths tie.
inline Segment scripted_pair(const std::string& vid, const std::string& script, const std::vector<int>& behind = {}) {
    std::vector<Place> a, b;
    for (std::size_t f = 0; f < script.size(); ++f) {
        const double gap = script[f] == 'n' ? 20 : script[f] == 'f' ? 100 : 45;
        const bool back = std::find(behind.begin(), behind.end(), static_cast<int>(f)) != behind.end();
        a.push_back({100, 100, back ? 5.0 : 3.0});
        b.push_back({100 + gap, 100, 3.0});
    }
    return make_segment(vid, {{0, a}, {1, b}});
}

/// The two-segment earliest-match walkthrough: in v1 the graphs of
/// Duration(Far,2); Duration(Near,2); Behind hold at frames {2,3,4}, {5,6}
/// and {7}; in v2 Behind only holds before the Near run.
inline constexpr const char* kWalkthroughQuery = "Duration(Far(o1, o2), 2); Duration(Near(o1, o2), 2); Behind(o1, o2)";

inline Segment walkthrough_v1() { return scripted_pair("v1", "mmfffnnmmm", {7}); }
inline Segment walkthrough_v2() { return scripted_pair("v2", "mmfffnnmmm", {1}); }

/// Small random segment for executor cross-checks: objects random-walk in a
/// 120x80 frame so that every predicate flips often. Objects occasionally
/// drop out of a frame.
inline Segment random_small_segment(std::mt19937_64& rng, const std::string& vid, int frames, int objects) {
    std::uniform_real_distribution<double> x(10, 110), y(10, 70), d(0, 10), step(-25, 25);
    std::uniform_int_distribution<int> pick(0, 7);
    std::bernoulli_distribution missing(0.08);
    std::map<int, std::vector<Place>> tracks;
    std::map<int, std::map<std::string, std::string>> props;
    for (int o = 0; o < objects; ++o) {
        double cx = x(rng), cy = y(rng), dz = d(rng);
        std::vector<Place> ps;
        for (int f = 0; f < frames; ++f) {
            ps.push_back({cx, cy, dz + 1e-3 * o, 16, f == 0 || !missing(rng)});
            cx = std::clamp(cx + step(rng), 10.0, 110.0);
            cy = std::clamp(cy + step(rng), 10.0, 70.0);
            dz = std::clamp(dz + step(rng) / 5, 0.0, 10.0);
        }
        tracks[o] = ps;
        props[o] = {{"color", color_vocabulary()[pick(rng) % 2]},
                    {"material", material_vocabulary()[pick(rng) % 2]},
                    {"shape", shape_vocabulary()[pick(rng) % 3]}};
    }
    return make_segment(vid, tracks, props, 120, 80);
}

/// Random no-window query over `pool` with at most `max_graphs` graphs and
/// `max_atoms` atoms, respecting the variable-prefix rule.
inline Query random_query(std::mt19937_64& rng, const PredicateRegistry& pool, int n_v, int max_graphs, int max_atoms,
                          const std::vector<int>& durations = {1, 2, 3}) {
    const auto atoms = all_atoms(pool, n_v);
    std::uniform_int_distribution<int> ng(1, max_graphs);
    std::uniform_int_distribution<std::size_t> pick_atom(0, atoms.size() - 1);
    std::uniform_int_distribution<std::size_t> pick_dur(0, durations.size() - 1);
    for (;;) {
        Query q;
        const int g = ng(rng);
        const int total = std::uniform_int_distribution<int>(g, std::max(g, max_atoms))(rng);
        q.graphs.resize(static_cast<std::size_t>(g));
        for (int i = 0; i < total; ++i) {
            auto& graph = q.graphs[static_cast<std::size_t>(i < g ? i : std::uniform_int_distribution<int>(0, g - 1)(rng))];
            const auto& a = atoms[pick_atom(rng)];
            if (!graph.contains(a)) {
                graph.atoms.push_back(a);
                graph.normalize();
            }
        }
        for (auto& graph : q.graphs) graph.duration = durations[pick_dur(rng)];
        const unsigned m = q.var_mask();
        if ((m & (m + 1)) == 0) return q;  // variables form a prefix
    }
}

}  // namespace vqbe::testing
