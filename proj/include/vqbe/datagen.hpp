#pragma once

// Procedural scene segments: boxes moving on straight lines inside the frame,
// reflecting off the walls, with a slowly drifting depth per object.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vqbe/dsl.hpp"
#include "vqbe/errors.hpp"
#include "vqbe/executor.hpp"
#include "vqbe/oracle.hpp"
#include "vqbe/parallel.hpp"
#include "vqbe/predicates.hpp"
#include "vqbe/scene_model.hpp"

namespace vqbe {

struct GenSpec {
    int n_segments = 1000;
    int frames_per_segment = 128;
    int width = 480;
    int height = 320;
    int min_objects = 2;
    int max_objects = 4;
    double min_speed = 0.5;  // pixels per frame
    double max_speed = 2.0;
    double max_depth = 10.0;
    double max_depth_speed = 0.08;  // depth units per frame
    bool bounce = true;
    std::uint64_t seed = 0;
    std::string vid_prefix = "seg_";

    void validate() const {
        if (n_segments < 0) throw PreconditionError("n_segments must be non-negative");
        if (frames_per_segment <= 0 || width <= 0 || height <= 0)
            throw PreconditionError("frame count and dimensions must be positive");
        if (min_objects < 2 || max_objects < min_objects) throw PreconditionError("need 2 <= min_objects <= max_objects");
        if (min_speed < 0 || max_speed < min_speed) throw PreconditionError("invalid speed range");
        if (max_depth <= 0 || max_depth_speed < 0) throw PreconditionError("invalid depth parameters");
    }
};

/// Side length of the square box drawn for each shape.
inline double shape_size(std::string_view shape) {
    if (shape == "cube") return 64;
    if (shape == "sphere") return 56;
    if (shape == "cylinder") return 60;
    throw DomainError("unknown shape '" + std::string(shape) + "'");
}

inline GenSpec gen_spec_from_json(const nlohmann::json& j) {
    GenSpec s;
    s.n_segments = j.value("n_segments", s.n_segments);
    s.frames_per_segment = j.value("frames_per_segment", s.frames_per_segment);
    s.width = j.value("width", s.width);
    s.height = j.value("height", s.height);
    s.min_objects = j.value("min_objects", s.min_objects);
    s.max_objects = j.value("max_objects", s.max_objects);
    s.min_speed = j.value("min_speed", s.min_speed);
    s.max_speed = j.value("max_speed", s.max_speed);
    s.max_depth = j.value("max_depth", s.max_depth);
    s.max_depth_speed = j.value("max_depth_speed", s.max_depth_speed);
    s.bounce = j.value("bounce", s.bounce);
    s.seed = j.value("seed", s.seed);
    s.vid_prefix = j.value("vid_prefix", s.vid_prefix);
    s.validate();
    return s;
}

inline nlohmann::json to_json(const GenSpec& s) {
    return {{"n_segments", s.n_segments}, {"frames_per_segment", s.frames_per_segment},
            {"width", s.width},           {"height", s.height},
            {"min_objects", s.min_objects}, {"max_objects", s.max_objects},
            {"min_speed", s.min_speed},   {"max_speed", s.max_speed},
            {"max_depth", s.max_depth},   {"max_depth_speed", s.max_depth_speed},
            {"bounce", s.bounce},         {"seed", s.seed},
            {"vid_prefix", s.vid_prefix}};
}

inline std::string segment_vid(const GenSpec& spec, int i) {
    std::string n = std::to_string(i);
    if (n.size() < 5) n.insert(0, 5 - n.size(), '0');
    return spec.vid_prefix + n;
}

namespace detail {

// Moves x by v inside [lo, hi], reflecting at the bounds.
inline void advance(double& x, double& v, double lo, double hi, bool bounce) {
    x += v;
    if (!bounce) {
        x = std::clamp(x, lo, hi);
        return;
    }
    for (int guard = 0; guard < 4 && (x < lo || x > hi); ++guard) {
        if (x < lo) {
            x = 2 * lo - x;
            v = -v;
        } else if (x > hi) {
            x = 2 * hi - x;
            v = -v;
        }
    }
    x = std::clamp(x, lo, hi);
}

}  // namespace detail

inline Segment generate_segment(const GenSpec& spec, int index) {
    std::mt19937_64 rng(splitmix64(spec.seed ^ splitmix64(static_cast<std::uint64_t>(index) + 1)));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto pick = [&](const std::vector<std::string>& v) {
        return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
    };

    Segment seg;
    seg.vid = segment_vid(spec, index);
    seg.frame_count = spec.frames_per_segment;
    seg.width = spec.width;
    seg.height = spec.height;
    const int n = std::uniform_int_distribution<int>(spec.min_objects, spec.max_objects)(rng);

    struct Body {
        double x, y, vx, vy, z, vz, half;
    };
    std::vector<Body> bodies;
    for (int o = 0; o < n; ++o) {
        ObjectTrack t;
        t.oid = o;
        const std::string shape = pick(shape_vocabulary());
        t.cid = shape;
        t.props = {{"color", pick(color_vocabulary())}, {"material", pick(material_vocabulary())}, {"shape", shape}};
        std::sort(t.props.begin(), t.props.end());
        t.frames.resize(static_cast<std::size_t>(spec.frames_per_segment));
        seg.tracks.push_back(std::move(t));

        const double half = shape_size(shape) / 2;
        const double speed = spec.min_speed + (spec.max_speed - spec.min_speed) * unit(rng);
        const double angle = 2 * M_PI * unit(rng);
        Body b;
        b.half = half;
        b.x = half + (spec.width - 2 * half) * unit(rng);
        b.y = half + (spec.height - 2 * half) * unit(rng);
        b.vx = speed * std::cos(angle);
        b.vy = speed * std::sin(angle);
        b.z = spec.max_depth * unit(rng);
        b.vz = spec.max_depth_speed * (2 * unit(rng) - 1);
        bodies.push_back(b);
    }

    std::vector<std::size_t> order(static_cast<std::size_t>(n));
    for (int f = 0; f < spec.frames_per_segment; ++f) {
        for (int o = 0; o < n; ++o) {
            auto& b = bodies[static_cast<std::size_t>(o)];
            if (f > 0) {
                detail::advance(b.x, b.vx, b.half, spec.width - b.half, spec.bounce);
                detail::advance(b.y, b.vy, b.half, spec.height - b.half, spec.bounce);
                detail::advance(b.z, b.vz, 0.0, spec.max_depth, spec.bounce);
            }
            auto& s = seg.tracks[static_cast<std::size_t>(o)].frames[static_cast<std::size_t>(f)];
            s.present = true;
            s.bbox = {b.x - b.half, b.y - b.half, b.x + b.half, b.y + b.half};
            s.depth = b.z;
        }
        // Separate equal depths so front/behind never tie.
        std::iota(order.begin(), order.end(), std::size_t{0});
        auto depth_of = [&](std::size_t o) -> double& { return seg.tracks[o].frames[static_cast<std::size_t>(f)].depth; };
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return depth_of(a) != depth_of(b) ? depth_of(a) < depth_of(b) : a < b;
        });
        for (std::size_t i = 1; i < order.size(); ++i)
            if (depth_of(order[i]) <= depth_of(order[i - 1])) depth_of(order[i]) = depth_of(order[i - 1]) + 1e-6;
    }
    return seg;
}

inline SegmentStore generate(const GenSpec& spec, int workers = 1) {
    spec.validate();
    std::vector<Segment> segs(static_cast<std::size_t>(spec.n_segments));
    parallel_for(segs.size(), workers, [&](std::size_t i) { segs[i] = generate_segment(spec, static_cast<int>(i)); });
    return SegmentStore(std::move(segs));
}

// --------------------------------------------------------------------------
// Benchmark targets

struct NamedTarget {
    std::string id;
    std::string text;
    int n_v = 2;
};

/// The trajectory targets without duration constraints.
inline std::vector<NamedTarget> trajectory_targets() {
    return {
        {"TQ1", "(Near(o1, o2), Bottom(o1))"},
        {"TQ2", "Far(o1, o2); Near(o1, o2); Far(o1, o2)"},
        {"TQ3", "Far(o1, o2); (Near(o1, o2), Behind(o1, o2))"},
        {"TQ4", "Far(o1, o2); (Near(o1, o2), Behind(o1, o2), Left(o1))"},
        {"TQ5", "(FrontOf(o1, o2), Top(o1))"},
        {"TQ6", "Near(o1, o2); Far(o1, o2)"},
        {"TQ7", "(Near(o1, o2), Left(o1), Behind(o1, o2))"},
        {"TQ8", "(Far(o1, o2), Bottom(o1)); Near(o1, o2)"},
        {"TQ9", "(Far(o1, o2), Left(o1)); (Near(o1, o2), Left(o1))"},
    };
}

inline std::vector<NamedTarget> duration_targets() {
    return {
        {"TQ1D", "Duration(Far(o1, o2), 5); Near(o1, o2); Far(o1, o2)"},
        {"TQ2D", "Duration(LeftOf(o1, o2), 5); (Near(o1, o2), Top(o1)); Duration(RightOf(o1, o2), 5)"},
        {"TQ3D", "Duration((FrontOf(o1, o2), Left(o1)), 15); Duration((Left(o1), RightOf(o1, o2), Top(o1)), 5)"},
    };
}

inline std::vector<NamedTarget> scene_graph_targets() {
    return {
        {"SQ1", "Duration((Far(o1, o2), Right(o2)), 15); (FrontOf(o1, o2), Near(o1, o2)); "
                "Duration((Far(o1, o2), Right(o2)), 5)", 2},
        {"SQ2", "(Far(o1, o2), Shape(o1, 'sphere'), Color(o3, 'cyan')); (Near(o1, o2), FrontOf(o1, o2)); "
                "(Far(o1, o2), Top(o2))", 3},
        {"SQ3", "Duration((LeftOf(o1, o2), Shape(o2, 'sphere')), 15); (FrontOf(o1, o3), Near(o1, o3)); "
                "Duration((Behind(o1, o3), Far(o1, o3)), 5)", 3},
    };
}

inline std::vector<NamedTarget> all_targets() {
    auto out = trajectory_targets();
    for (auto& t : duration_targets()) out.push_back(t);
    for (auto& t : scene_graph_targets()) out.push_back(t);
    return out;
}

/// Looks a target up by id; anything else is parsed as query text.
inline Query resolve_target(const std::string& id_or_text, const PredicateRegistry& reg) {
    for (const auto& t : all_targets())
        if (t.id == id_or_text) return parse(t.text, reg, t.n_v);
    return parse(id_or_text, reg, kMaxVars);
}

struct SelectivityRow {
    std::string id;
    std::string query;
    std::size_t positives = 0;
    std::size_t total = 0;
    double rate = 0;
};

inline std::vector<SelectivityRow> calibrate_selectivity(const SegmentStore& store,
                                                         const std::vector<NamedTarget>& targets,
                                                         const PredicateRegistry& reg, int workers = 1) {
    std::vector<SelectivityRow> rows;
    for (const auto& t : targets) {
        const Query q = parse(t.text, reg, t.n_v);
        ExecuteOptions opts;
        opts.workers = workers;
        const auto hits = execute(q, store, reg, opts);
        SelectivityRow r{t.id, to_string(q), hits.size(), store.size(), 0};
        r.rate = store.empty() ? 0.0 : static_cast<double>(hits.size()) / static_cast<double>(store.size());
        rows.push_back(std::move(r));
    }
    return rows;
}

inline nlohmann::json to_json(const std::vector<SelectivityRow>& rows) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& r : rows)
        out.push_back({{"id", r.id}, {"query", r.query}, {"positives", r.positives}, {"total", r.total}, {"rate", r.rate}});
    return out;
}

}  // namespace vqbe
