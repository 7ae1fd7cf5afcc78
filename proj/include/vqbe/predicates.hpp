#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "vqbe/errors.hpp"
#include "vqbe/scene_model.hpp"

namespace vqbe {

/// Geometric or attribute test a predicate is built on. Extension predicates
/// reuse these forms with their own threshold.
enum class PredicateForm {
    near,      // center distance <= threshold * (r(a) + r(b))
    far,       // center distance >= threshold * (r(a) + r(b))
    left_of,   // c(a).x + threshold < c(b).x
    right_of,
    front_of,  // depth(a) + threshold < depth(b)
    behind,
    left,      // c.x < threshold * width
    right,     // c.x > (1 - threshold) * width
    top,       // c.y < threshold * height
    bottom,    // c.y > (1 - threshold) * height
    property,  // props[attribute_key] == constant
};

struct PredicateDef {
    std::string name;
    int arity = 1;
    std::vector<std::string> const_domain;  // empty when the predicate takes no constant
    PredicateForm form = PredicateForm::property;
    double threshold = 0;
    std::string attribute_key;  // property form only

    bool takes_constant() const noexcept { return !const_domain.empty(); }
    bool in_domain(std::string_view c) const {
        return std::find(const_domain.begin(), const_domain.end(), c) != const_domain.end();
    }
};

inline const std::vector<std::string>& color_vocabulary() {
    static const std::vector<std::string> v{"gray", "red", "blue", "green", "brown", "cyan", "purple", "yellow"};
    return v;
}
inline const std::vector<std::string>& material_vocabulary() {
    static const std::vector<std::string> v{"metal", "rubber"};
    return v;
}
inline const std::vector<std::string>& shape_vocabulary() {
    static const std::vector<std::string> v{"cube", "sphere", "cylinder"};
    return v;
}

/// Evaluates a predicate on already-resolved frame states. No presence or
/// domain checking; the executor's inner loop calls this directly.
inline bool eval_states(const PredicateDef& def, const Segment& seg, const ObjectTrack& ta, const FrameState& a,
                        const FrameState* b, std::string_view constant) {
    switch (def.form) {
        case PredicateForm::near:
        case PredicateForm::far: {
            const double d = std::hypot(a.bbox.center_x() - b->bbox.center_x(), a.bbox.center_y() - b->bbox.center_y());
            const double scale = def.threshold * (a.bbox.half_diagonal() + b->bbox.half_diagonal());
            return def.form == PredicateForm::near ? d <= scale : d >= scale;
        }
        case PredicateForm::left_of: return a.bbox.center_x() + def.threshold < b->bbox.center_x();
        case PredicateForm::right_of: return a.bbox.center_x() > b->bbox.center_x() + def.threshold;
        case PredicateForm::front_of: return a.depth + def.threshold < b->depth;
        case PredicateForm::behind: return a.depth > b->depth + def.threshold;
        case PredicateForm::left: return a.bbox.center_x() < def.threshold * seg.width;
        case PredicateForm::right: return a.bbox.center_x() > (1.0 - def.threshold) * seg.width;
        case PredicateForm::top: return a.bbox.center_y() < def.threshold * seg.height;
        case PredicateForm::bottom: return a.bbox.center_y() > (1.0 - def.threshold) * seg.height;
        case PredicateForm::property: {
            const std::string* v = ta.prop(def.attribute_key);
            return v != nullptr && *v == constant;
        }
    }
    return false;
}

/// Checked evaluation: args are oids, all of which must be present at fid.
inline bool eval_predicate(const PredicateDef& def, const Segment& seg, int fid, std::span<const int> oids,
                           std::optional<std::string_view> constant = std::nullopt) {
    if (static_cast<int>(oids.size()) != def.arity)
        throw EvaluationError(def.name + " expects " + std::to_string(def.arity) + " object argument(s)");
    if (def.arity == 2 && oids[0] == oids[1]) throw EvaluationError(def.name + " requires distinct objects");
    if (def.takes_constant()) {
        if (!constant || !def.in_domain(*constant))
            throw DomainError(def.name + ": constant '" + std::string(constant.value_or("")) + "' not in domain");
    } else if (constant) {
        throw DomainError(def.name + " takes no constant");
    }
    if (fid < 0 || fid >= seg.frame_count) throw EvaluationError("fid " + std::to_string(fid) + " out of range");
    const FrameState* states[2] = {nullptr, nullptr};
    const ObjectTrack* tracks[2] = {nullptr, nullptr};
    for (int i = 0; i < def.arity; ++i) {
        tracks[i] = seg.find_track(oids[i]);
        if (tracks[i] == nullptr || !tracks[i]->frames[fid].present)
            throw EvaluationError("object " + std::to_string(oids[i]) + " missing at fid " + std::to_string(fid) +
                                  " of segment '" + seg.vid + "'");
        states[i] = &tracks[i]->frames[fid];
    }
    return eval_states(def, seg, *tracks[0], *states[0], states[1], constant.value_or(""));
}

/// The predicate set P consumed by synthesis. Immutable once built.
class PredicateRegistry {
public:
    PredicateRegistry() = default;
    explicit PredicateRegistry(std::vector<PredicateDef> defs) : defs_(std::move(defs)) {
        for (std::size_t i = 0; i < defs_.size(); ++i)
            for (std::size_t j = 0; j < i; ++j)
                if (defs_[i].name == defs_[j].name) throw DomainError("duplicate predicate " + defs_[i].name);
    }

    const std::vector<PredicateDef>& defs() const noexcept { return defs_; }
    std::size_t size() const noexcept { return defs_.size(); }

    const PredicateDef* find(std::string_view name) const {
        for (const auto& d : defs_)
            if (d.name == name) return &d;
        return nullptr;
    }
    const PredicateDef& at(std::string_view name) const {
        const PredicateDef* d = find(name);
        if (d == nullptr) throw DomainError("unknown predicate '" + std::string(name) + "'");
        return *d;
    }

    /// Registry restricted to `names` (in the given order).
    PredicateRegistry subset(const std::vector<std::string>& names) const {
        std::vector<PredicateDef> out;
        for (const auto& n : names) out.push_back(at(n));
        return PredicateRegistry(std::move(out));
    }

    /// Adds threshold-parameterized predicates from an extension document:
    /// {"predicates": [{"name": "VeryNear", "form": "near", "threshold": 0.6}]}
    PredicateRegistry extended(const nlohmann::json& doc) const {
        std::vector<PredicateDef> out = defs_;
        for (const auto& p : doc.at("predicates")) {
            const auto form_name = p.at("form").get<std::string>();
            PredicateDef def = form_template(form_name);
            def.name = p.at("name").get<std::string>();
            if (p.contains("threshold")) def.threshold = p.at("threshold").get<double>();
            out.push_back(std::move(def));
        }
        return PredicateRegistry(std::move(out));
    }

private:
    static PredicateDef form_template(const std::string& form);
    std::vector<PredicateDef> defs_;
};

/// Near/Far/LeftOf/RightOf/FrontOf/Behind, Left/Right/Top/Bottom, and the
/// Color/Material/Shape property predicates.
inline PredicateRegistry builtin_registry() {
    using F = PredicateForm;
    return PredicateRegistry({
        {"Near", 2, {}, F::near, 1.05, {}},
        {"Far", 2, {}, F::far, 2.1, {}},
        {"LeftOf", 2, {}, F::left_of, 0, {}},
        {"RightOf", 2, {}, F::right_of, 0, {}},
        {"FrontOf", 2, {}, F::front_of, 0, {}},
        {"Behind", 2, {}, F::behind, 0, {}},
        {"Left", 1, {}, F::left, 0.5, {}},
        {"Right", 1, {}, F::right, 0.5, {}},
        {"Top", 1, {}, F::top, 0.5, {}},
        {"Bottom", 1, {}, F::bottom, 0.5, {}},
        {"Color", 1, color_vocabulary(), F::property, 0, "color"},
        {"Material", 1, material_vocabulary(), F::property, 0, "material"},
        {"Shape", 1, shape_vocabulary(), F::property, 0, "shape"},
    });
}

inline PredicateDef PredicateRegistry::form_template(const std::string& form) {
    const auto reg = builtin_registry();
    static const std::pair<const char*, const char*> forms[] = {
        {"near", "Near"}, {"far", "Far"},    {"left_of", "LeftOf"}, {"right_of", "RightOf"},
        {"front_of", "FrontOf"}, {"behind", "Behind"}, {"left", "Left"}, {"right", "Right"},
        {"top", "Top"},   {"bottom", "Bottom"}};
    for (const auto& [f, base] : forms)
        if (form == f) return reg.at(base);
    throw DomainError("unknown predicate form '" + form + "'");
}

/// Location/relationship predicate names used for trajectory-style data
/// (no property predicates).
inline std::vector<std::string> trajectory_pool() {
    return {"Near", "Far", "LeftOf", "RightOf", "FrontOf", "Behind", "Left", "Right", "Top", "Bottom"};
}

/// Number of unary instantiations (constants counted separately) and of
/// binary predicates in a pool.
inline std::pair<long long, long long> predicate_counts(const PredicateRegistry& reg) {
    long long m1 = 0, m2 = 0;
    for (const auto& d : reg.defs()) {
        if (d.arity == 1) m1 += std::max<long long>(1, static_cast<long long>(d.const_domain.size()));
        else m2 += 1;
    }
    return {m1, m2};
}

/// Relationships table at one frame, computed from every binary predicate in
/// the registry over ordered pairs of present objects.
inline std::vector<RelationshipRecord> relationships_at(const Segment& seg, int fid, const PredicateRegistry& reg) {
    std::vector<RelationshipRecord> out;
    const auto objs = objects_at(seg, fid);
    int rid = 0;
    for (const auto& a : objs)
        for (const auto& b : objs) {
            if (a.oid == b.oid) continue;
            const int args[2] = {a.oid, b.oid};
            for (const auto& d : reg.defs())
                if (d.arity == 2 && eval_predicate(d, seg, fid, args)) out.push_back({seg.vid, fid, rid++, a.oid, b.oid, d.name});
        }
    return out;
}

}  // namespace vqbe
