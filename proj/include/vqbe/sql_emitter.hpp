#pragma once

// Translates a query into non-recursive SQL over the relational view
//   Objects(vid, fid, oid, cid, x1, y1, x2, y2, depth)
//   Attributes(vid, fid, oid, key, value)
//   Segments(vid, frame_count, width, height)
// with predicates as user-defined boolean functions over box coordinates.
//
// Per region graph i the emitter produces:
//   g{i}           frames where the graph's atoms hold, per (vid, oids)
//   g{i}_filtered  (i >= 2) frames strictly after the earliest end of g{i-1}
//   g{i}_windowed  (duration > 1) lead(fid, d - 1) over the frame order
//   g{i}_iterated  the earliest end frame per (vid, oids)

#include <string>
#include <vector>

#include "vqbe/dsl.hpp"
#include "vqbe/errors.hpp"
#include "vqbe/predicates.hpp"

namespace vqbe {

namespace detail {

inline std::string sql_quote(const std::string& s) {
    std::string out = "'";
    for (char c : s) {
        if (c == '\'') out += '\'';
        out += c;
    }
    return out + "'";
}

inline std::string box_args(const std::string& alias) {
    return alias + ".x1, " + alias + ".y1, " + alias + ".x2, " + alias + ".y2";
}

inline std::string atom_sql(const PredicateAtom& a, const PredicateDef& def) {
    const std::string o0 = "o" + std::to_string(a.vars[0] + 1);
    const std::string o1 = a.arity == 2 ? "o" + std::to_string(a.vars[1] + 1) : "";
    switch (def.form) {
        case PredicateForm::near:
        case PredicateForm::far:
        case PredicateForm::left_of:
        case PredicateForm::right_of:
            return a.predicate + "(" + box_args(o0) + ", " + box_args(o1) + ")";
        case PredicateForm::front_of:
        case PredicateForm::behind: return a.predicate + "(" + o0 + ".depth, " + o1 + ".depth)";
        case PredicateForm::left:
        case PredicateForm::right:
        case PredicateForm::top:
        case PredicateForm::bottom: return a.predicate + "(" + box_args(o0) + ", s.width, s.height)";
        case PredicateForm::property:
            return "EXISTS (SELECT 1 FROM Attributes a WHERE a.vid = " + o0 + ".vid AND a.fid = " + o0 +
                   ".fid AND a.oid = " + o0 + ".oid AND a.key = " + sql_quote(def.attribute_key) +
                   " AND a.value = " + sql_quote(a.constant) + ")";
    }
    return {};
}

inline bool needs_frame_dims(const PredicateDef& d) {
    return d.form == PredicateForm::left || d.form == PredicateForm::right || d.form == PredicateForm::top ||
           d.form == PredicateForm::bottom;
}

}  // namespace detail

inline std::string emit_sql(const Query& q, const PredicateRegistry& reg) {
    if (q.window) throw UnsupportedError("SQL emission does not support window specifications");
    if (q.graphs.empty()) throw PreconditionError("cannot emit SQL for the empty query");
    const int n = q.var_count();

    std::string oid_cols, oid_list, t1_oids;
    for (int v = 1; v <= n; ++v) {
        const std::string c = "oid" + std::to_string(v);
        oid_cols += ", o" + std::to_string(v) + ".oid AS " + c;
        oid_list += (v > 1 ? ", " : "") + c;
        t1_oids += ", t1." + c;
    }

    std::string sql = "-- " + to_string(q) + "\n";
    for (std::size_t gi = 0; gi < q.graphs.size(); ++gi) {
        const auto& g = q.graphs[gi];
        const std::string i = std::to_string(gi + 1);

        unsigned used = 0;
        bool dims = false;
        for (const auto& a : g.atoms) {
            for (int k = 0; k < a.arity; ++k) used |= 1u << a.vars[k];
            dims = dims || detail::needs_frame_dims(reg.at(a.predicate));
        }
        int anchor = 0;
        while (!(used & (1u << anchor))) ++anchor;
        const std::string anchor_alias = "o" + std::to_string(anchor + 1);

        std::vector<std::string> from, where;
        for (int v = 0; v < n; ++v) {
            const std::string alias = "o" + std::to_string(v + 1);
            if (used & (1u << v)) {
                from.push_back("Objects " + alias);
                if (v != anchor) {
                    where.push_back(alias + ".vid = " + anchor_alias + ".vid");
                    where.push_back(alias + ".fid = " + anchor_alias + ".fid");
                }
            } else {
                from.push_back("(SELECT DISTINCT vid, oid FROM Objects) " + alias);
                where.push_back(alias + ".vid = " + anchor_alias + ".vid");
            }
        }
        if (dims) {
            from.push_back("Segments s");
            where.push_back("s.vid = " + anchor_alias + ".vid");
        }
        for (int a = 0; a < n; ++a)
            for (int b = a + 1; b < n; ++b)
                where.push_back("o" + std::to_string(a + 1) + ".oid <> o" + std::to_string(b + 1) + ".oid");
        for (const auto& a : g.atoms) where.push_back(detail::atom_sql(a, reg.at(a.predicate)));

        sql += "CREATE VIEW g" + i + " AS (\n    SELECT " + anchor_alias + ".vid, " + anchor_alias + ".fid" +
               oid_cols + "\n    FROM ";
        for (std::size_t k = 0; k < from.size(); ++k) sql += (k ? ", " : "") + from[k];
        sql += "\n    WHERE ";
        for (std::size_t k = 0; k < where.size(); ++k) sql += (k ? "\n        AND " : "") + where[k];
        sql += "\n);\n";

        std::string source = "g" + i;
        if (gi > 0) {
            const std::string prev = "g" + std::to_string(gi) + "_iterated";
            sql += "CREATE VIEW g" + i + "_filtered AS (\n    SELECT t1.vid, t2.fid" + t1_oids + "\n    FROM " + prev +
                   " t1, g" + i + " t2\n    WHERE t1.vid = t2.vid";
            for (int v = 1; v <= n; ++v) sql += "\n        AND t1.oid" + std::to_string(v) + " = t2.oid" + std::to_string(v);
            sql += "\n        AND t1.fid < t2.fid\n);\n";
            source = "g" + i + "_filtered";
        }

        if (g.duration > 1) {
            const std::string d = std::to_string(g.duration);
            sql += "CREATE VIEW g" + i + "_windowed AS (\n    SELECT vid, fid, " + oid_list + ",\n        lead(fid, " + d +
                   " - 1, 0) OVER (PARTITION BY vid, " + oid_list + " ORDER BY fid) AS fid_offset\n    FROM " + source +
                   "\n);\n";
            sql += "CREATE VIEW g" + i + "_iterated AS (\n    SELECT vid, min(fid_offset) AS fid, " + oid_list +
                   "\n    FROM g" + i + "_windowed\n    WHERE fid_offset = fid + (" + d + " - 1)\n    GROUP BY vid, " +
                   oid_list + "\n);\n";
        } else {
            sql += "CREATE VIEW g" + i + "_iterated AS (\n    SELECT vid, min(fid) AS fid, " + oid_list + "\n    FROM " +
                   source + "\n    GROUP BY vid, " + oid_list + "\n);\n";
        }
    }
    sql += "SELECT DISTINCT vid FROM g" + std::to_string(q.graphs.size()) + "_iterated;\n";
    return sql;
}

}  // namespace vqbe
