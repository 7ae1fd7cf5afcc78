#pragma once

// Query language: a sequence of region graphs, each a conjunction of
// predicate atoms with a minimum-duration constraint.
//
//   query := graph (";" graph)* [";" "Window(" int ")"]
//   graph := "Duration(" body "," int ")" | body
//   body  := "(" atom ("," atom)* ")" | atom
//   atom  := Name "(" var ["," var] ["," 'const'] ")"
//
// Variables are written o1, o2, ...; internally they are 0-based indices.

#include <algorithm>
#include <array>
#include <cctype>
#include <compare>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "vqbe/errors.hpp"
#include "vqbe/predicates.hpp"

namespace vqbe {

inline constexpr int kMaxVars = 4;

struct PredicateAtom {
    std::string predicate;
    int arity = 1;
    std::array<int, 2> vars{-1, -1};
    std::string constant;  // empty when the predicate takes none

    friend auto operator<=>(const PredicateAtom&, const PredicateAtom&) = default;
    friend bool operator==(const PredicateAtom&, const PredicateAtom&) = default;
};

struct RegionGraphSpec {
    std::vector<PredicateAtom> atoms;  // kept sorted; a set
    int duration = 1;

    void normalize() { std::sort(atoms.begin(), atoms.end()); }
    bool contains(const PredicateAtom& a) const { return std::binary_search(atoms.begin(), atoms.end(), a); }

    friend bool operator==(const RegionGraphSpec&, const RegionGraphSpec&) = default;
};

struct Query {
    std::vector<RegionGraphSpec> graphs;
    std::optional<int> window;

    bool empty() const noexcept { return graphs.empty(); }

    int atom_count() const {
        int n = 0;
        for (const auto& g : graphs) n += static_cast<int>(g.atoms.size());
        return n;
    }

    /// One past the highest variable index used.
    int var_count() const {
        int n = 0;
        for (const auto& g : graphs)
            for (const auto& a : g.atoms)
                for (int i = 0; i < a.arity; ++i) n = std::max(n, a.vars[i] + 1);
        return n;
    }

    unsigned var_mask() const {
        unsigned m = 0;
        for (const auto& g : graphs)
            for (const auto& a : g.atoms)
                for (int i = 0; i < a.arity; ++i) m |= 1u << a.vars[i];
        return m;
    }

    friend bool operator==(const Query&, const Query&) = default;
};

/// Bounds on the synthesis search space.
struct SearchConfig {
    int n_g = 3;  // max region graphs
    int n_p = 5;  // max atoms in the whole query
    int n_v = 2;  // max distinct variables
    std::vector<int> duration_values{5, 10, 15};
    int duration_granularity = 5;
    std::vector<std::string> predicate_pool;  // empty: every registry predicate

    int n_d() const noexcept { return static_cast<int>(duration_values.size()); }

    void validate() const {
        if (n_g <= 0 || n_p <= 0 || n_v <= 0 || duration_granularity <= 0)
            throw PreconditionError("search bounds must be positive");
        if (n_v > kMaxVars) throw PreconditionError("n_v above " + std::to_string(kMaxVars) + " is not supported");
        for (std::size_t i = 0; i < duration_values.size(); ++i) {
            if (duration_values[i] <= 1) throw PreconditionError("duration values must exceed 1");
            if (i > 0 && duration_values[i] <= duration_values[i - 1])
                throw PreconditionError("duration values must be strictly increasing");
        }
    }
};

// --------------------------------------------------------------------------
// Printing

inline std::string var_name(int v) { return "o" + std::to_string(v + 1); }

inline std::string to_string(const PredicateAtom& a) {
    std::string s = a.predicate + "(" + var_name(a.vars[0]);
    if (a.arity == 2) s += ", " + var_name(a.vars[1]);
    if (!a.constant.empty()) s += ", '" + a.constant + "'";
    return s + ")";
}

namespace detail {
inline std::string graph_text(const std::vector<std::string>& atoms, int duration) {
    std::string body;
    if (atoms.size() == 1) {
        body = atoms.front();
    } else {
        body = "(";
        for (std::size_t i = 0; i < atoms.size(); ++i) body += (i ? ", " : "") + atoms[i];
        body += ")";
    }
    if (duration > 1) return "Duration(" + body + ", " + std::to_string(duration) + ")";
    return body;
}
}  // namespace detail

inline std::string to_string(const RegionGraphSpec& g) {
    std::vector<std::string> atoms;
    for (const auto& a : g.atoms) atoms.push_back(to_string(a));
    return detail::graph_text(atoms, g.duration);
}

inline std::string to_string(const Query& q) {
    std::string s;
    for (std::size_t i = 0; i < q.graphs.size(); ++i) s += (i ? "; " : "") + to_string(q.graphs[i]);
    if (q.window) s += (s.empty() ? "" : "; ") + std::string("Window(") + std::to_string(*q.window) + ")";
    return s;
}

// --------------------------------------------------------------------------
// Parsing

namespace detail {

class QueryParser {
public:
    QueryParser(std::string_view text, const PredicateRegistry& reg, int max_vars)
        : s_(text), reg_(reg), max_vars_(max_vars) {}

    Query parse() {
        Query q;
        skip_ws();
        if (pos_ == s_.size()) fail("empty query");
        while (true) {
            skip_ws();
            const std::size_t start = pos_;
            std::string name = peek_ident();
            if (name == "Window") {
                pos_ += name.size();
                expect('(');
                q.window = integer(0);
                expect(')');
                skip_ws();
                if (pos_ != s_.size()) fail("Window(...) must be the last element");
                break;
            }
            if (q.graphs.size() >= 64) fail("too many region graphs");
            q.graphs.push_back(graph());
            check_graph(q.graphs.back(), start);
            skip_ws();
            if (pos_ == s_.size()) break;
            expect(';');
        }
        if (q.graphs.empty()) fail("query needs at least one region graph");
        check_variables(q);
        return q;
    }

private:
    [[noreturn]] void fail(const std::string& msg) const {
        throw ParseError("query syntax error at position " + std::to_string(pos_) + ": " + msg, 0, pos_);
    }

    void skip_ws() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }

    void expect(char c) {
        skip_ws();
        if (pos_ >= s_.size() || s_[pos_] != c) fail(std::string("expected '") + c + "'");
        ++pos_;
    }

    bool accept(char c) {
        skip_ws();
        if (pos_ < s_.size() && s_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    std::string peek_ident() {
        skip_ws();
        std::size_t e = pos_;
        while (e < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[e])) || s_[e] == '_')) ++e;
        return std::string(s_.substr(pos_, e - pos_));
    }

    std::string ident() {
        std::string id = peek_ident();
        if (id.empty() || std::isdigit(static_cast<unsigned char>(id[0]))) fail("expected a name");
        pos_ += id.size();
        return id;
    }

    int integer(int min) {
        skip_ws();
        std::size_t e = pos_;
        while (e < s_.size() && std::isdigit(static_cast<unsigned char>(s_[e]))) ++e;
        if (e == pos_ || e - pos_ > 9) fail("expected an integer");
        const int v = std::stoi(std::string(s_.substr(pos_, e - pos_)));
        if (v < min) fail("integer must be >= " + std::to_string(min));
        pos_ = e;
        return v;
    }

    RegionGraphSpec graph() {
        const std::size_t save = pos_;
        if (peek_ident() == "Duration") {
            pos_ += 8;
            skip_ws();
            if (pos_ < s_.size() && s_[pos_] == '(') {
                ++pos_;
                RegionGraphSpec g = body();
                expect(',');
                g.duration = integer(1);
                expect(')');
                return g;
            }
            pos_ = save;
        }
        return body();
    }

    RegionGraphSpec body() {
        RegionGraphSpec g;
        skip_ws();
        if (accept('(')) {
            do g.atoms.push_back(atom());
            while (accept(','));
            expect(')');
        } else {
            g.atoms.push_back(atom());
        }
        return g;
    }

    PredicateAtom atom() {
        skip_ws();
        const std::size_t at = pos_;
        const std::string name = ident();
        const PredicateDef* def = reg_.find(name);
        if (def == nullptr) {
            pos_ = at;
            fail("unknown predicate '" + name + "'");
        }
        expect('(');
        std::vector<int> vars;
        std::optional<std::string> constant;
        do {
            skip_ws();
            if (pos_ < s_.size() && (s_[pos_] == '\'' || s_[pos_] == '"')) {
                if (constant) fail("at most one constant per atom");
                const char quote = s_[pos_++];
                const std::size_t e = s_.find(quote, pos_);
                if (e == std::string_view::npos) fail("unterminated constant");
                constant = std::string(s_.substr(pos_, e - pos_));
                pos_ = e + 1;
            } else {
                if (constant) fail("variables must precede the constant");
                if (pos_ >= s_.size() || s_[pos_] != 'o') fail("expected a variable like o1");
                ++pos_;
                const int v = integer(1);
                if (v > max_vars_) fail("variable o" + std::to_string(v) + " exceeds the variable limit");
                vars.push_back(v - 1);
            }
        } while (accept(','));
        expect(')');

        if (static_cast<int>(vars.size()) != def->arity) {
            pos_ = at;
            fail(name + " takes " + std::to_string(def->arity) + " variable(s)");
        }
        if (def->arity == 2 && vars[0] == vars[1]) {
            pos_ = at;
            fail(name + " requires distinct variables");
        }
        if (def->takes_constant() != constant.has_value()) {
            pos_ = at;
            fail(def->takes_constant() ? name + " requires a constant" : name + " takes no constant");
        }
        if (constant && !def->in_domain(*constant)) {
            pos_ = at;
            fail("constant '" + *constant + "' is not in the domain of " + name);
        }
        PredicateAtom a;
        a.predicate = name;
        a.arity = def->arity;
        a.vars[0] = vars[0];
        if (def->arity == 2) a.vars[1] = vars[1];
        a.constant = constant.value_or("");
        return a;
    }

    void check_graph(RegionGraphSpec& g, std::size_t start) {
        g.normalize();
        if (std::adjacent_find(g.atoms.begin(), g.atoms.end()) != g.atoms.end()) {
            pos_ = start;
            fail("duplicate atom in region graph");
        }
    }

    void check_variables(const Query& q) {
        const unsigned mask = q.var_mask();
        if ((mask & (mask + 1)) != 0) {
            pos_ = 0;
            fail("variables must form a prefix o1..oj");
        }
    }

    std::string_view s_;
    std::size_t pos_ = 0;
    const PredicateRegistry& reg_;
    int max_vars_;
};

}  // namespace detail

/// Parses query text against a predicate registry. Throws ParseError with the
/// offending character position.
inline Query parse(std::string_view text, const PredicateRegistry& reg, int max_vars = 3) {
    return detail::QueryParser(text, reg, std::min(max_vars, kMaxVars)).parse();
}

// --------------------------------------------------------------------------
// Canonical form

/// Equivalence key (atom order and variable naming erased) and the variable
/// renaming that produced it: renaming[old] = new.
struct CanonicalForm {
    std::string key;
    std::array<int, kMaxVars> renaming{0, 1, 2, 3};
};

inline CanonicalForm canonical_form(const Query& q) {
    const int n = q.var_count();
    std::array<int, kMaxVars> perm{0, 1, 2, 3};
    CanonicalForm best;
    bool first = true;
    std::vector<std::string> atoms;
    do {
        std::string s;
        for (std::size_t gi = 0; gi < q.graphs.size(); ++gi) {
            const auto& g = q.graphs[gi];
            atoms.clear();
            for (PredicateAtom a : g.atoms) {
                for (int i = 0; i < a.arity; ++i) a.vars[i] = perm[a.vars[i]];
                atoms.push_back(to_string(a));
            }
            std::sort(atoms.begin(), atoms.end());
            s += (gi ? "; " : "") + detail::graph_text(atoms, g.duration);
        }
        if (q.window) s += "; Window(" + std::to_string(*q.window) + ")";
        if (first || s < best.key) {
            best.key = std::move(s);
            best.renaming = perm;
            first = false;
        }
    } while (n > 1 && std::next_permutation(perm.begin(), perm.begin() + n));
    return best;
}

inline std::string canonical(const Query& q) { return canonical_form(q).key; }

// --------------------------------------------------------------------------
// Complexity and search-space size

struct Alpha {
    double a1 = 1.0, a2 = 1.0, a3 = 0.1;
};

/// Duration scale of one graph: 1 for an unconstrained graph, growing by one
/// per granularity step (5 -> 2, 10 -> 3, 15 -> 4 at granularity 5).
inline int duration_scale(int duration, int granularity) { return duration / granularity + 1; }

/// Sum over graphs of a1*n_p + a2*n_d + a3*n_d*n_p.
inline double complexity(const Query& q, const Alpha& alpha, const SearchConfig& config) {
    double r = 0;
    for (const auto& g : q.graphs) {
        const double np = static_cast<double>(g.atoms.size());
        const double nd = duration_scale(g.duration, config.duration_granularity);
        r += alpha.a1 * np + alpha.a2 * nd + alpha.a3 * nd * np;
    }
    return r;
}

using BigInt = boost::multiprecision::cpp_int;

/// (n_g (n_v m1 + n_v^2 m2))^n_p * n_d^n_g, exact.
inline BigInt search_space_bound(long long n_g, long long n_v, long long m1, long long m2, long long n_p,
                                 long long n_d) {
    const BigInt base = BigInt(n_g) * (BigInt(n_v) * m1 + BigInt(n_v) * n_v * m2);
    return boost::multiprecision::pow(base, static_cast<unsigned>(n_p)) *
           boost::multiprecision::pow(BigInt(n_d), static_cast<unsigned>(n_g));
}

/// Bound for a config over a registry. A config without duration values has
/// one duration choice (unconstrained), so n_d counts as 1 there.
inline BigInt search_space_bound(const SearchConfig& config, const PredicateRegistry& pool) {
    const auto [m1, m2] = predicate_counts(pool);
    return search_space_bound(config.n_g, config.n_v, m1, m2, config.n_p, std::max(1, config.n_d()));
}

}  // namespace vqbe
