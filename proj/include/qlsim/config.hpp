#pragma once

// Plain-text run configuration: "[section]" headers, "key = value" lines,
// '#' comments. Every field has a default; unknown keys are rejected.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "qlsim/criticality.hpp"

namespace qlsim {

/// Invalid configuration text; the message lists every problem with its line.
class ConfigError : public DomainError {
public:
    ConfigError(const std::string &what, std::vector<std::string> problems)
        : DomainError(what), problems_(std::move(problems)) {}
    const std::vector<std::string> &problems() const { return problems_; }

private:
    std::vector<std::string> problems_;
};

struct RunConfig {
    // [model]
    ModelKind model = ModelKind::effective;
    ModelParams params{1.0, 1.0, 0.2, 0.5};
    CouplingForm form = CouplingForm::printed;
    // [lattice]
    int L = 64; // cells (full) or qutrits (effective)
    Boundary boundary = Boundary::open;
    int n_max = 4;
    // [policy]
    int chi = 100;
    double svd_cutoff = 1e-10;
    double max_discarded_weight = 0.0;
    // [dmrg]
    int sweeps = 30;
    int min_sweeps = 2;
    double energy_tol = 1e-10;
    int local_max_iter = 16;
    double local_tol = 1e-10;
    int init_bond = 8;
    bool warm_start = true;
    std::vector<int> chi_schedule;
    // [ed]
    double ed_tol = 1e-10;
    int ed_max_matvec = 20000;
    int ed_krylov_max = 160;
    int ed_states = 1;
    // [observables]
    ExtractionMode mode = ExtractionMode::correlator;
    double pinning = 0.0;
    int pinning_op = 4;
    bool pinning_staggered = false;
    // [sweep]
    Engine engine = Engine::dmrg;
    SweepAxis axis = SweepAxis::g;
    std::vector<double> values{0.40, 0.42, 0.44, 0.46, 0.48, 0.50, 0.52, 0.54, 0.56, 0.58, 0.60, 0.62};
    // [fit]
    FitSide side = FitSide::above;
    std::string column = "phi4";
    std::string input; // CSV to fit; empty means <out>/sweep.csv
    double window_fraction = 0.3;
    double floor_factor = 3.0;
    double noise_floor = -1.0;
    // [phase]
    std::vector<double> phase_s{0.0, 0.1, 0.2, 0.3};
    std::vector<double> phase_g{0.2, 0.4, 0.6, 0.8, 1.0};
    double theta_sr = 0.1;
    double theta_cdw = 0.1;
    double theta_entropy = 0.3;
    // [symmetry]
    int sym_cells = 2;
    Boundary sym_boundary = Boundary::periodic;
    int sym_n_max = 3;
    // [polaron]
    std::vector<double> polaron_g{0.1, 0.2, 0.5, 1.0};
    int polaron_cells = 2;
    int polaron_n_max = 14;
    // [run]
    std::string out = "qlsim-out";
    std::uint64_t seed = 20240611;
    int workers = 1;

    friend bool operator==(const RunConfig &, const RunConfig &) = default;

    LatticeSpec lattice() const {
        return model == ModelKind::full ? lattice_layout(L, boundary, n_max) : LatticeSpec::qutrit_chain(L, boundary);
    }

    TruncationPolicy policy() const {
        TruncationPolicy p;
        p.chi_max = chi;
        p.svd_cutoff = svd_cutoff;
        p.max_discarded_weight = max_discarded_weight;
        return p;
    }

    DmrgOptions dmrg_options() const {
        DmrgOptions o;
        o.n_sweeps = sweeps;
        o.min_sweeps = min_sweeps;
        o.energy_tol = energy_tol;
        o.local_max_iter = local_max_iter;
        o.local_tol = local_tol;
        o.pinning_epsilon = pinning;
        o.chi_schedule = chi_schedule;
        return o;
    }

    EdOptions ed_options() const {
        EdOptions o;
        o.tol = ed_tol;
        o.max_matvec = ed_max_matvec;
        o.krylov_max = ed_krylov_max;
        o.seed = seed;
        return o;
    }

    PinningField pinning_field() const { return {pinning, pinning_op, pinning_staggered}; }

    SweepPlan sweep_plan() const {
        SweepPlan plan;
        plan.model = model;
        plan.engine = engine;
        plan.axis = axis;
        plan.base = params;
        plan.grid = values;
        plan.L = L;
        plan.boundary = boundary;
        plan.n_max = n_max;
        plan.form = form;
        plan.mode = mode;
        plan.pinning = pinning_field();
        plan.policy = policy();
        plan.dmrg = dmrg_options();
        plan.ed = ed_options();
        plan.seed = seed;
        plan.init_bond = init_bond;
        plan.warm_start = warm_start;
        plan.workers = workers;
        return plan;
    }

    FitOptions fit_options() const {
        FitOptions f;
        f.window_fraction = window_fraction;
        f.floor_factor = floor_factor;
        f.noise_floor = noise_floor;
        return f;
    }

    PhaseThresholds thresholds() const { return {theta_sr, theta_cdw, theta_entropy}; }
};

namespace detail {

inline std::string trim(const std::string &s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos)
        return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline double parse_double(const std::string &v) {
    size_t pos = 0;
    double d = 0.0;
    try {
        d = std::stod(v, &pos);
    } catch (const std::exception &) {
        pos = std::string::npos;
    }
    if (pos != v.size())
        throw std::invalid_argument("expected a real number");
    return d;
}

inline long long parse_integer(const std::string &v) {
    size_t pos = 0;
    long long i = 0;
    try {
        i = std::stoll(v, &pos);
    } catch (const std::exception &) {
        pos = std::string::npos;
    }
    if (pos != v.size())
        throw std::invalid_argument("expected an integer");
    return i;
}

inline bool parse_bool(const std::string &v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on")
        return true;
    if (v == "false" || v == "0" || v == "no" || v == "off")
        return false;
    throw std::invalid_argument("expected true or false");
}

inline std::vector<std::string> split_list(const std::string &v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    for (std::string item; std::getline(ss, item, ',');) {
        item = trim(item);
        if (!item.empty())
            out.push_back(item);
    }
    return out;
}

struct ConfigField {
    std::string section;
    std::string key;
    std::function<void(RunConfig &, const std::string &)> set; // throws on type mismatch
    std::function<std::string(const RunConfig &)> get;
    std::function<std::string(const RunConfig &)> check; // empty string when valid
};

template <class F>
ConfigField real_field(const char *sec, const char *key, F member, std::function<std::string(double)> check = {}) {
    return {sec, key, [member](RunConfig &c, const std::string &v) { member(c) = parse_double(v); },
            [member](const RunConfig &c) { return format_double(member(const_cast<RunConfig &>(c))); },
            [member, check](const RunConfig &c) {
                const double v = member(const_cast<RunConfig &>(c));
                if (!std::isfinite(v))
                    return std::string("must be finite");
                return check ? check(v) : std::string();
            }};
}

template <class F>
ConfigField int_field(const char *sec, const char *key, F member, long long lo, long long hi) {
    return {sec, key,
            [member](RunConfig &c, const std::string &v) {
                const long long i = parse_integer(v);
                if (i < std::numeric_limits<int>::min() || i > std::numeric_limits<int>::max())
                    throw std::invalid_argument("integer out of range");
                member(c) = static_cast<int>(i);
            },
            [member](const RunConfig &c) { return std::to_string(member(const_cast<RunConfig &>(c))); },
            [member, lo, hi](const RunConfig &c) {
                const long long v = member(const_cast<RunConfig &>(c));
                if (v < lo || v > hi)
                    return "must be in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]";
                return std::string();
            }};
}

inline std::string at_least(double v, double lo, const char *what) {
    return v >= lo ? std::string() : std::string("must be ") + what;
}

template <class E>
ConfigField enum_field(const char *sec, const char *key, E RunConfig::*member,
                       std::initializer_list<std::pair<const char *, E>> names) {
    std::vector<std::pair<std::string, E>> table;
    for (const auto &[n, e] : names)
        table.emplace_back(n, e);
    return {sec, key,
            [member, table](RunConfig &c, const std::string &v) {
                for (const auto &[n, e] : table)
                    if (v == n) {
                        c.*member = e;
                        return;
                    }
                std::string allowed;
                for (const auto &[n, e] : table)
                    allowed += (allowed.empty() ? "" : "|") + n;
                throw std::invalid_argument("expected one of " + allowed);
            },
            [member, table](const RunConfig &c) {
                for (const auto &[n, e] : table)
                    if (c.*member == e)
                        return n;
                return std::string("?");
            },
            {}};
}

inline ConfigField real_list_field(const char *sec, const char *key, std::vector<double> RunConfig::*member,
                                   bool increasing, bool non_negative) {
    return {sec, key,
            [member](RunConfig &c, const std::string &v) {
                std::vector<double> out;
                for (const auto &item : split_list(v))
                    out.push_back(parse_double(item));
                c.*member = out;
            },
            [member](const RunConfig &c) {
                std::string s;
                for (double v : c.*member)
                    s += (s.empty() ? "" : ", ") + format_double(v);
                return s;
            },
            [member, increasing, non_negative](const RunConfig &c) {
                const auto &v = c.*member;
                if (v.empty())
                    return std::string("must not be empty");
                for (size_t k = 0; k < v.size(); ++k) {
                    if (!std::isfinite(v[k]))
                        return std::string("entries must be finite");
                    if (non_negative && v[k] < 0)
                        return std::string("entries must be >= 0");
                    if (increasing && k > 0 && !(v[k] > v[k - 1]))
                        return std::string("entries must be strictly increasing");
                }
                return std::string();
            }};
}

inline const std::vector<ConfigField> &config_fields() {
    static const std::vector<ConfigField> fields = [] {
        std::vector<ConfigField> f;
        auto positive = [](double v) { return v > 0 ? std::string() : std::string("must be > 0"); };
        auto non_negative = [](double v) { return at_least(v, 0.0, ">= 0"); };
        f.push_back(enum_field<ModelKind>("model", "kind", &RunConfig::model,
                                          {{"full", ModelKind::full}, {"effective", ModelKind::effective}}));
        f.push_back(real_field("model", "omega", [](RunConfig &c) -> double & { return c.params.omega; }, positive));
        f.push_back(real_field("model", "Omega", [](RunConfig &c) -> double & { return c.params.Omega; }, non_negative));
        f.push_back(real_field("model", "s", [](RunConfig &c) -> double & { return c.params.s; }));
        f.push_back(real_field("model", "g", [](RunConfig &c) -> double & { return c.params.g; }, non_negative));
        f.push_back(enum_field<CouplingForm>("model", "form", &RunConfig::form,
                                             {{"printed", CouplingForm::printed}, {"oracle", CouplingForm::oracle}}));
        f.push_back(int_field("lattice", "L", [](RunConfig &c) -> int & { return c.L; }, 2, 100000));
        f.push_back(enum_field<Boundary>("lattice", "boundary", &RunConfig::boundary,
                                         {{"open", Boundary::open}, {"periodic", Boundary::periodic}}));
        f.push_back(int_field("lattice", "n_max", [](RunConfig &c) -> int & { return c.n_max; }, 2, 64));
        f.push_back(int_field("policy", "chi", [](RunConfig &c) -> int & { return c.chi; }, 1, kMaxBondDim));
        f.push_back(real_field("policy", "svd_cutoff", [](RunConfig &c) -> double & { return c.svd_cutoff; },
                               non_negative));
        f.push_back(real_field("policy", "max_discarded_weight",
                               [](RunConfig &c) -> double & { return c.max_discarded_weight; }, non_negative));
        f.push_back(int_field("dmrg", "sweeps", [](RunConfig &c) -> int & { return c.sweeps; }, 1, 100000));
        f.push_back(int_field("dmrg", "min_sweeps", [](RunConfig &c) -> int & { return c.min_sweeps; }, 1, 100000));
        f.push_back(real_field("dmrg", "energy_tol", [](RunConfig &c) -> double & { return c.energy_tol; },
                               non_negative));
        f.push_back(int_field("dmrg", "local_max_iter", [](RunConfig &c) -> int & { return c.local_max_iter; }, 1,
                              10000));
        f.push_back(real_field("dmrg", "local_tol", [](RunConfig &c) -> double & { return c.local_tol; }, positive));
        f.push_back(int_field("dmrg", "init_bond", [](RunConfig &c) -> int & { return c.init_bond; }, 1, kMaxBondDim));
        f.push_back({"dmrg", "warm_start", [](RunConfig &c, const std::string &v) { c.warm_start = parse_bool(v); },
                     [](const RunConfig &c) { return std::string(c.warm_start ? "true" : "false"); },
                     {}});
        f.push_back({"dmrg", "chi_schedule",
                     [](RunConfig &c, const std::string &v) {
                         std::vector<int> out;
                         for (const auto &item : split_list(v))
                             out.push_back(static_cast<int>(parse_integer(item)));
                         c.chi_schedule = out;
                     },
                     [](const RunConfig &c) {
                         std::string s;
                         for (int v : c.chi_schedule)
                             s += (s.empty() ? "" : ", ") + std::to_string(v);
                         return s;
                     },
                     [](const RunConfig &c) {
                         for (int v : c.chi_schedule)
                             if (v < 1 || v > kMaxBondDim)
                                 return std::string("entries must be in [1, 4096]");
                         return std::string();
                     }});
        f.push_back(real_field("ed", "tol", [](RunConfig &c) -> double & { return c.ed_tol; }, positive));
        f.push_back(int_field("ed", "max_matvec", [](RunConfig &c) -> int & { return c.ed_max_matvec; }, 1, 100000000));
        f.push_back(int_field("ed", "krylov_max", [](RunConfig &c) -> int & { return c.ed_krylov_max; }, 4, 100000));
        f.push_back(int_field("ed", "states", [](RunConfig &c) -> int & { return c.ed_states; }, 1, 1000));
        f.push_back(enum_field<ExtractionMode>(
            "observables", "mode", &RunConfig::mode,
            {{"correlator", ExtractionMode::correlator}, {"pinned", ExtractionMode::pinned}}));
        f.push_back(real_field("observables", "pinning", [](RunConfig &c) -> double & { return c.pinning; }));
        f.push_back(int_field("observables", "pinning_op", [](RunConfig &c) -> int & { return c.pinning_op; }, 1, 8));
        f.push_back({"observables", "pinning_staggered",
                     [](RunConfig &c, const std::string &v) { c.pinning_staggered = parse_bool(v); },
                     [](const RunConfig &c) { return std::string(c.pinning_staggered ? "true" : "false"); },
                     {}});
        f.push_back(enum_field<Engine>("sweep", "engine", &RunConfig::engine, {{"ed", Engine::ed}, {"dmrg", Engine::dmrg}}));
        f.push_back(enum_field<SweepAxis>("sweep", "axis", &RunConfig::axis, {{"g", SweepAxis::g}, {"s", SweepAxis::s}}));
        f.push_back(real_list_field("sweep", "values", &RunConfig::values, true, false));
        f.push_back(enum_field<FitSide>("fit", "side", &RunConfig::side,
                                        {{"above", FitSide::above}, {"below", FitSide::below}}));
        f.push_back({"fit", "column", [](RunConfig &c, const std::string &v) { c.column = v; },
                     [](const RunConfig &c) { return c.column; },
                     [](const RunConfig &c) {
                         for (const char *n : {"phi", "phi4", "phi6", "varphi", "cdw_contrast", "entropy_mean",
                                               "entropy_stagger"})
                             if (c.column == n)
                                 return std::string();
                         return std::string("must name an order-parameter column");
                     }});
        f.push_back({"fit", "input", [](RunConfig &c, const std::string &v) { c.input = v; },
                     [](const RunConfig &c) { return c.input; }, {}});
        f.push_back(real_field("fit", "window", [](RunConfig &c) -> double & { return c.window_fraction; }, positive));
        f.push_back(real_field("fit", "floor_factor", [](RunConfig &c) -> double & { return c.floor_factor; },
                               non_negative));
        f.push_back(real_field("fit", "noise_floor", [](RunConfig &c) -> double & { return c.noise_floor; }));
        f.push_back(real_list_field("phase", "s_values", &RunConfig::phase_s, true, false));
        f.push_back(real_list_field("phase", "g_values", &RunConfig::phase_g, true, true));
        f.push_back(real_field("phase", "theta_sr", [](RunConfig &c) -> double & { return c.theta_sr; }, non_negative));
        f.push_back(real_field("phase", "theta_cdw", [](RunConfig &c) -> double & { return c.theta_cdw; }, non_negative));
        f.push_back(real_field("phase", "theta_entropy", [](RunConfig &c) -> double & { return c.theta_entropy; },
                               non_negative));
        f.push_back(int_field("symmetry", "cells", [](RunConfig &c) -> int & { return c.sym_cells; }, 1, 64));
        f.push_back(enum_field<Boundary>("symmetry", "boundary", &RunConfig::sym_boundary,
                                         {{"open", Boundary::open}, {"periodic", Boundary::periodic}}));
        f.push_back(int_field("symmetry", "n_max", [](RunConfig &c) -> int & { return c.sym_n_max; }, 2, 64));
        f.push_back(real_list_field("polaron", "g_values", &RunConfig::polaron_g, false, true));
        f.push_back(int_field("polaron", "cells", [](RunConfig &c) -> int & { return c.polaron_cells; }, 1, 8));
        f.push_back(int_field("polaron", "n_max", [](RunConfig &c) -> int & { return c.polaron_n_max; }, 2, 200));
        f.push_back({"run", "out", [](RunConfig &c, const std::string &v) { c.out = v; },
                     [](const RunConfig &c) { return c.out; },
                     [](const RunConfig &c) { return c.out.empty() ? std::string("must not be empty") : std::string(); }});
        f.push_back({"run", "seed",
                     [](RunConfig &c, const std::string &v) {
                         const long long i = parse_integer(v);
                         if (i < 0)
                             throw std::invalid_argument("seed must be >= 0");
                         c.seed = static_cast<std::uint64_t>(i);
                     },
                     [](const RunConfig &c) { return std::to_string(c.seed); }, {}});
        f.push_back(int_field("run", "workers", [](RunConfig &c) -> int & { return c.workers; }, 1, 1024));
        return f;
    }();
    return fields;
}

inline const ConfigField *find_field(const std::string &section, const std::string &key) {
    for (const auto &f : config_fields())
        if (f.section == section && f.key == key)
            return &f;
    return nullptr;
}

} // namespace detail

/// Constraint violations of a config, one message per offending field.
inline std::vector<std::string> config_violations(const RunConfig &c) {
    std::vector<std::string> out;
    for (const auto &f : detail::config_fields())
        if (f.check) {
            const std::string msg = f.check(c);
            if (!msg.empty())
                out.push_back(f.section + "." + f.key + ": " + msg);
        }
    if (c.min_sweeps > c.sweeps)
        out.push_back("dmrg.min_sweeps: must not exceed dmrg.sweeps");
    return out;
}

/// `keys_set`, when given, receives "section.key" for every assigned key.
inline RunConfig parse_config(const std::string &text, std::vector<std::string> *keys_set = nullptr) {
    RunConfig c;
    std::vector<std::string> problems;
    std::map<std::string, int> line_of;
    std::istringstream in(text);
    std::string section;
    int line_no = 0;
    for (std::string raw; std::getline(in, raw);) {
        ++line_no;
        const auto hash = raw.find('#');
        const std::string line = detail::trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (line.empty())
            continue;
        const std::string where = "line " + std::to_string(line_no) + ": ";
        if (line.front() == '[') {
            if (line.back() != ']') {
                problems.push_back(where + "malformed section header '" + line + "'");
                continue;
            }
            section = detail::trim(line.substr(1, line.size() - 2));
            bool known = false;
            for (const auto &f : detail::config_fields())
                known = known || f.section == section;
            if (!known)
                problems.push_back(where + "unknown section [" + section + "]");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            problems.push_back(where + "expected 'key = value'");
            continue;
        }
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        const auto *field = detail::find_field(section, key);
        if (!field) {
            problems.push_back(where + "unknown key '" + (section.empty() ? key : section + "." + key) + "'");
            continue;
        }
        const std::string name = section + "." + key;
        if (line_of.count(name)) {
            problems.push_back(where + "duplicate key '" + name + "' (first on line " +
                               std::to_string(line_of[name]) + ")");
            continue;
        }
        line_of[name] = line_no;
        if (keys_set)
            keys_set->push_back(name);
        try {
            field->set(c, value);
        } catch (const std::exception &e) {
            problems.push_back(where + "type mismatch for '" + name + "' = '" + value + "': " + e.what());
            continue;
        }
        if (field->check) {
            const std::string msg = field->check(c);
            if (!msg.empty())
                problems.push_back(where + "constraint violation for '" + name + "': " + msg);
        }
    }
    if (c.min_sweeps > c.sweeps) {
        const int l = line_of.count("dmrg.min_sweeps") ? line_of["dmrg.min_sweeps"] : 0;
        problems.push_back("line " + std::to_string(l) + ": constraint violation for 'dmrg.min_sweeps': must not exceed dmrg.sweeps");
    }
    if (!problems.empty()) {
        std::string msg = "invalid configuration:";
        for (const auto &p : problems)
            msg += "\n  " + p;
        throw ConfigError(msg, problems);
    }
    return c;
}

/// Text that parses back to an equal config.
inline std::string serialize_config(const RunConfig &c) {
    std::string out, section;
    for (const auto &f : detail::config_fields()) {
        if (f.section != section) {
            section = f.section;
            out += (out.empty() ? "" : "\n") + std::string("[") + section + "]\n";
        }
        out += f.key + " = " + f.get(c) + "\n";
    }
    return out;
}

} // namespace qlsim
