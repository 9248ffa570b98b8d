#pragma once

// Scenario files: an INI-style text format with sections, parsed into a
// validated ScenarioConfig (all violations are reported at once), serialized
// back losslessly, and a set of built-in presets.
//
//   [scenario]      name, dt, duration, frequency, window_start, window_end,
//                   mode_branch, mode_bus
//   [network]       dataset (kundur-2area | inline), lossless, damping, base_mva
//   [bus.<id>] [branch.<name>] [generator.<name>] [load.<name>]   (inline only)
//   [tcsc]          branch, b0, kc0, dkc_limit, strategy, kp, tc, tw, td1, td2,
//                   feedback_branch, feedback_bus
//   [statcom]       name, bus, q_gen, control, kp_q, ki_q, kdroop, pll, t_pll
//   [disturbance.<n>]  kind, target, magnitude, t_start, duration
//   [expect]        tcsc, statcom, conservation  (source | sink | neutral)

#include "defsim/def_engine.hpp"
#include "defsim/errors.hpp"
#include "defsim/kundur.hpp"
#include "defsim/network.hpp"
#include "defsim/simulator.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace defsim {

// ---------------------------------------------------------------------------
// INI document
// ---------------------------------------------------------------------------

struct IniEntry {
    std::string key;
    std::string value;
    int line = 0;
};

struct IniSection {
    std::string name;
    int line = 0;
    std::vector<IniEntry> entries;

    const IniEntry* find(std::string_view key) const {
        for (const auto& e : entries)
            if (e.key == key) return &e;
        return nullptr;
    }
};

struct IniDocument {
    std::vector<IniSection> sections;

    IniSection* find(std::string_view name) {
        for (auto& s : sections)
            if (s.name == name) return &s;
        return nullptr;
    }
    const IniSection* find(std::string_view name) const {
        for (const auto& s : sections)
            if (s.name == name) return &s;
        return nullptr;
    }

    /// Sets section.key, creating either when absent.
    void set(const std::string& section, const std::string& key, const std::string& value) {
        IniSection* s = find(section);
        if (!s) {
            sections.push_back({section, 0, {}});
            s = &sections.back();
        }
        for (auto& e : s->entries)
            if (e.key == key) {
                e.value = value;
                return;
            }
        s->entries.push_back({key, value, 0});
    }
};

namespace detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

inline std::string line_prefix(int line) { return line > 0 ? "line " + std::to_string(line) + ": " : ""; }

}  // namespace detail

/// Splits text into sections. Comments start with '#' or ';' at the beginning of a line.
inline IniDocument parse_ini(const std::string& text, std::vector<std::string>& violations) {
    IniDocument doc;
    std::istringstream in(text);
    std::string raw;
    int line = 0;
    std::set<std::string> seen;
    while (std::getline(in, raw)) {
        ++line;
        const std::string s = detail::trim(raw);
        if (s.empty() || s[0] == '#' || s[0] == ';') continue;
        if (s.front() == '[') {
            if (s.back() != ']') {
                violations.push_back(detail::line_prefix(line) + "malformed section header '" + s + "'");
                continue;
            }
            const std::string name = detail::trim(std::string_view(s).substr(1, s.size() - 2));
            if (!seen.insert(name).second)
                violations.push_back(detail::line_prefix(line) + "duplicate section [" + name + "]");
            doc.sections.push_back({name, line, {}});
            continue;
        }
        const auto eq = s.find('=');
        if (eq == std::string::npos) {
            violations.push_back(detail::line_prefix(line) + "expected 'key = value', got '" + s + "'");
            continue;
        }
        if (doc.sections.empty()) {
            violations.push_back(detail::line_prefix(line) + "key outside of any section");
            continue;
        }
        IniEntry e{detail::trim(std::string_view(s).substr(0, eq)), detail::trim(std::string_view(s).substr(eq + 1)),
                   line};
        auto& sec = doc.sections.back();
        if (sec.find(e.key))
            violations.push_back(detail::line_prefix(line) + "duplicate key '" + e.key + "' in [" + sec.name + "]");
        else
            sec.entries.push_back(std::move(e));
    }
    return doc;
}

/// Levenshtein distance, for "did you mean" hints.
inline std::size_t edit_distance(std::string_view a, std::string_view b) {
    std::vector<std::size_t> row(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        std::size_t diag = row[0];
        row[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            const std::size_t up = row[j];
            row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
            diag = up;
        }
    }
    return row[b.size()];
}

inline std::string nearest(std::string_view word, const std::vector<std::string>& candidates) {
    std::string best;
    std::size_t best_d = static_cast<std::size_t>(-1);
    for (const auto& c : candidates) {
        const std::size_t d = edit_distance(word, c);
        if (d < best_d) {
            best_d = d;
            best = c;
        }
    }
    return best;
}

// ---------------------------------------------------------------------------
// Scenario
// ---------------------------------------------------------------------------

struct Expectations {
    std::optional<Label> tcsc;
    std::optional<Label> statcom;
    std::optional<Label> conservation;

    bool operator==(const Expectations&) const = default;
};

struct ScenarioConfig {
    std::string name = "scenario";
    double dt = 1e-3;
    double duration = 25.0;
    double frequency = 60.0;
    std::optional<double> window_start;  // default: 1 s after the last disturbance ends
    std::optional<double> window_end;    // default: end of run
    std::string mode_branch = "9-10";
    int mode_bus = 10;

    std::string dataset = kundur_dataset_name;  // or "inline"
    double damping = kundur_default_damping;   // dataset generators only
    Network network;

    std::optional<TcscSpec> tcsc;
    std::optional<StatcomSpec> statcom;
    std::vector<Disturbance> disturbances;
    Expectations expect;

    bool operator==(const ScenarioConfig&) const = default;

    SimulationSetup setup() const {
        SimulationSetup s;
        s.network = network;
        s.tcsc = tcsc;
        s.statcom = statcom;
        s.disturbances = disturbances;
        s.dt = dt;
        s.duration = duration;
        s.frequency = frequency;
        return s;
    }

    Window analysis_window() const {
        double last = 0.0;
        for (const auto& d : disturbances) last = std::max(last, d.duration > 0.0 ? d.t_end() : d.t_start);
        return {window_start.value_or(last + 1.0), window_end.value_or(duration)};
    }
};

namespace detail {

const std::vector<std::string> scenario_keys = {"name",       "dt",         "duration",    "frequency",
                                                "window_start", "window_end", "mode_branch", "mode_bus"};
const std::vector<std::string> network_keys = {"dataset", "lossless", "damping", "base_mva"};
const std::vector<std::string> bus_keys = {"kind", "base_kv", "v", "angle", "p_gen", "q_gen", "shunt_b"};
const std::vector<std::string> branch_keys = {"from", "to", "r", "x", "b", "kind", "b0", "kc"};
const std::vector<std::string> generator_keys = {"bus", "h", "d", "xd_prime"};
const std::vector<std::string> load_keys = {"bus", "p", "q"};
const std::vector<std::string> tcsc_keys = {"branch", "b0", "kc0", "dkc_limit", "strategy", "kp",
                                            "tc",     "tw", "td1", "td2",      "feedback_branch", "feedback_bus"};
const std::vector<std::string> statcom_keys = {"name", "bus", "q_gen", "control", "kp_q",
                                               "ki_q", "kdroop", "pll", "t_pll"};
const std::vector<std::string> disturbance_keys = {"kind", "target", "magnitude", "t_start", "duration"};
const std::vector<std::string> expect_keys = {"tcsc", "statcom", "conservation"};
const std::vector<std::string> section_names = {"scenario", "network",   "tcsc",   "statcom", "expect",
                                                "bus.",     "branch.",   "generator.", "load.", "disturbance."};

/// Typed access to one section; records every violation instead of stopping.
class SectionReader {
public:
    SectionReader(const IniSection& sec, const std::vector<std::string>& allowed, std::vector<std::string>& out)
        : sec_(sec), out_(out) {
        for (const auto& e : sec.entries) {
            if (std::find(allowed.begin(), allowed.end(), e.key) == allowed.end())
                out_.push_back(line_prefix(e.line) + "unknown key '" + e.key + "' in [" + sec.name +
                               "]; did you mean '" + nearest(e.key, allowed) + "'?");
        }
    }

    bool has(std::string_view key) const { return sec_.find(key) != nullptr; }

    double number(std::string_view key, double fallback) const {
        const IniEntry* e = sec_.find(key);
        if (!e) return fallback;
        const char* begin = e->value.c_str();
        char* end = nullptr;
        errno = 0;
        const double v = std::strtod(begin, &end);
        if (e->value.empty() || *end != '\0' || errno == ERANGE || !std::isfinite(v)) {
            out_.push_back(line_prefix(e->line) + "[" + sec_.name + "] " + e->key + ": expected a number, got '" +
                           e->value + "'");
            return fallback;
        }
        return v;
    }

    std::optional<double> optional_number(std::string_view key) const {
        if (!has(key)) return std::nullopt;
        return number(key, 0.0);
    }

    int integer(std::string_view key, int fallback) const {
        const IniEntry* e = sec_.find(key);
        if (!e) return fallback;
        const char* begin = e->value.c_str();
        char* end = nullptr;
        errno = 0;
        const long v = std::strtol(begin, &end, 10);
        if (e->value.empty() || *end != '\0' || errno == ERANGE) {
            out_.push_back(line_prefix(e->line) + "[" + sec_.name + "] " + e->key + ": expected an integer, got '" +
                           e->value + "'");
            return fallback;
        }
        return static_cast<int>(v);
    }

    std::string text(std::string_view key, std::string fallback) const {
        const IniEntry* e = sec_.find(key);
        return e ? e->value : fallback;
    }

    bool boolean(std::string_view key, bool fallback) const {
        const IniEntry* e = sec_.find(key);
        if (!e) return fallback;
        if (e->value == "true" || e->value == "1" || e->value == "yes") return true;
        if (e->value == "false" || e->value == "0" || e->value == "no") return false;
        out_.push_back(line_prefix(e->line) + "[" + sec_.name + "] " + e->key + ": expected true or false, got '" +
                       e->value + "'");
        return fallback;
    }

    template <class E>
    E choice(std::string_view key, E fallback, const std::vector<std::pair<std::string, E>>& options) const {
        const IniEntry* e = sec_.find(key);
        if (!e) return fallback;
        std::vector<std::string> names;
        for (const auto& [n, v] : options) {
            if (n == e->value) return v;
            names.push_back(n);
        }
        out_.push_back(line_prefix(e->line) + "[" + sec_.name + "] " + e->key + ": unknown value '" + e->value +
                       "'; did you mean '" + nearest(e->value, names) + "'?");
        return fallback;
    }

    void require(std::string_view key) const {
        if (!has(key))
            out_.push_back(line_prefix(sec_.line) + "[" + sec_.name + "] is missing required key '" +
                           std::string(key) + "'");
    }

    void check(bool ok, const std::string& what) const {
        if (!ok) out_.push_back(line_prefix(sec_.line) + "[" + sec_.name + "] " + what);
    }

private:
    const IniSection& sec_;
    std::vector<std::string>& out_;
};

inline const std::vector<std::pair<std::string, Label>> label_options = {
    {"source", Label::source}, {"sink", Label::sink}, {"neutral", Label::neutral}};

inline std::string suffix(const std::string& section, std::string_view prefix) {
    return section.substr(prefix.size());
}

inline bool starts_with(const std::string& s, std::string_view p) { return s.rfind(p, 0) == 0; }

inline void read_inline_network(const IniDocument& doc, Network& net, std::vector<std::string>& out) {
    for (const auto& sec : doc.sections) {
        if (starts_with(sec.name, "bus.")) {
            SectionReader r(sec, bus_keys, out);
            Bus b;
            const std::string id = suffix(sec.name, "bus.");
            char* end = nullptr;
            b.id = static_cast<int>(std::strtol(id.c_str(), &end, 10));
            if (id.empty() || *end != '\0') out.push_back(line_prefix(sec.line) + "bus id '" + id + "' is not an integer");
            b.kind = r.choice<BusKind>("kind", BusKind::pq,
                                       {{"slack", BusKind::slack}, {"pv", BusKind::pv}, {"pq", BusKind::pq}});
            b.base_kv = r.number("base_kv", 230.0);
            b.v_set = r.number("v", 1.0);
            b.angle_deg = r.number("angle", 0.0);
            b.p_gen = r.number("p_gen", 0.0);
            b.q_gen = r.number("q_gen", 0.0);
            b.shunt_b = r.number("shunt_b", 0.0);
            r.check(b.v_set > 0.0, "v must be positive");
            net.buses.push_back(b);
        } else if (starts_with(sec.name, "branch.")) {
            SectionReader r(sec, branch_keys, out);
            Branch br;
            br.name = suffix(sec.name, "branch.");
            r.require("from");
            r.require("to");
            br.from = r.integer("from", 0);
            br.to = r.integer("to", 0);
            br.r = r.number("r", 0.0);
            br.x = r.number("x", 0.0);
            br.b_charging = r.number("b", 0.0);
            br.kind = r.choice<BranchKind>("kind", BranchKind::line,
                                           {{"line", BranchKind::line},
                                            {"transformer", BranchKind::transformer},
                                            {"tcsc", BranchKind::tcsc}});
            br.b0 = r.number("b0", 0.0);
            br.kc = r.number("kc", 0.0);
            net.branches.push_back(br);
        } else if (starts_with(sec.name, "generator.")) {
            SectionReader r(sec, generator_keys, out);
            GeneratorData g;
            g.name = suffix(sec.name, "generator.");
            r.require("bus");
            g.bus = r.integer("bus", 0);
            g.h = r.number("h", 0.0);
            g.d = r.number("d", 0.0);
            g.xd_prime = r.number("xd_prime", 0.0);
            r.check(g.h > 0.0, "h must be positive");
            r.check(g.xd_prime > 0.0, "xd_prime must be positive");
            net.generators.push_back(g);
        } else if (starts_with(sec.name, "load.")) {
            SectionReader r(sec, load_keys, out);
            LoadData l;
            l.name = suffix(sec.name, "load.");
            r.require("bus");
            l.bus = r.integer("bus", 0);
            l.p = r.number("p", 0.0);
            l.q = r.number("q", 0.0);
            net.loads.push_back(l);
        }
    }
}

/// Cross-references between devices, disturbances and the network.
inline void check_references(const ScenarioConfig& c, std::vector<std::string>& out) {
    const Network& net = c.network;
    try {
        validate_topology(net);
    } catch (const Error& e) {
        out.push_back(std::string("network: ") + e.what());
    }
    for (const auto& g : net.generators)
        if (!net.find_bus(g.bus)) out.push_back("generator '" + g.name + "' sits on unknown bus " + std::to_string(g.bus));
    for (const auto& l : net.loads)
        if (!net.find_bus(l.bus)) out.push_back("load '" + l.name + "' sits on unknown bus " + std::to_string(l.bus));

    auto branch_names = [&] {
        std::vector<std::string> v;
        for (const auto& b : net.branches) v.push_back(b.name);
        return v;
    };
    auto check_branch_end = [&](const std::string& what, const std::string& branch, int bus) {
        const auto bi = net.find_branch(branch);
        if (!bi) {
            out.push_back(what + ": unknown branch '" + branch + "'; did you mean '" + nearest(branch, branch_names()) +
                          "'?");
            return;
        }
        const Branch& br = net.branches[*bi];
        if (bus != br.from && bus != br.to)
            out.push_back(what + ": bus " + std::to_string(bus) + " is not an end of branch '" + branch + "'");
    };

    check_branch_end("[scenario] mode_branch", c.mode_branch, c.mode_bus);
    if (c.tcsc) {
        const TcscSpec& t = *c.tcsc;
        if (!net.find_branch(t.branch))
            out.push_back("[tcsc] unknown branch '" + t.branch + "'; did you mean '" + nearest(t.branch, branch_names()) +
                          "'?");
        if (t.strategy == TcscStrategy::damping_controller)
            check_branch_end("[tcsc] feedback", t.feedback_branch, t.feedback_bus);
    }
    if (c.statcom) {
        const auto bi = net.find_bus(c.statcom->bus);
        if (!bi)
            out.push_back("[statcom] unknown bus " + std::to_string(c.statcom->bus));
        else if (net.buses[*bi].kind != BusKind::pq)
            out.push_back("[statcom] bus " + std::to_string(c.statcom->bus) + " is not a PQ bus");
    }
    for (const auto& d : c.disturbances) {
        const std::string what = "disturbance on '" + d.target + "'";
        switch (d.kind) {
            case DisturbanceKind::pm_pulse: {
                const bool ok = std::any_of(net.generators.begin(), net.generators.end(),
                                            [&](const GeneratorData& g) { return g.name == d.target; });
                if (!ok) out.push_back(what + ": pm_pulse needs a generator name");
                break;
            }
            case DisturbanceKind::load_step: {
                const bool ok = std::any_of(net.loads.begin(), net.loads.end(),
                                            [&](const LoadData& l) { return l.name == d.target; });
                if (!ok) out.push_back(what + ": load_step needs a load name");
                break;
            }
            case DisturbanceKind::qref_pulse:
                if (!c.statcom || c.statcom->name != d.target)
                    out.push_back(what + ": qref_pulse needs the STATCOM name");
                break;
        }
    }
    if (c.expect.tcsc && !c.tcsc) out.push_back("[expect] tcsc given but the scenario has no [tcsc]");
    if (c.expect.statcom && !c.statcom) out.push_back("[expect] statcom given but the scenario has no [statcom]");
}

}  // namespace detail

/// Builds a config from an already split document; collects every violation.
inline ScenarioConfig config_from_ini(const IniDocument& doc, std::vector<std::string>& out) {
    using namespace detail;
    ScenarioConfig c;

    for (const auto& sec : doc.sections) {
        const bool known = std::any_of(section_names.begin(), section_names.end(), [&](const std::string& n) {
            return n.back() == '.' ? starts_with(sec.name, n) && sec.name.size() > n.size() : sec.name == n;
        });
        if (!known)
            out.push_back(line_prefix(sec.line) + "unknown section [" + sec.name + "]; did you mean [" +
                          nearest(sec.name, section_names) + "]?");
    }
    for (const char* req : {"scenario", "network"})
        if (!doc.find(req)) out.push_back(std::string("missing required section [") + req + "]");

    if (const IniSection* sec = doc.find("scenario")) {
        SectionReader r(*sec, scenario_keys, out);
        c.name = r.text("name", c.name);
        c.dt = r.number("dt", c.dt);
        c.duration = r.number("duration", c.duration);
        c.frequency = r.number("frequency", c.frequency);
        c.window_start = r.optional_number("window_start");
        c.window_end = r.optional_number("window_end");
        c.mode_branch = r.text("mode_branch", c.mode_branch);
        c.mode_bus = r.integer("mode_bus", c.mode_bus);
        r.check(c.dt > 0.0, "dt must be positive");
        r.check(c.duration > 0.0, "duration must be positive");
        r.check(c.frequency > 0.0, "frequency must be positive");
        r.check(c.duration / c.dt <= 1e7, "dt and duration give more than 1e7 steps");
        if (c.window_start && c.window_end) r.check(*c.window_end > *c.window_start, "window_end must follow window_start");
    }

    bool have_network = false;
    if (const IniSection* sec = doc.find("network")) {
        SectionReader r(*sec, network_keys, out);
        const bool has_inline = std::any_of(doc.sections.begin(), doc.sections.end(),
                                            [](const IniSection& s) { return starts_with(s.name, "bus."); });
        c.dataset = r.text("dataset", has_inline ? "inline" : "");
        c.damping = r.number("damping", c.damping);
        const bool lossless = r.boolean("lossless", true);
        if (c.dataset == kundur_dataset_name) {
            if (has_inline) out.push_back(line_prefix(sec->line) + "[network] dataset and inline [bus.*] sections are exclusive");
            r.check(!r.has("base_mva"), "base_mva is fixed by the dataset");
            c.network = kundur_two_area(c.damping);
            have_network = true;
        } else if (c.dataset == "inline") {
            r.check(!r.has("damping"), "damping applies to a named dataset only; set d per generator");
            c.damping = kundur_default_damping;
            c.network.base_mva = r.number("base_mva", 100.0);
            read_inline_network(doc, c.network, out);
            r.check(!c.network.buses.empty(), "inline network has no [bus.<id>] sections");
            have_network = !c.network.buses.empty();
        } else if (c.dataset.empty()) {
            out.push_back(line_prefix(sec->line) + "[network] needs dataset = " + kundur_dataset_name +
                          " or inline [bus.<id>] / [branch.<name>] sections");
        } else {
            out.push_back(line_prefix(sec->line) + "[network] unknown dataset '" + c.dataset + "'; did you mean '" +
                          nearest(c.dataset, {kundur_dataset_name, "inline"}) + "'?");
        }
        c.network.lossless = lossless;
    }

    if (const IniSection* sec = doc.find("tcsc")) {
        SectionReader r(*sec, tcsc_keys, out);
        TcscSpec t;
        r.require("branch");
        t.branch = r.text("branch", "");
        t.b0 = r.number("b0", t.b0);
        t.kc0 = r.number("kc0", t.kc0);
        t.dkc_limit = r.number("dkc_limit", t.dkc_limit);
        t.strategy = r.choice<TcscStrategy>("strategy", TcscStrategy::fixed,
                                            {{"fixed", TcscStrategy::fixed},
                                             {"algebraic", TcscStrategy::algebraic},
                                             {"lag", TcscStrategy::lag},
                                             {"damping_controller", TcscStrategy::damping_controller}});
        t.kp = r.number("kp", t.kp);
        t.tc = r.number("tc", t.tc);
        t.tw = r.number("tw", t.tw);
        t.td1 = r.number("td1", t.td1);
        t.td2 = r.number("td2", t.td2);
        if (t.strategy == TcscStrategy::damping_controller) {
            t.feedback_branch = r.text("feedback_branch", "9-10");
            t.feedback_bus = r.integer("feedback_bus", 10);
        } else {
            r.check(!r.has("feedback_branch") && !r.has("feedback_bus"),
                    "feedback_branch/feedback_bus apply to the damping_controller strategy only");
        }
        r.check(t.kc0 + t.dkc_limit < 1.0, "kc0 + dkc_limit must stay below 1");
        r.check(t.dkc_limit >= 0.0, "dkc_limit must be non-negative");
        r.check(t.tc > 0.0 && t.tw > 0.0 && t.td1 > 0.0 && t.td2 > 0.0, "time constants must be positive");
        r.check(t.strategy != TcscStrategy::fixed || t.kp == 0.0, "kp must be 0 for the fixed strategy");
        c.tcsc = t;
    }

    if (const IniSection* sec = doc.find("statcom")) {
        SectionReader r(*sec, statcom_keys, out);
        StatcomSpec s;
        r.require("bus");
        s.name = r.text("name", s.name);
        s.bus = r.integer("bus", 0);
        s.q_gen = r.number("q_gen", 0.0);
        s.control = r.choice<StatcomControl>(
            "control", StatcomControl::constant_current,
            {{"constant_current", StatcomControl::constant_current}, {"pi_droop", StatcomControl::pi_droop}});
        s.kp_q = r.number("kp_q", 0.0);
        s.ki_q = r.number("ki_q", 0.0);
        s.kdroop = r.number("kdroop", 0.0);
        s.pll = r.choice<PllMode>("pll", PllMode::instantaneous,
                                  {{"instantaneous", PllMode::instantaneous}, {"filtered", PllMode::filtered}});
        s.t_pll = r.number("t_pll", s.t_pll);
        r.check(s.t_pll > 0.0, "t_pll must be positive");
        r.check(s.ki_q >= 0.0, "ki_q must be non-negative");
        if (s.control == StatcomControl::constant_current)
            r.check(!r.has("kp_q") && !r.has("ki_q") && !r.has("kdroop"),
                    "kp_q/ki_q/kdroop apply to the pi_droop control only");
        c.statcom = s;
    }

    for (const auto& sec : doc.sections) {
        if (!starts_with(sec.name, "disturbance.")) continue;
        SectionReader r(sec, disturbance_keys, out);
        Disturbance d;
        r.require("kind");
        r.require("target");
        d.kind = r.choice<DisturbanceKind>("kind", DisturbanceKind::pm_pulse,
                                           {{"pm_pulse", DisturbanceKind::pm_pulse},
                                            {"load_step", DisturbanceKind::load_step},
                                            {"qref_pulse", DisturbanceKind::qref_pulse}});
        d.target = r.text("target", "");
        d.magnitude = r.number("magnitude", 0.0);
        d.t_start = r.number("t_start", d.t_start);
        d.duration = r.number("duration", d.duration);
        r.check(d.t_start > 0.0, "t_start must be positive");
        r.check(d.duration >= 0.0, "duration must be non-negative");
        c.disturbances.push_back(d);
    }

    if (const IniSection* sec = doc.find("expect")) {
        SectionReader r(*sec, expect_keys, out);
        if (r.has("tcsc")) c.expect.tcsc = r.choice("tcsc", Label::neutral, label_options);
        if (r.has("statcom")) c.expect.statcom = r.choice("statcom", Label::neutral, label_options);
        if (r.has("conservation")) c.expect.conservation = r.choice("conservation", Label::neutral, label_options);
    }

    if (have_network) check_references(c, out);
    return c;
}

/// Parses scenario text; throws ConfigError listing every violation.
inline ScenarioConfig parse_config(const std::string& text, const std::vector<std::string>& overrides = {}) {
    std::vector<std::string> violations;
    IniDocument doc = parse_ini(text, violations);
    for (const auto& o : overrides) {
        const auto eq = o.find('=');
        const std::string lhs = eq == std::string::npos ? o : o.substr(0, eq);
        const auto dot = lhs.rfind('.');
        if (eq == std::string::npos || dot == std::string::npos || dot == 0) {
            violations.push_back("override '" + o + "': expected section.key=value");
            continue;
        }
        doc.set(detail::trim(lhs.substr(0, dot)), detail::trim(lhs.substr(dot + 1)), detail::trim(o.substr(eq + 1)));
    }
    ScenarioConfig c = config_from_ini(doc, violations);
    if (!violations.empty()) throw ConfigError(violations);
    return c;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

namespace detail {

inline std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void kv(std::ostringstream& o, const char* key, const std::string& value) { o << key << " = " << value << '\n'; }
inline void kv(std::ostringstream& o, const char* key, double value) { kv(o, key, num(value)); }
inline void kv(std::ostringstream& o, const char* key, int value) { kv(o, key, std::to_string(value)); }

inline const char* bus_kind_name(BusKind k) {
    switch (k) {
        case BusKind::slack: return "slack";
        case BusKind::pv: return "pv";
        case BusKind::pq: return "pq";
    }
    return "pq";
}

}  // namespace detail

/// Inline network sections, usable verbatim inside a scenario file.
inline std::string serialize_network(const Network& net) {
    using detail::kv;
    std::ostringstream o;
    o << "[network]\n";
    kv(o, "dataset", std::string("inline"));
    kv(o, "lossless", std::string(net.lossless ? "true" : "false"));
    kv(o, "base_mva", net.base_mva);
    for (const auto& b : net.buses) {
        o << "\n[bus." << b.id << "]\n";
        kv(o, "kind", std::string(detail::bus_kind_name(b.kind)));
        kv(o, "base_kv", b.base_kv);
        kv(o, "v", b.v_set);
        kv(o, "angle", b.angle_deg);
        kv(o, "p_gen", b.p_gen);
        kv(o, "q_gen", b.q_gen);
        kv(o, "shunt_b", b.shunt_b);
    }
    for (const auto& br : net.branches) {
        o << "\n[branch." << br.name << "]\n";
        kv(o, "from", br.from);
        kv(o, "to", br.to);
        kv(o, "r", br.r);
        kv(o, "x", br.x);
        kv(o, "b", br.b_charging);
        kv(o, "kind", std::string(to_string(br.kind)));
        if (br.kind == BranchKind::tcsc) {
            kv(o, "b0", br.b0);
            kv(o, "kc", br.kc);
        }
    }
    for (const auto& g : net.generators) {
        o << "\n[generator." << g.name << "]\n";
        kv(o, "bus", g.bus);
        kv(o, "h", g.h);
        kv(o, "d", g.d);
        kv(o, "xd_prime", g.xd_prime);
    }
    for (const auto& l : net.loads) {
        o << "\n[load." << l.name << "]\n";
        kv(o, "bus", l.bus);
        kv(o, "p", l.p);
        kv(o, "q", l.q);
    }
    return o.str();
}

inline std::string serialize_config(const ScenarioConfig& c) {
    using detail::kv;
    std::ostringstream o;
    o << "[scenario]\n";
    kv(o, "name", c.name);
    kv(o, "dt", c.dt);
    kv(o, "duration", c.duration);
    kv(o, "frequency", c.frequency);
    if (c.window_start) kv(o, "window_start", *c.window_start);
    if (c.window_end) kv(o, "window_end", *c.window_end);
    kv(o, "mode_branch", c.mode_branch);
    kv(o, "mode_bus", c.mode_bus);
    o << '\n';

    if (c.dataset == "inline") {
        o << serialize_network(c.network);
    } else {
        o << "[network]\n";
        kv(o, "dataset", c.dataset);
        kv(o, "lossless", std::string(c.network.lossless ? "true" : "false"));
        kv(o, "damping", c.damping);
    }

    if (c.tcsc) {
        const TcscSpec& t = *c.tcsc;
        o << "\n[tcsc]\n";
        kv(o, "branch", t.branch);
        kv(o, "b0", t.b0);
        kv(o, "kc0", t.kc0);
        kv(o, "dkc_limit", t.dkc_limit);
        kv(o, "strategy", std::string(to_string(t.strategy)));
        kv(o, "kp", t.kp);
        kv(o, "tc", t.tc);
        kv(o, "tw", t.tw);
        kv(o, "td1", t.td1);
        kv(o, "td2", t.td2);
        if (t.strategy == TcscStrategy::damping_controller) {
            kv(o, "feedback_branch", t.feedback_branch);
            kv(o, "feedback_bus", t.feedback_bus);
        }
    }
    if (c.statcom) {
        const StatcomSpec& s = *c.statcom;
        o << "\n[statcom]\n";
        kv(o, "name", s.name);
        kv(o, "bus", s.bus);
        kv(o, "q_gen", s.q_gen);
        kv(o, "control", std::string(to_string(s.control)));
        if (s.control == StatcomControl::pi_droop) {
            kv(o, "kp_q", s.kp_q);
            kv(o, "ki_q", s.ki_q);
            kv(o, "kdroop", s.kdroop);
        }
        kv(o, "pll", std::string(to_string(s.pll)));
        kv(o, "t_pll", s.t_pll);
    }
    for (std::size_t i = 0; i < c.disturbances.size(); ++i) {
        const Disturbance& d = c.disturbances[i];
        o << "\n[disturbance." << i + 1 << "]\n";
        kv(o, "kind", std::string(to_string(d.kind)));
        kv(o, "target", d.target);
        kv(o, "magnitude", d.magnitude);
        kv(o, "t_start", d.t_start);
        kv(o, "duration", d.duration);
    }
    if (c.expect.tcsc || c.expect.statcom || c.expect.conservation) {
        o << "\n[expect]\n";
        if (c.expect.tcsc) kv(o, "tcsc", std::string(to_string(*c.expect.tcsc)));
        if (c.expect.statcom) kv(o, "statcom", std::string(to_string(*c.expect.statcom)));
        if (c.expect.conservation) kv(o, "conservation", std::string(to_string(*c.expect.conservation)));
    }
    return o.str();
}

// ---------------------------------------------------------------------------
// Presets
// ---------------------------------------------------------------------------

namespace detail {

inline const char* const base_disturbance = R"(
[disturbance.1]
kind = pm_pulse
target = G1
magnitude = 0.05
t_start = 1.0
duration = 0.1
)";

inline std::string case_a(const std::string& name, const std::string& kp, const std::string& label) {
    return "[scenario]\nname = " + name +
           "\n\n[network]\ndataset = kundur-2area\nlossless = true\n\n"
           "[tcsc]\nbranch = 8-9#1\nkc0 = 0.3\nstrategy = damping_controller\nkp = " + kp +
           "\ntw = 10\ntd1 = 0.4867\ntd2 = 0.0543\nfeedback_branch = 9-10\nfeedback_bus = 10\n" + base_disturbance +
           "\n[expect]\ntcsc = " + label + "\nconservation = neutral\n";
}

inline std::string case_b(const std::string& name, const std::string& control_block, const std::string& label) {
    std::string s = "[scenario]\nname = " + name +
                    "\n\n[network]\ndataset = kundur-2area\nlossless = true\n\n"
                    "[statcom]\nbus = 7\nq_gen = 1.0\n" + control_block + base_disturbance +
                    "\n[expect]\n";
    if (!label.empty()) s += "statcom = " + label + "\n";
    return s + "conservation = neutral\n";
}

inline std::string droop_block(const std::string& kdroop) {
    return "control = pi_droop\nkp_q = 2.0\nki_q = 10.0\nkdroop = " + kdroop + "\n";
}

}  // namespace detail

/// Built-in scenarios. "B-droop(<x>)" selects the PI + droop STATCOM with
/// Kdroop = x and no expected label.
inline std::vector<std::string> preset_names() {
    return {"A-i", "A-ii", "A-iii", "B-constI", "B-droop-sink", "B-droop-source"};
}

inline std::optional<std::string> preset_text(const std::string& name) {
    using namespace detail;
    if (name == "A-i") return case_a(name, "0", "neutral");
    if (name == "A-ii") return case_a(name, "0.0527", "sink");
    if (name == "A-iii") return case_a(name, "-0.0527", "source");
    if (name == "B-constI") return case_b(name, "control = constant_current\n", "neutral");
    if (name == "B-droop-sink") return case_b(name, droop_block("-1"), "sink");
    if (name == "B-droop-source") return case_b(name, droop_block("3"), "source");
    if (starts_with(name, "B-droop(") && name.back() == ')') {
        const std::string arg = name.substr(8, name.size() - 9);
        char* end = nullptr;
        const double v = std::strtod(arg.c_str(), &end);
        if (arg.empty() || *end != '\0' || !std::isfinite(v)) return std::nullopt;
        return case_b(name, droop_block(detail::num(v)), "");
    }
    return std::nullopt;
}

inline ScenarioConfig preset(const std::string& name, const std::vector<std::string>& overrides = {}) {
    const auto text = preset_text(name);
    if (!text) {
        auto names = preset_names();
        names.push_back("B-droop(<x>)");
        throw LookupError("unknown preset '" + name + "'; did you mean '" + nearest(name, names) + "'?");
    }
    return parse_config(*text, overrides);
}

}  // namespace defsim
