#pragma once

// Scenario orchestration behind the command-line verbs: simulate, analyse,
// write CSV files and a key=value summary, sweep the STATCOM droop gain and
// run the path-dependence study.

#include "defsim/config.hpp"
#include "defsim/def_engine.hpp"
#include "defsim/path_study.hpp"
#include "defsim/simulator.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace defsim {

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

namespace detail {

inline void append_number(std::string& out, double v) {
    char buf[32];
    const int n = std::snprintf(buf, sizeof buf, "%.12g", v);
    out.append(buf, static_cast<std::size_t>(n));
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot open '" + path.string() + "' for writing");
    f << text;
    if (!f) throw InputError("failed writing '" + path.string() + "'");
}

}  // namespace detail

/// One row per sample. Column order: t; Vre, Vim per bus in network order;
/// Ire, Iim per branch at its from end then its to end, in network order;
/// recorded device states.
inline std::string trajectory_csv(const Trajectory& tr) {
    const Network& net = tr.network;
    std::string out = "# columns: t; bus<k>.Vre/Vim for each bus; branch<name>@<bus>.Ire/Iim for the from end then "
                      "the to end of each branch (current entering the branch); dev.<name>.<state>\n";
    out += "t";
    for (const auto& b : net.buses) {
        const std::string p = "bus" + std::to_string(b.id);
        out += "," + p + ".Vre," + p + ".Vim";
    }
    for (const auto& br : net.branches) {
        for (int end : {br.from, br.to}) {
            const std::string p = "branch<" + br.name + ">@" + std::to_string(end);
            out += "," + p + ".Ire," + p + ".Iim";
        }
    }
    for (const auto& s : tr.state_names) out += ",dev." + s;
    out += '\n';
    out.reserve(out.size() + tr.size() * (1 + 2 * net.buses.size() + 4 * net.branches.size() + tr.states.size()) * 14);
    for (std::size_t n = 0; n < tr.size(); ++n) {
        detail::append_number(out, tr.t[n]);
        auto cplx = [&](Phasor z) {
            out += ',';
            detail::append_number(out, z.real());
            out += ',';
            detail::append_number(out, z.imag());
        };
        for (const auto& v : tr.bus_v) cplx(v[n]);
        for (std::size_t b = 0; b < net.branches.size(); ++b) {
            cplx(tr.branch_i_from[b][n]);
            cplx(tr.branch_i_to[b][n]);
        }
        for (const auto& s : tr.states) {
            out += ',';
            detail::append_number(out, s[n]);
        }
        out += '\n';
    }
    return out;
}

/// Energy traces side by side: <name>.total, and w0/stored/pathdep when present.
inline std::string energy_csv(const std::vector<EnergyTrace>& traces) {
    if (traces.empty()) throw InputError("energy_csv: no traces");
    std::string out = "# cumulative energy, pu; direction per trace:";
    for (const auto& e : traces) out += " " + e.name + "=" + to_string(e.direction);
    out += "\nt";
    for (const auto& e : traces) {
        out += "," + e.name + ".total";
        if (e.has_channels()) out += "," + e.name + ".w0," + e.name + ".stored," + e.name + ".pathdep";
    }
    out += '\n';
    const auto& t = traces.front().t;
    for (std::size_t n = 0; n < t.size(); ++n) {
        detail::append_number(out, t[n]);
        for (const auto& e : traces) {
            out += ',';
            detail::append_number(out, e.total[n]);
            if (e.has_channels()) {
                for (const auto* ch : {&e.w0, &e.stored, &e.pathdep}) {
                    out += ',';
                    detail::append_number(out, (*ch)[n]);
                }
            }
        }
        out += '\n';
    }
    return out;
}

// ---------------------------------------------------------------------------
// Scenario analysis
// ---------------------------------------------------------------------------

struct Check {
    std::string name;
    bool pass = false;
    std::string detail;
};

struct DeviceVerdict {
    std::string key;  // tcsc, statcom, conservation
    std::string trace;
    SlopeVerdict verdict;
    std::optional<Label> expected;
};

struct RunSummary {
    std::string scenario;
    Window window;
    double period = 0.0;
    std::vector<DeviceVerdict> verdicts;
    std::vector<Check> checks;
    std::vector<std::string> files;
    EventLog events;

    bool passed() const {
        return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
    }

    /// 0 when every check passed, 1 otherwise.
    int exit_code() const { return passed() ? 0 : 1; }

    const DeviceVerdict* verdict(const std::string& key) const {
        for (const auto& v : verdicts)
            if (v.key == key) return &v;
        return nullptr;
    }

    const Check* check(const std::string& name) const {
        for (const auto& c : checks)
            if (c.name == name) return &c;
        return nullptr;
    }

    std::string to_text() const {
        std::ostringstream o;
        char buf[64];
        auto num = [&](double v) {
            std::snprintf(buf, sizeof buf, "%.6g", v);
            return std::string(buf);
        };
        o << "scenario=" << scenario << '\n';
        o << "window=" << num(window.t_start) << ',' << num(window.t_end) << '\n';
        o << "period=" << num(period) << '\n';
        for (const auto& v : verdicts) {
            o << v.key << ".trace=" << v.trace << '\n';
            o << v.key << ".slope=" << num(v.verdict.slope) << '\n';
            o << v.key << ".ci_halfwidth=" << num(v.verdict.ci_halfwidth) << '\n';
            o << v.key << ".threshold=" << num(v.verdict.threshold) << '\n';
            o << v.key << ".cycles=" << v.verdict.cycles << '\n';
            o << v.key << ".label=" << to_string(v.verdict.label) << '\n';
            if (v.expected) o << v.key << ".expected=" << to_string(*v.expected) << '\n';
        }
        for (const auto& c : checks) {
            o << "check." << c.name << '=' << (c.pass ? "pass" : "fail");
            if (!c.detail.empty()) o << " (" << c.detail << ')';
            o << '\n';
        }
        o << "events=" << events.size() << '\n';
        for (const auto& e : events) o << "event=" << num(e.t) << ' ' << e.what << '\n';
        for (const auto& f : files) o << "file=" << f << '\n';
        o << "status=" << (passed() ? "pass" : "fail") << '\n';
        return o.str();
    }
};

struct ScenarioAnalysis {
    RunSummary summary;
    std::vector<EnergyTrace> traces;
};

/// Derives energy traces, slope verdicts and checks from a finished run.
inline ScenarioAnalysis analyze(const ScenarioConfig& cfg, const Trajectory& tr) {
    ScenarioAnalysis a;
    RunSummary& s = a.summary;
    s.scenario = cfg.name;
    s.window = cfg.analysis_window();
    s.window.t_end = std::min(s.window.t_end, tr.t.back());
    s.events = tr.events;
    s.period = dominant_period(tr.t, tr.branch_power(cfg.mode_branch, cfg.mode_bus), s.window);

    char buf[128];
    auto add_device = [&](const std::string& key, const EnergyTrace& e, std::optional<Label> expected) {
        const double err = e.decomposition_error();
        const double tol = decomposition_rel_tol * peak_to_peak(e.total);
        std::snprintf(buf, sizeof buf, "max error %.3g, allowed %.3g", err, tol);
        s.checks.push_back({"decomposition." + key, err <= tol + 1e-12, buf});
        const auto v = slope_estimate(e.t, e.pathdep, s.window, s.period, e.direction);
        s.verdicts.push_back({key, e.name + ".pathdep", v, expected});
        if (expected)
            s.checks.push_back({"label." + key, v.label == *expected,
                                std::string("got ") + to_string(v.label) + ", expected " + to_string(*expected)});
        a.traces.push_back(e);
    };

    if (tr.tcsc) add_device("tcsc", def_tcsc_decompose(tr), cfg.expect.tcsc);
    if (tr.statcom) add_device("statcom", def_statcom_decompose(tr), cfg.expect.statcom);

    for (const auto& d : tr.devices)
        if (d.kind == DeviceKind::generator) a.traces.push_back(def_injection(tr, d.name));
    const EnergyTrace total = def_injection_total(tr);
    const auto tv = slope_estimate(total.t, total.total, s.window, s.period, total.direction);
    s.verdicts.push_back({"conservation", total.name + ".total", tv, cfg.expect.conservation});
    if (cfg.expect.conservation)
        s.checks.push_back({"conservation", tv.label == *cfg.expect.conservation,
                            std::string("got ") + to_string(tv.label) + ", expected " +
                                to_string(*cfg.expect.conservation)});
    a.traces.push_back(total);

    std::size_t limit_events = 0;
    for (const auto& e : tr.events)
        if (e.what.find("clamped") != std::string::npos || e.what.find("tripped") != std::string::npos) ++limit_events;
    s.checks.push_back({"limits_inactive", limit_events == 0, std::to_string(limit_events) + " limit events"});
    return a;
}

struct RunOptions {
    std::string out_dir;  // empty: write nothing
    bool write_trajectory = true;
};

inline RunSummary run_scenario(const ScenarioConfig& cfg, const RunOptions& opt = {}) {
    const Trajectory tr = run(cfg.setup());
    ScenarioAnalysis a = analyze(cfg, tr);
    if (!opt.out_dir.empty()) {
        const std::filesystem::path dir = std::filesystem::path(opt.out_dir) / cfg.name;
        if (opt.write_trajectory) {
            detail::write_file(dir / "trajectory.csv", trajectory_csv(tr));
            a.summary.files.push_back((dir / "trajectory.csv").string());
        }
        detail::write_file(dir / "energy.csv", energy_csv(a.traces));
        a.summary.files.push_back((dir / "energy.csv").string());
        detail::write_file(dir / "scenario.ini", serialize_config(cfg));
        a.summary.files.push_back((dir / "scenario.ini").string());
        a.summary.files.push_back((dir / "summary.txt").string());
        detail::write_file(dir / "summary.txt", a.summary.to_text());
    }
    return a.summary;
}

/// Resolves a preset name or a path to a scenario file.
inline ScenarioConfig load_scenario(const std::string& name_or_path, const std::vector<std::string>& overrides = {}) {
    if (preset_text(name_or_path)) return preset(name_or_path, overrides);
    if (std::filesystem::exists(name_or_path)) {
        std::ifstream f(name_or_path, std::ios::binary);
        std::stringstream ss;
        ss << f.rdbuf();
        return parse_config(ss.str(), overrides);
    }
    return preset(name_or_path, overrides);  // throws with a suggestion
}

// ---------------------------------------------------------------------------
// Parallel helper
// ---------------------------------------------------------------------------

/// Calls fn(i) for i in [0, n) on up to `threads` workers. The first exception
/// thrown by any call is rethrown after all workers finish.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn, unsigned threads = 0) {
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first;
    std::atomic<bool> failed{false};
    std::vector<std::thread> pool;
    std::mutex m;
    for (unsigned w = 0; w < threads; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(m);
                    if (!failed.exchange(true)) first = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first) std::rethrow_exception(first);
}

// ---------------------------------------------------------------------------
// Droop sweep
// ---------------------------------------------------------------------------

struct SweepPoint {
    double kdroop = 0.0;
    SlopeVerdict verdict;
};

struct SweepResult {
    std::vector<SweepPoint> points;                   // sorted by kdroop
    std::vector<std::pair<double, double>> brackets;  // kdroop intervals where the slope changes sign
    bool monotone = false;

    std::string to_csv() const {
        std::string out = "# STATCOM path-dependent energy slope versus droop gain\n";
        out += "kdroop,slope,ci_halfwidth,threshold,label\n";
        char buf[160];
        for (const auto& p : points) {
            std::snprintf(buf, sizeof buf, "%.12g,%.12g,%.12g,%.12g,%s\n", p.kdroop, p.verdict.slope,
                          p.verdict.ci_halfwidth, p.verdict.threshold, to_string(p.verdict.label));
            out += buf;
        }
        return out;
    }

    std::string to_text() const {
        std::ostringstream o;
        char buf[96];
        o << "points=" << points.size() << '\n';
        o << "monotone=" << (monotone ? "true" : "false") << '\n';
        o << "brackets=" << brackets.size() << '\n';
        for (const auto& [lo, hi] : brackets) {
            std::snprintf(buf, sizeof buf, "bracket=%.6g,%.6g\n", lo, hi);
            o << buf;
        }
        if (brackets.empty()) o << "finding=no sign change in grid\n";
        return o.str();
    }
};

namespace detail {

inline void classify_sweep(SweepResult& r) {
    std::sort(r.points.begin(), r.points.end(),
              [](const SweepPoint& a, const SweepPoint& b) { return a.kdroop < b.kdroop; });
    r.brackets.clear();
    bool dec = true, inc = true;
    for (std::size_t i = 1; i < r.points.size(); ++i) {
        const double a = r.points[i - 1].verdict.slope, b = r.points[i].verdict.slope;
        dec = dec && b <= a;
        inc = inc && b >= a;
        if ((a < 0.0) != (b < 0.0)) r.brackets.emplace_back(r.points[i - 1].kdroop, r.points[i].kdroop);
    }
    r.monotone = dec || inc;
}

}  // namespace detail

/// Slope of the STATCOM path-dependent energy for one droop gain.
inline SweepPoint droop_point(const ScenarioConfig& base, double kdroop) {
    if (!base.statcom || base.statcom->control != StatcomControl::pi_droop)
        throw InputError("droop sweep needs a pi_droop STATCOM scenario");
    ScenarioConfig c = base;
    c.statcom->kdroop = kdroop;
    c.expect = {};
    const Trajectory tr = run(c.setup());
    const Window w = [&] {
        Window x = c.analysis_window();
        x.t_end = std::min(x.t_end, tr.t.back());
        return x;
    }();
    const double period = dominant_period(tr.t, tr.branch_power(c.mode_branch, c.mode_bus), w);
    const EnergyTrace e = def_statcom_decompose(tr);
    return {kdroop, slope_estimate(e.t, e.pathdep, w, period, e.direction)};
}

inline SweepResult droop_sweep(const std::vector<double>& grid, const ScenarioConfig& base, unsigned threads = 0) {
    if (grid.size() < 3) throw InputError("droop sweep needs at least 3 grid points");
    if (!std::is_sorted(grid.begin(), grid.end()) || std::adjacent_find(grid.begin(), grid.end()) != grid.end())
        throw InputError("droop sweep grid must be strictly increasing");
    SweepResult r;
    r.points.resize(grid.size());
    parallel_for(grid.size(), [&](std::size_t i) { r.points[i] = droop_point(base, grid[i]); }, threads);
    detail::classify_sweep(r);
    return r;
}

/// Adds the midpoint of every bracket and reclassifies; each bracket halves.
inline SweepResult refine_brackets(SweepResult r, const ScenarioConfig& base, unsigned threads = 0) {
    std::vector<double> mids;
    for (const auto& [lo, hi] : r.brackets) mids.push_back(0.5 * (lo + hi));
    std::vector<SweepPoint> extra(mids.size());
    parallel_for(mids.size(), [&](std::size_t i) { extra[i] = droop_point(base, mids[i]); }, threads);
    r.points.insert(r.points.end(), extra.begin(), extra.end());
    detail::classify_sweep(r);
    return r;
}

// ---------------------------------------------------------------------------
// Path study
// ---------------------------------------------------------------------------

struct PathStudyOptions {
    std::vector<double> alphas = {0.5, 1.0, 2.0};
    double tc = 0.1;
    double prefactor = 1.0;  // b0 Kp / Tc
    int k = 3;
    int n = 5;
};

struct PathStudyReport {
    PathStudyOptions options;
    std::vector<PathResult> lag;
    std::vector<PathResult> algebraic;
    std::vector<Check> checks;

    bool passed() const {
        return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
    }

    std::string to_csv() const {
        char buf[200];
        std::snprintf(buf, sizeof buf, "# kernel,alpha,value_I,value_II,delta; Tc=%.6g prefactor=%.6g k=%d n=%d\n",
                      options.tc, options.prefactor, options.k, options.n);
        std::string out = buf;
        out += "kernel,alpha,value_I,value_II,delta\n";
        auto rows = [&](const char* kernel, const std::vector<PathResult>& rs) {
            for (const auto& r : rs) {
                std::snprintf(buf, sizeof buf, "%s,%.12g,%.15g,%.15g,%.15g\n", kernel, r.alpha, r.value_I, r.value_II,
                              r.delta);
                out += buf;
            }
        };
        rows("lag", lag);
        rows("algebraic", algebraic);
        return out;
    }

    std::string to_text() const {
        std::ostringstream o;
        char buf[160];
        std::snprintf(buf, sizeof buf, "tc=%.6g\nprefactor=%.6g\nk=%d\nn=%d\n", options.tc, options.prefactor, options.k,
                      options.n);
        o << buf;
        for (const auto& c : checks)
            o << "check." << c.name << '=' << (c.pass ? "pass" : "fail") << " (" << c.detail << ")\n";
        o << "status=" << (passed() ? "pass" : "fail") << '\n';
        return o.str();
    }
};

inline PathStudyReport path_study(const PathStudyOptions& opt = {}) {
    PathStudyReport rep;
    rep.options = opt;
    PathSpec tmpl;
    tmpl.k = opt.k;
    tmpl.n = opt.n;
    SecondTermOptions lag_opt;
    lag_opt.kernel = Kernel::lag;
    SecondTermOptions alg_opt;
    alg_opt.kernel = Kernel::algebraic;
    rep.lag = alpha_sweep(opt.alphas, tmpl, opt.tc, opt.prefactor, lag_opt);
    rep.algebraic = alpha_sweep(opt.alphas, tmpl, opt.tc, opt.prefactor, alg_opt);

    char buf[128];
    for (const auto& r : rep.lag) {
        char a[32];
        std::snprintf(a, sizeof a, "%.6g", r.alpha);
        std::snprintf(buf, sizeof buf, "|delta| = %.3g, 100 x tolerance = %.3g", std::abs(r.delta), 100.0 * r.tolerance);
        rep.checks.push_back({std::string("lag_paths_differ.alpha=") + a, std::abs(r.delta) >= 100.0 * r.tolerance, buf});
    }
    for (const auto& r : rep.algebraic) {
        const double rel = std::abs(r.delta) / std::max(std::abs(r.value_I), 1e-300);
        char a[32];
        std::snprintf(a, sizeof a, "%.6g", r.alpha);
        std::snprintf(buf, sizeof buf, "relative difference %.3g", rel);
        rep.checks.push_back({std::string("algebraic_paths_agree.alpha=") + a, rel <= 1e-6, buf});
    }
    return rep;
}

}  // namespace defsim
