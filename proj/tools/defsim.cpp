// defsim: run scenarios, sweep the STATCOM droop gain, evaluate the path study
// and export the network.
//
// Exit status: 0 all checks passed, 1 a check failed, 2 usage or configuration
// error, 3 simulation or analysis fault.

#include "defsim/commands.hpp"
#include "defsim/config.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace {

enum Exit { ok = 0, check_failed = 1, usage = 2, fault = 3 };

struct Common {
    std::string out_dir;
    double dt = 0.0;
    double duration = 0.0;
    std::vector<std::string> overrides;

    std::vector<std::string> all_overrides() const {
        std::vector<std::string> o;
        if (dt > 0.0) o.push_back("scenario.dt=" + std::to_string(dt));
        if (duration > 0.0) o.push_back("scenario.duration=" + std::to_string(duration));
        o.insert(o.end(), overrides.begin(), overrides.end());
        return o;
    }
};

void add_common(CLI::App* app, Common& c, bool with_scenario_flags) {
    app->add_option("--out-dir", c.out_dir, "Directory for CSV and summary files");
    if (!with_scenario_flags) return;
    app->add_option("--dt", c.dt, "Integration step, s")->check(CLI::PositiveNumber);
    app->add_option("--duration", c.duration, "Run length, s")->check(CLI::PositiveNumber);
    app->add_option("--override", c.overrides, "section.key=value, repeatable")->take_all();
}

void write(const Common& c, const std::string& file, const std::string& text) {
    const auto path = std::filesystem::path(c.out_dir) / file;
    defsim::detail::write_file(path, text);
    std::cout << "file=" << path.string() << '\n';
}

int path_study_verb(const Common& c, const defsim::PathStudyOptions& opt) {
    const auto rep = defsim::path_study(opt);
    std::cout << rep.to_csv() << rep.to_text();
    if (!c.out_dir.empty()) write(c, "path_study.csv", rep.to_csv());
    return rep.passed() ? ok : check_failed;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Transient simulation and dissipating energy flow analysis"};
    app.require_subcommand(1);
    std::string presets;
    for (const auto& p : defsim::preset_names()) presets += " " + p;

    Common run_c;
    std::string target;
    bool no_trajectory = false;
    auto* run = app.add_subcommand("run", "Simulate a preset or scenario file and classify the devices");
    run->add_option("scenario", target, "Preset name (" + presets.substr(1) +
                                            ", B-droop(<x>), path-study) or scenario file")
        ->required();
    run->add_flag("--no-trajectory", no_trajectory, "Skip the trajectory CSV");
    add_common(run, run_c, true);

    Common sweep_c;
    std::string sweep_base = "B-droop-sink";
    std::vector<double> grid = {-2.0, -1.0, 0.0, 0.5, 1.5, 2.0, 3.0, 4.0};
    int refine = 1;
    unsigned threads = 0;
    auto* sweep = app.add_subcommand("sweep-droop", "Slope of the STATCOM path-dependent energy across droop gains");
    sweep->add_option("--scenario", sweep_base, "pi_droop scenario used as the template")->capture_default_str();
    sweep->add_option("--grid", grid, "Strictly increasing droop gains, pu")->delimiter(',')->capture_default_str();
    sweep->add_option("--refine", refine, "Bisection passes over each sign-change bracket")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    sweep->add_option("--threads", threads, "Worker threads (0: one per core)");
    add_common(sweep, sweep_c, true);

    Common path_c;
    defsim::PathStudyOptions path_opt;
    auto* path = app.add_subcommand("path-study", "Evaluate the lag-controller energy along two paths");
    path->add_option("--alphas", path_opt.alphas, "Path rates, 1/s")->delimiter(',')->capture_default_str();
    path->add_option("--tc", path_opt.tc, "Lag time constant, s")->check(CLI::PositiveNumber)->capture_default_str();
    path->add_option("--prefactor", path_opt.prefactor, "b0 Kp / Tc")->capture_default_str();
    add_common(path, path_c, false);

    Common net_c;
    std::string net_target = "A-i";
    auto* net = app.add_subcommand("export-network", "Write the network of a scenario and its power flow");
    net->add_option("scenario", net_target, "Preset name or scenario file")->capture_default_str();
    add_common(net, net_c, true);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) {
            if (target == "path-study") return path_study_verb(run_c, path_opt);
            const auto cfg = defsim::load_scenario(target, run_c.all_overrides());
            const auto summary =
                defsim::run_scenario(cfg, {run_c.out_dir, !no_trajectory});
            std::cout << summary.to_text();
            return summary.exit_code();
        }
        if (*sweep) {
            const auto base = defsim::load_scenario(sweep_base, sweep_c.all_overrides());
            auto result = defsim::droop_sweep(grid, base, threads);
            for (int i = 0; i < refine && !result.brackets.empty(); ++i)
                result = defsim::refine_brackets(result, base, threads);
            std::cout << result.to_csv() << result.to_text();
            if (!sweep_c.out_dir.empty()) write(sweep_c, "droop_sweep.csv", result.to_csv());
            return result.monotone && result.brackets.size() == 1 ? ok : check_failed;
        }
        if (*path) return path_study_verb(path_c, path_opt);
        if (*net) {
            const auto cfg = defsim::load_scenario(net_target, net_c.all_overrides());
            const auto pf = defsim::solve_power_flow(cfg.network);
            std::ostringstream csv;
            csv << "# power flow: iterations=" << pf.iterations << " mismatch=" << pf.mismatch << '\n';
            csv << "bus,vmag,vang_deg\n";
            char buf[96];
            for (std::size_t i = 0; i < cfg.network.buses.size(); ++i) {
                std::snprintf(buf, sizeof buf, "%d,%.12g,%.12g\n", cfg.network.buses[i].id, std::abs(pf.v[i]),
                              std::arg(pf.v[i]) * 180.0 / defsim::pi);
                csv << buf;
            }
            const std::string ini = defsim::serialize_network(cfg.network);
            if (net_c.out_dir.empty()) {
                std::cout << ini << '\n' << csv.str();
            } else {
                write(net_c, "network.ini", ini);
                write(net_c, "powerflow.csv", csv.str());
            }
            return ok;
        }
    } catch (const defsim::ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return usage;
    } catch (const defsim::LookupError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return usage;
    } catch (const defsim::InputError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return usage;
    } catch (const std::exception& e) {
        std::cerr << "fault: " << e.what() << '\n';
        return fault;
    }
    return usage;
}
