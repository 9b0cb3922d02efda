// dpflab command-line front end: figure sweeps, synthesis, simulation, audits.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <limits>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "dpflab/controllers.hpp"
#include "dpflab/io.hpp"
#include "dpflab/plant.hpp"
#include "dpflab/sim.hpp"
#include "dpflab/sls.hpp"
#include "dpflab/stabilizability.hpp"
#include "dpflab/svg.hpp"

namespace fs = std::filesystem;
using dpflab::Matrix;

namespace {

enum Exit { kOk = 0, kInput = 2, kInfeasible = 3, kUnstable = 4 };

// Runs fn(i) for i in [0, count) on up to `jobs` threads. Results go to
// caller-owned slots, so output order is the grid order.
void parallel_for(std::size_t count, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
    jobs = std::max<std::size_t>(1, std::min(jobs, count));
    if (jobs == 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex mu;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < jobs; ++w)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(mu);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

std::vector<double> logspace(double lo, double hi, std::size_t n) {
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i)
        out[i] = n == 1 ? lo : std::pow(10.0, std::log10(lo) + (std::log10(hi) - std::log10(lo)) * i / (n - 1.0));
    return out;
}

std::string fmt(double v) { return dpflab::io::format_double(v); }

fs::path prepare_out_dir(const std::string& dir) {
    const fs::path p = fs::absolute(dir).lexically_normal();
    std::error_code ec;
    fs::create_directories(p, ec);
    if (ec || !fs::is_directory(p)) throw dpflab::InputError("cannot create output directory '" + p.string() + "'");
    return p;
}

fs::path existing_file(const std::string& path, const std::string& what) {
    const fs::path p = fs::absolute(path);
    if (!fs::is_regular_file(p)) throw dpflab::InputError(what + " '" + path + "' does not exist");
    return p;
}

std::ofstream open_out(const fs::path& p) {
    std::ofstream os(p);
    if (!os) throw dpflab::InputError("cannot write '" + p.string() + "'");
    return os;
}

// ---------------------------------------------------------------------------

struct Fig5Args {
    std::vector<double> a{0.5, 1.0, 1.5};
    std::vector<double> sigma_w, sigma_v;
    std::size_t grid_points = 25;
    std::string out = ".";
    std::size_t jobs = 1;
    bool svg = true;
};

int cmd_fig5(const Fig5Args& args) {
    if (args.a.empty()) throw dpflab::InputError("fig5: --a grid is empty");
    if (args.grid_points == 0) throw dpflab::InputError("fig5: --grid-points must be positive");
    const auto sw = args.sigma_w.empty() ? logspace(0.1, 10.0, args.grid_points) : args.sigma_w;
    const auto sv = args.sigma_v.empty() ? logspace(0.1, 10.0, args.grid_points) : args.sigma_v;
    const fs::path dir = prepare_out_dir(args.out);

    const std::size_t per_a = sw.size() * sv.size(), total = args.a.size() * per_a;
    // Cells without a stabilizing filter solution (sigma_w = 0, |a| = 1) or
    // with the gain undefined (sigma_w = sigma_v = 0) are written as nan.
    const double nan = std::numeric_limits<double>::quiet_NaN();
    std::vector<dpflab::ScalarDelayGains> rows(total);
    std::vector<char> undefined(total, 0);
    parallel_for(total, args.jobs, [&](std::size_t idx) {
        const std::size_t ia = idx / per_a, iw = (idx % per_a) / sv.size(), iv = idx % sv.size();
        try {
            rows[idx] = dpflab::scalar_delay_gains(args.a[ia], sw[iw], sv[iv]);
        } catch (const dpflab::SynthesisError&) {
            rows[idx] = {nan, nan, nan, nan, false};
            undefined[idx] = 1;
        } catch (const dpflab::InputError&) {
            if (!(sw[iw] == 0.0 && sv[iv] == 0.0)) throw;
            rows[idx] = {nan, nan, nan, nan, false};
            undefined[idx] = 1;
        }
    });

    auto csv = open_out(dir / "fig5.csv");
    csv << "a,sigma_w,sigma_v,l1,l2,p2,limit_case\n";
    for (std::size_t idx = 0; idx < total; ++idx) {
        const std::size_t ia = idx / per_a, iw = (idx % per_a) / sv.size(), iv = idx % sv.size();
        const auto& g = rows[idx];
        csv << fmt(args.a[ia]) << ',' << fmt(sw[iw]) << ',' << fmt(sv[iv]) << ',' << fmt(g.l1) << ',' << fmt(g.l2)
            << ',' << fmt(g.p2) << ',' << (g.limit_case ? 1 : 0) << '\n';
    }
    std::cout << "wrote " << (dir / "fig5.csv").string() << " (" << total << " rows)\n";
    if (const auto bad = std::count(undefined.begin(), undefined.end(), 1))
        std::cerr << "warning: " << bad << " grid point(s) have no stabilizing filter gain; written as nan\n";
    if (args.svg)
        for (std::size_t ia = 0; ia < args.a.size(); ++ia) {
            std::vector<std::vector<double>> grid(sv.size(), std::vector<double>(sw.size()));
            for (std::size_t iw = 0; iw < sw.size(); ++iw)
                for (std::size_t iv = 0; iv < sv.size(); ++iv)
                    grid[iv][iw] = rows[ia * per_a + iw * sv.size() + iv].l2;
            const fs::path p = dir / ("fig5_a" + std::to_string(ia + 1) + ".svg");
            auto os = open_out(p);
            dpflab::svg::heatmap(os, grid, sw, sv, "DPF gain l2, a = " + fmt(args.a[ia]), "sigma_w", "sigma_v");
            std::cout << "wrote " << p.string() << '\n';
        }
    return kOk;
}

// ---------------------------------------------------------------------------

struct Fig7Args {
    std::size_t td_max = 6;
    double tol = 1e-3;
    std::string out = ".";
    std::size_t jobs = 1;
    bool svg = true;
};

int cmd_fig7(const Fig7Args& args) {
    if (args.td_max < 1) throw dpflab::InputError("fig7: --td-max must be at least 1");
    if (!(args.tol > 0.0)) throw dpflab::InputError("fig7: --tol must be positive");
    const fs::path dir = prepare_out_dir(args.out);
    std::vector<dpflab::StabilizabilityResult> rows(args.td_max);
    parallel_for(args.td_max, args.jobs, [&](std::size_t i) { rows[i] = dpflab::max_stabilizable_a(i + 1, args.tol); });

    auto csv = open_out(dir / "fig7.csv");
    csv << "td,max_abs_a,witness_gain\n";
    dpflab::svg::Series s{"max stabilizable |a| without DPF", {}, {}};
    for (const auto& r : rows) {
        csv << r.td << ',' << fmt(r.max_abs_a) << ',' << fmt(r.witness_gain) << '\n';
        s.x.push_back(static_cast<double>(r.td));
        s.y.push_back(r.max_abs_a);
        std::cout << "td=" << r.td << " max|a|=" << std::fixed << std::setprecision(4) << r.max_abs_a
                  << std::defaultfloat << '\n';
    }
    std::cout << "wrote " << (dir / "fig7.csv").string() << '\n';
    if (args.svg) {
        auto os = open_out(dir / "fig7.svg");
        dpflab::svg::line_plot(os, {s}, "Maximum stabilizable |a| vs net delay", "net delay Td", "max |a|");
    }
    return kOk;
}

// ---------------------------------------------------------------------------

struct PlantArgs {
    std::string plant_file;
    double a = 1.0, sigma_w = 1.0, sigma_v = 1.0;
    std::size_t td = 0;
    bool b_external_only = false;
    bool disturb_all = false;
};

dpflab::StateSpace build_plant(const PlantArgs& p) {
    if (!p.plant_file.empty()) return dpflab::io::read_plant_file(existing_file(p.plant_file, "plant file").string());
    if (p.td == 0) return dpflab::scalar_plant(p.a, p.sigma_w, p.sigma_v);
    return dpflab::delay_chain_plant({p.td, p.a, p.sigma_w, p.sigma_v, !p.disturb_all, !p.b_external_only});
}

struct SynthArgs {
    PlantArgs plant;
    std::string controller = "fc";
    std::size_t horizon = 2;
    std::string mask_file;
    std::string out = ".";
    std::string name = "controller";
    bool estimator_feedback = false;
};

nlohmann::json dimension_json(const dpflab::ControllerRealization& ctrl) {
    const auto dims = dpflab::report_signal_dims(ctrl);
    nlohmann::json dpf = nlohmann::json::array();
    for (const auto& e : dpflab::extract_dpf(ctrl))
        dpf.push_back({{"label", e.label}, {"source", e.source}, {"dest", e.dest}, {"direction", std::string(dpflab::to_string(e.direction))}});
    return {{"controller", std::string(dpflab::to_string(ctrl.kind()))},
            {"forward_dim", dims.forward_dim},
            {"feedback_dim", dims.feedback_dim},
            {"dpf_edges", dpf}};
}

int cmd_synth(const SynthArgs& args) {
    std::optional<dpflab::sls::DelayMask> mask;
    if (!args.mask_file.empty()) mask = dpflab::io::read_mask_file(existing_file(args.mask_file, "mask file").string());
    const auto plant = build_plant(args.plant);
    const fs::path dir = prepare_out_dir(args.out);
    const auto w = dpflab::default_weights(plant);

    dpflab::io::ControllerArtifact art;
    art.plant = plant;
    art.kind = dpflab::io::controller_kind_from_string(args.controller);
    art.q = w.q;
    art.r = w.r;
    std::optional<dpflab::ControllerRealization> ctrl;
    switch (art.kind) {
        case dpflab::ControllerKind::StateFeedback: {
            ctrl = dpflab::make_sf(plant, w.q, w.r);
            art.gain = std::get<dpflab::StaticGainEngine>(ctrl->engine()).gain;
            break;
        }
        case dpflab::ControllerKind::FullControl: {
            ctrl = dpflab::make_fc(plant);
            art.gain = std::get<dpflab::StaticGainEngine>(ctrl->engine()).gain;
            break;
        }
        case dpflab::ControllerKind::OutputFeedback: {
            dpflab::OfOptions opts;
            opts.estimator_dynamics_as_feedback = args.estimator_feedback;
            ctrl = dpflab::make_of(plant, w.q, w.r, plant.w, plant.v, opts);
            const auto& e = std::get<dpflab::ObserverEngine>(ctrl->engine());
            art.k = e.k;
            art.l = e.l;
            art.estimator_dynamics_as_feedback = args.estimator_feedback;
            break;
        }
        case dpflab::ControllerKind::Sls: {
            art.response = dpflab::sls::synthesize(plant, args.horizon, w.q, w.r, mask);
            ctrl = dpflab::sls::make_sls_controller(*art.response);
            auto os = open_out(dir / (args.name + "_phi.csv"));
            dpflab::io::write_sls_csv(os, *art.response);
            break;
        }
    }

    const fs::path ini = dir / (args.name + ".ini"), dot = dir / (args.name + ".dot"), dims = dir / (args.name + "_dims.json");
    dpflab::io::write_artifact_file(ini.string(), art);
    {
        auto os = open_out(dot);
        os << dpflab::to_dot(*ctrl, args.name);
    }
    const auto report = dimension_json(*ctrl);
    {
        auto os = open_out(dims);
        os << report.dump(2) << '\n';
    }
    std::cout << "controller " << report["controller"].get<std::string>() << ": forward_dim "
              << report["forward_dim"] << ", feedback_dim " << report["feedback_dim"] << ", " << report["dpf_edges"].size()
              << " DPF edge(s)\n";
    if (art.kind == dpflab::ControllerKind::Sls) std::cout << "cost " << fmt(art.response->cost) << '\n';
    std::cout << "wrote " << ini.string() << ", " << dot.string() << ", " << dims.string() << '\n';
    return kOk;
}

// ---------------------------------------------------------------------------

struct SimArgs {
    std::string controller_file;
    std::string plant_file;
    std::size_t horizon = 200;
    std::uint64_t seed = 0;
    std::string noise = "gaussian";
    std::size_t impulse_channel = 0, impulse_time = 0;
    std::string out;
    bool cost = true;
    std::size_t cost_horizon = 10000, rollouts = 64, jobs = 1;
};

int cmd_simulate(const SimArgs& args) {
    const auto art = dpflab::io::read_artifact_file(existing_file(args.controller_file, "controller file").string());
    const auto plant = args.plant_file.empty() ? art.plant
                                               : dpflab::io::read_plant_file(existing_file(args.plant_file, "plant file").string());
    const fs::path out = args.out.empty() ? fs::path() : fs::absolute(args.out);
    if (!out.empty() && out.has_parent_path()) prepare_out_dir(out.parent_path().string());
    auto ctrl = art.realize();

    dpflab::sim::NoiseSpec noise;
    if (args.noise == "gaussian")
        noise = dpflab::sim::NoiseSpec::gaussian(args.seed);
    else if (args.noise == "impulse")
        noise = dpflab::sim::NoiseSpec::impulse(args.impulse_channel, args.impulse_time);
    else if (args.noise == "zero")
        noise = dpflab::sim::NoiseSpec::zero();
    else
        throw dpflab::InputError("unknown noise '" + args.noise + "' (expected gaussian, impulse or zero)");
    noise.seed = args.seed;

    const auto tr = dpflab::sim::simulate(plant, ctrl, args.horizon, noise);

    std::vector<std::string> footer;
    int code = kOk;
    const double rho = dpflab::sim::closed_loop_radius(plant, ctrl);
    footer.push_back("spectral_radius=" + fmt(rho));
    if (args.cost) {
        const Matrix q = art.q ? *art.q : dpflab::default_weights(plant).q;
        const Matrix r = art.r ? *art.r : dpflab::default_weights(plant).r;
        try {
            const auto est =
                dpflab::sim::lqg_cost(plant, ctrl, q, r, {args.cost_horizon, args.rollouts, args.seed, 0.2, args.jobs});
            footer.push_back("cost_mean=" + fmt(est.mean) + " cost_se=" + fmt(est.standard_error) +
                             " rollouts=" + std::to_string(args.rollouts) + " cost_horizon=" + std::to_string(args.cost_horizon));
        } catch (const dpflab::InstabilityError& e) {
            footer.push_back("cost=refused " + std::string(e.what()));
            code = kUnstable;
        }
    }
    if (out.empty()) {
        dpflab::sim::write_trajectory_csv(std::cout, tr, footer);
    } else {
        auto os = open_out(out);
        dpflab::sim::write_trajectory_csv(os, tr, footer);
        std::cerr << "wrote " << out.string() << '\n';
    }
    for (const auto& line : footer) std::cerr << line << '\n';
    if (tr.diverged) {
        std::cerr << "trajectory diverged at step " << tr.diverged_at << '\n';
        code = kUnstable;
    }
    return code;
}

// ---------------------------------------------------------------------------

struct CheckArgs {
    std::string artifact;
    double tol = 1e-8;
};

int cmd_check(const CheckArgs& args) {
    const auto art = dpflab::io::read_artifact_file(existing_file(args.artifact, "artifact").string());
    const auto& p = art.plant;
    bool ok = true;
    auto line = [&](const std::string& name, double value) {
        const bool pass = value <= args.tol;
        ok = ok && pass;
        std::cout << name << " = " << fmt(value) << (pass ? "  ok" : "  FAIL") << '\n';
    };
    const auto w = dpflab::default_weights(p);
    const Matrix q = art.q ? *art.q : w.q, r = art.r ? *art.r : w.r;
    switch (art.kind) {
        case dpflab::ControllerKind::Sls: {
            const auto rep = dpflab::sls::check_achievability(*art.response, p);
            double rec = 0.0;
            for (double v : rep.recursion) rec = std::max(rec, v);
            line("recursion_residual", rec);
            line("terminal_residual", rep.terminal);
            line("identity_residual", rep.identity);
            line("mask_violation", rep.mask);
            break;
        }
        case dpflab::ControllerKind::FullControl: {
            const auto sol = dpflab::numerics::solve_filter_dare(p.a, p.c, p.w, p.v);
            line("filter_dare_residual", sol.residual);
            line("gain_deviation", dpflab::max_abs_diff(art.gain, -sol.gain));
            break;
        }
        case dpflab::ControllerKind::StateFeedback: {
            const auto sol = dpflab::numerics::solve_dare(p.a, p.b, q, r);
            line("dare_residual", sol.residual);
            line("gain_deviation", dpflab::max_abs_diff(art.gain, -(sol.gain * dpflab::numerics::inverse(p.c))));
            break;
        }
        case dpflab::ControllerKind::OutputFeedback: {
            const auto ks = dpflab::numerics::solve_dare(p.a, p.b, q, r);
            const auto ls = dpflab::numerics::solve_filter_dare(p.a, p.c, p.w, p.v);
            line("dare_residual", ks.residual);
            line("filter_dare_residual", ls.residual);
            line("k_deviation", dpflab::max_abs_diff(art.k, ks.gain));
            line("l_deviation", dpflab::max_abs_diff(art.l, ls.gain));
            break;
        }
    }
    auto ctrl = art.realize();
    const double rho = dpflab::sim::closed_loop_radius(p, ctrl);
    std::cout << "closed_loop_spectral_radius = " << fmt(rho) << (rho < 1.0 ? "  ok" : "  FAIL") << '\n';
    ok = ok && rho < 1.0;
    std::cout << (ok ? "PASS" : "FAIL") << '\n';
    return ok ? kOk : (rho < 1.0 ? kInfeasible : kUnstable);
}

void add_plant_flags(CLI::App* cmd, PlantArgs& p) {
    cmd->add_option("--plant", p.plant_file, "plant file ([plant] section); overrides the scalar flags");
    cmd->add_option("--a", p.a, "plant pole a");
    cmd->add_option("--sigma-w", p.sigma_w, "disturbance standard deviation")->check(CLI::NonNegativeNumber);
    cmd->add_option("--sigma-v", p.sigma_v, "sensor noise standard deviation")->check(CLI::NonNegativeNumber);
    cmd->add_option("--td", p.td, "net sensing delay in steps (0 = scalar plant)");
    cmd->add_flag("--b-external-only", p.b_external_only, "delay chain with B = e1 instead of internal wires");
    cmd->add_flag("--disturb-all", p.disturb_all, "disturbance on every state instead of x1 only");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dpflab: internal feedback in optimal controllers"};
    app.option_defaults()->always_capture_default();
    app.require_subcommand(1);
    app.set_config("--config", "", "INI config file; [command] sections, flags override the file");
    app.allow_config_extras(CLI::config_extras_mode::error);

    Fig5Args f5;
    auto* fig5 = app.add_subcommand("fig5", "DPF gain l2 over (a, sigma_w, sigma_v): CSV plus heatmaps");
    fig5->add_option("--a", f5.a, "plant poles")->delimiter(',');
    fig5->add_option("--sigma-w", f5.sigma_w, "disturbance std grid (default logspace 0.1..10)")->delimiter(',');
    fig5->add_option("--sigma-v", f5.sigma_v, "sensor noise std grid (default logspace 0.1..10)")->delimiter(',');
    fig5->add_option("--grid-points", f5.grid_points, "points in the default logspace grids");
    fig5->add_option("--out", f5.out, "output directory");
    fig5->add_option("--jobs", f5.jobs, "worker threads")->check(CLI::PositiveNumber);
    fig5->add_flag("!--no-svg", f5.svg, "skip heatmaps");

    Fig7Args f7;
    auto* fig7 = app.add_subcommand("fig7", "maximum |a| stabilizable without DPF per net delay");
    fig7->add_option("--td-max", f7.td_max, "largest net delay");
    fig7->add_option("--tol", f7.tol, "bisection tolerance on |a|");
    fig7->add_option("--out", f7.out, "output directory");
    fig7->add_option("--jobs", f7.jobs, "worker threads")->check(CLI::PositiveNumber);
    fig7->add_flag("!--no-svg", f7.svg, "skip the line plot");

    SynthArgs sy;
    auto* synth = app.add_subcommand("synth", "synthesize a controller and report its signal dimensions");
    add_plant_flags(synth, sy.plant);
    synth->add_option("--controller", sy.controller, "sf | fc | of | sls")
        ->check(CLI::IsMember({"sf", "fc", "of", "sls"}));
    synth->add_option("--T", sy.horizon, "SLS horizon")->check(CLI::PositiveNumber);
    synth->add_option("--mask", sy.mask_file, "SLS delay mask file ([mask] x_delay, u_delay)");
    synth->add_option("--out", sy.out, "output directory");
    synth->add_option("--name", sy.name, "base name of the written files");
    synth->add_flag("--estimator-feedback", sy.estimator_feedback, "classify OF estimator dynamics (A - LC) as feedback");

    SimArgs si;
    auto* simulate = app.add_subcommand("simulate", "simulate a saved controller; trajectory CSV with cost footer");
    simulate->add_option("--controller", si.controller_file, "controller file written by synth")->required();
    simulate->add_option("--plant", si.plant_file, "plant file (default: the plant stored with the controller)");
    simulate->add_option("--horizon", si.horizon, "trajectory length");
    simulate->add_option("--seed", si.seed, "RNG seed")->envname("DPFLAB_SEED");
    simulate->add_option("--noise", si.noise, "gaussian | impulse | zero")
        ->check(CLI::IsMember({"gaussian", "impulse", "zero"}));
    simulate->add_option("--impulse-channel", si.impulse_channel, "disturbance channel of the impulse");
    simulate->add_option("--impulse-time", si.impulse_time, "step of the impulse");
    simulate->add_option("--out", si.out, "trajectory CSV path (default stdout)");
    simulate->add_flag("!--no-cost", si.cost, "skip the Monte Carlo cost");
    simulate->add_option("--cost-horizon", si.cost_horizon, "steps per cost rollout")->check(CLI::PositiveNumber);
    simulate->add_option("--rollouts", si.rollouts, "cost rollouts")->check(CLI::Range(2, 1 << 20));
    simulate->add_option("--jobs", si.jobs, "worker threads for cost rollouts")->check(CLI::PositiveNumber);

    CheckArgs ck;
    auto* check = app.add_subcommand("check", "audit a saved controller (achievability or Riccati residuals)");
    check->add_option("artifact", ck.artifact, "controller file")->required();
    check->add_option("--tol", ck.tol, "residual tolerance");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kInput;
    }

    try {
        if (*fig5) return cmd_fig5(f5);
        if (*fig7) return cmd_fig7(f7);
        if (*synth) return cmd_synth(sy);
        if (*simulate) return cmd_simulate(si);
        if (*check) return cmd_check(ck);
    } catch (const dpflab::InstabilityError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUnstable;
    } catch (const dpflab::InfeasibleError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kInfeasible;
    } catch (const dpflab::SynthesisError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kInfeasible;
    } catch (const dpflab::NonConvergenceError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kInfeasible;
    } catch (const dpflab::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kInput;
    }
    return kInput;
}
