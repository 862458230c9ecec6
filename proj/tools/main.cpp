// kinglab — numerical laboratory for the King steady state of the
// gravitational Vlasov-Poisson system: builds the equilibrium, analyzes its
// orbit geometry, verifies the stability identities/inequalities, and runs
// self-consistent particle evolutions of perturbed states.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "kinglab/io.hpp"
#include "kinglab/king_model.hpp"
#include "kinglab/orbit.hpp"
#include "kinglab/perturbation.hpp"
#include "kinglab/simulation.hpp"
#include "kinglab/verify.hpp"
#include "kinglab/math/parallel.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace kinglab;

namespace {

struct GlobalArgs {
    std::string config_path;
    std::string out_dir = "out";
    std::uint64_t seed = 1;
    int threads = 0;
    std::string check_level = "fast";
    Config cfg;
};

KingParameters king_params(const Config& c) {
    KingParameters p;
    p.w0 = c.get_double("king.w0", 2.0);
    p.r_max_hint = c.get_double("king.r_max_hint", 100.0);
    p.ode_tolerance = c.get_double("king.ode_tolerance", 1e-10);
    p.grid_size = static_cast<int>(c.get_int("king.grid_size", 2001));
    return p;
}

Generator generator_from(const Config& c, const KingModel& model) {
    const std::string family = c.get_string("generator.family", "bump_poly");
    if (family != "bump_poly")
        throw ConfigError("generator.family: unknown family '" + family +
                          "' (available: bump_poly)");
    std::array<double, 4> coeffs = {
        c.get_double("generator.c0", 0.6), c.get_double("generator.c1", -0.4),
        c.get_double("generator.c2", 0.3), c.get_double("generator.c3", 0.2)};
    return Generator(model, c.get_double("generator.amplitude", 1.0), coeffs,
                     c.get_double("generator.eps_fraction", 0.05));
}

/// model for a subcommand: rebuilt from config parameters, or — when
/// king.model points at a snapshot — from the parameters stored there, with
/// the rebuild cross-checked against the stored scalars
std::pair<KingModel, KingParameters> model_from(const GlobalArgs& g) {
    const std::string snap = g.cfg.get_string("king.model", "");
    KingParameters p = king_params(g.cfg);
    if (!snap.empty()) {
        const ModelSnapshot s = load_model_snapshot(snap);
        p.w0 = s.W0;
        p.grid_size = static_cast<int>(s.grid_r.size());
        KingModel m = build_king(p);
        if (std::abs(m.R - s.R) > 1e-10 * s.R || std::abs(m.M - s.M) > 1e-10 * s.M)
            throw SnapshotError("king.model: stored profiles do not match the rebuild");
        return {std::move(m), p};
    }
    return {build_king(p), p};
}

SimConfig sim_config(const Config& c, std::uint64_t seed) {
    SimConfig s;
    s.N = static_cast<std::size_t>(c.get_int("sim.n", 100000));
    s.dt = c.get_double("sim.dt", 0.0);
    s.tdyn_horizon = c.get_double("sim.horizon_tdyn", 10.0);
    s.steps_per_tdyn = c.get_double("sim.steps_per_tdyn", 400.0);
    s.softening = c.get_double("sim.softening", 0.0);
    s.output_stride = static_cast<int>(c.get_int("sim.output_stride", 20));
    s.checkpoint_stride = static_cast<int>(c.get_int("sim.checkpoint_stride", 0));
    s.dgrid_nr = static_cast<std::size_t>(c.get_int("sim.dgrid_nr", 33));
    s.dgrid_nw = static_cast<std::size_t>(c.get_int("sim.dgrid_nw", 33));
    s.dgrid_nl = static_cast<std::size_t>(c.get_int("sim.dgrid_nl", 17));
    s.seed = seed;
    return s;
}

std::string timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[64];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

/// CSV with a leading timestamp comment (excluded from byte comparisons)
void write_csv_stamped(const fs::path& path, const std::vector<std::string>& header,
                       const std::vector<std::vector<double>>& rows) {
    std::ofstream out(path);
    if (!out) throw SnapshotError("cannot open for writing: " + path.string());
    out << "# generated " << timestamp() << "\n";
    for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
    out << "\n";
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << fmt_g17(row[i]);
        out << "\n";
    }
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path);
    out << j.dump(2) << "\n";
}

int cmd_build(const GlobalArgs& g) {
    const KingParameters params = king_params(g.cfg);
    const KingModel model = build_king(params);
    fs::create_directories(g.out_dir);

    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < model.grid_r.size(); ++i)
        rows.push_back({model.grid_r[i], model.grid_u0[i], model.grid_rho0[i], model.grid_m0[i]});
    write_csv_stamped(fs::path(g.out_dir) / "profiles.csv", {"r", "U0", "rho0", "m0"}, rows);
    save_model(model, (fs::path(g.out_dir) / "king.model").string());

    json j;
    j["timestamp"] = timestamp();
    j["W0"] = model.W0;
    j["R"] = model.R;
    j["M"] = model.M;
    j["E0"] = model.E0;
    j["f0_sup"] = model.f0_sup;
    j["C0"] = model.C0;
    j["grid_size"] = model.grid_r.size();
    write_json(fs::path(g.out_dir) / "build_summary.json", j);
    std::printf("built King model: W0=%g R=%.10g M=%.10g E0=%.10g\n", model.W0, model.R,
                model.M, model.E0);
    return 0;
}

int cmd_orbits(const GlobalArgs& g) {
    const KingModel model = model_from(g).first;
    fs::create_directories(g.out_dir);
    const int nE = static_cast<int>(g.cfg.get_int("orbits.n_e", 20));
    const int nL = static_cast<int>(g.cfg.get_int("orbits.n_l", 20));
    const double eps_E = g.cfg.get_double("cutoff.eps_e_fraction", 0.05) * model.W0;
    const double eps_L = g.cfg.get_double("cutoff.eps_l_fraction", 0.01) * model.M * model.R;

    double L_hi = 0.0;
    for (std::size_t i = 0; i < model.grid_r.size(); ++i) {
        const double r = model.grid_r[i];
        L_hi = std::fmax(L_hi, 2.0 * r * r * (model.E0 - model.grid_u0[i]));
    }
    std::vector<std::vector<double>> rows;
    for (int k = 0; k < nL; ++k) {
        const double L = eps_L + (L_hi - eps_L) * (k + 0.5) / nL;
        const auto rl = find_r_L(model, L);
        if (rl[1] >= model.E0 - eps_E) continue;
        for (int j = 0; j < nE; ++j) {
            const double E = rl[1] + (model.E0 - eps_E - rl[1]) * (j + 1.0) / nE;
            OrbitRecord rec;
            rec.E = E; rec.L = L;
            rec.r_L = rl[0]; rec.psi_min = rl[1]; rec.psi_second = rl[2];
            auto [rm, rp] = turning_points(model, E, L, rl[0], rl[1]);
            rec.r_minus = rm; rec.r_plus = rp;
            rec.time_integral = radial_time_integral(model, rec);
            rows.push_back({E, L, rec.r_minus, rec.r_plus, rec.r_L, rec.time_integral});
        }
    }
    write_csv_stamped(fs::path(g.out_dir) / "orbits.csv",
                      {"E", "L", "r_minus", "r_plus", "r_L", "time_integral"}, rows);

    const OrbitBounds bounds = empirical_orbit_bounds(model, eps_E, eps_L);
    json j;
    j["timestamp"] = timestamp();
    j["empirical_C_m"] = bounds.C;
    j["empirical_eta_m"] = bounds.eta;
    j["orbits_sampled"] = bounds.orbits;
    j["eps_E"] = eps_E;
    j["eps_L"] = eps_L;
    write_json(fs::path(g.out_dir) / "orbits_summary.json", j);
    std::printf("orbit table: %zu rows; empirical C_m=%.6g eta_m=%.6g\n", rows.size(), bounds.C,
                bounds.eta);
    return 0;
}

int cmd_perturb(const GlobalArgs& g) {
    const KingModel model = model_from(g).first;
    fs::create_directories(g.out_dir);
    const Generator gen = generator_from(g.cfg, model);
    const std::size_t N = static_cast<std::size_t>(g.cfg.get_int("sim.n", 100000));
    const double s = g.cfg.get_double("generator.s", 0.1);

    const ParticleEnsemble ens = sample_steady_state(model, N, g.seed);
    const FlowResult res = flow(ens, gen, s);
    const MembershipReport rep = verify_S_membership(res.ensemble, ens, model);
    save_checkpoint(res.ensemble, 0.0, 0, (fs::path(g.out_dir) / "perturbed.chkp").string());

    json j;
    j["timestamp"] = timestamp();
    j["amplitude_s"] = s;
    j["flow_steps"] = res.steps;
    j["flow_hamiltonian_drift"] = res.h_drift;
    j["sup_f"] = rep.sup_f;
    j["f0_sup"] = rep.f0_sup;
    j["max_battery_deviation"] = rep.max_rel_deviation;
    for (int b = 0; b < CasimirBattery::size; ++b) {
        j["battery"][CasimirBattery::name(b)] = {{"initial", rep.battery_initial[b]},
                                                 {"flowed", rep.battery_flowed[b]},
                                                 {"rel_deviation", rep.rel_deviation[b]}};
    }
    const bool pass = rep.max_rel_deviation < 1e-6 && rep.sup_f <= model.f0_sup * (1 + 1e-12);
    j["pass"] = pass;
    write_json(fs::path(g.out_dir) / "membership.json", j);
    std::printf("perturbed N=%zu at s=%g: battery deviation %.3g, H drift %.3g -> %s\n", N, s,
                rep.max_rel_deviation, res.h_drift, pass ? "pass" : "FAIL");
    return pass ? 0 : 1;
}

int cmd_verify(const GlobalArgs& g) {
    const auto [model, params] = model_from(g);
    fs::create_directories(g.out_dir);
    VerifyOptions opt = (g.check_level == "full") ? VerifyOptions::full() : VerifyOptions::fast();
    opt.seed = g.seed;
    auto rows = run_verification(model, params, opt);
    // per-check tolerance overrides: tol.<check_name> = <value>
    for (auto& row : rows) {
        if (!g.cfg.has("tol." + row.name)) continue;
        row.tol = g.cfg.get_double("tol." + row.name, row.tol);
        row.pass = row.lhs <= row.rhs + row.tol * row.scale;
    }

    json j;
    j["timestamp"] = timestamp();
    j["check_level"] = g.check_level;
    bool all_pass = true;
    for (const auto& row : rows) {
        j["checks"].push_back({{"name", row.name},
                               {"lhs", row.lhs},
                               {"rhs", row.rhs},
                               {"tol", row.tol},
                               {"scale", row.scale},
                               {"pass", row.pass}});
        all_pass = all_pass && row.pass;
        std::printf("%-34s lhs=%-13.6g rhs=%-13.6g tol=%-9.3g %s\n", row.name.c_str(), row.lhs,
                    row.rhs, row.tol, row.pass ? "pass" : "FAIL");
    }
    j["all_pass"] = all_pass;
    write_json(fs::path(g.out_dir) / "verify.json", j);
    std::printf("verification: %s (%zu checks)\n", all_pass ? "all pass" : "FAILURES", rows.size());
    return all_pass ? 0 : 1;
}

int cmd_evolve(const GlobalArgs& g, const std::string& resume) {
    const KingModel model = model_from(g).first;
    fs::create_directories(g.out_dir);
    SimConfig cfg = sim_config(g.cfg, g.seed);

    ParticleEnsemble ens;
    double t0 = 0.0;
    if (!resume.empty()) {
        Checkpoint chk = load_checkpoint(resume);
        ens = std::move(chk.ensemble);
        t0 = chk.t;
        std::printf("resumed %zu particles at t=%g from %s\n", ens.size(), t0, resume.c_str());
    } else if (g.cfg.get_double("generator.s", 0.0) > 0.0) {
        const Generator gen = generator_from(g.cfg, model);
        const ParticleEnsemble base = sample_steady_state(model, cfg.N, g.seed);
        ens = flow(base, gen, g.cfg.get_double("generator.s", 0.0)).ensemble;
    } else {
        ens = sample_steady_state(model, cfg.N, g.seed);
    }

    const fs::path out(g.out_dir);
    auto on_checkpoint = [&](std::size_t n, double t, const ParticleEnsemble& e) {
        char name[64];
        std::snprintf(name, sizeof name, "checkpoint_%08zu.chkp", n);
        save_checkpoint(e, t0 + t, n, (out / name).string());
    };
    const DiagnosticsSeries series = run(ens, model, cfg, on_checkpoint);

    std::vector<std::string> header = {"t", "Ekin", "Epot", "H", "HC", "d", "fieldnorm2"};
    for (int b = 0; b < CasimirBattery::size; ++b) header.push_back("casimir_" + std::to_string(b + 1));
    std::vector<std::vector<double>> rows;
    for (const auto& r : series.rows) {
        std::vector<double> row = {t0 + r.t, r.ekin, r.epot, r.H, r.HC, r.d, r.field_norm2};
        for (int b = 0; b < CasimirBattery::size; ++b) row.push_back(r.battery[b]);
        rows.push_back(row);
    }
    write_csv_stamped(out / "diagnostics.csv", header, rows);
    save_checkpoint(ens, t0 + series.rows.back().t, series.steps, (out / "final.chkp").string());

    const double H0 = series.rows.front().H, d0 = series.rows.front().d;
    double h_drift = 0.0, sup_d = 0.0;
    for (const auto& r : series.rows) {
        h_drift = std::fmax(h_drift, std::abs(r.H - H0) / std::fmax(std::abs(H0), 1e-300));
        sup_d = std::fmax(sup_d, r.d);
    }
    json j;
    j["timestamp"] = timestamp();
    j["N"] = ens.size();
    j["T_dyn"] = series.T_dyn;
    j["dt"] = series.dt;
    j["steps"] = series.steps;
    j["H_drift_rel"] = h_drift;
    j["d_initial"] = d0;
    j["d_sup"] = sup_d;
    j["d_ratio"] = sup_d / std::fmax(d0, 1e-300);
    write_json(out / "evolve_summary.json", j);
    std::printf("evolved %zu steps (T_dyn=%.4g dt=%.4g): H drift %.3g, sup d/d0 = %.3g\n",
                series.steps, series.T_dyn, series.dt, h_drift, sup_d / std::fmax(d0, 1e-300));
    return 0;
}

int cmd_report(const GlobalArgs& g) {
    const fs::path out(g.out_dir);
    json j;
    j["timestamp"] = timestamp();
    bool all_pass = true;
    bool any = false;
    for (const char* name : {"build_summary.json", "orbits_summary.json", "membership.json",
                             "verify.json", "evolve_summary.json"}) {
        const fs::path p = out / name;
        if (!fs::exists(p)) continue;
        any = true;
        std::ifstream in(p);
        json sub = json::parse(in);
        j["artifacts"][name] = sub;
        if (sub.contains("all_pass")) all_pass = all_pass && sub["all_pass"].get<bool>();
        if (sub.contains("pass")) all_pass = all_pass && sub["pass"].get<bool>();
    }
    if (!any) {
        std::fprintf(stderr, "report: no artifacts found under %s\n", g.out_dir.c_str());
        return 2;
    }
    j["all_pass"] = all_pass;
    write_json(out / "report.json", j);
    std::printf("report: %s\n", all_pass ? "all recorded checks pass" : "FAILURES recorded");
    return all_pass ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"kinglab: King model stability laboratory for the Vlasov-Poisson system"};
    app.require_subcommand(1);
    app.fallthrough();  // global flags may follow the subcommand name

    GlobalArgs g;
    app.add_option("--config", g.config_path, "configuration file (key = value lines)");
    app.add_option("--seed", g.seed, "RNG seed");
    app.add_option("--out", g.out_dir, "output directory");
    app.add_option("--threads", g.threads, "worker threads (0 = hardware)");
    app.add_option("--check-level", g.check_level, "fast or full")
        ->check(CLI::IsMember({"fast", "full"}));

    auto* build = app.add_subcommand("build", "construct the steady state and export profiles");
    auto* orbits = app.add_subcommand("orbits", "tabulate orbit geometry and empirical bounds");
    auto* perturb = app.add_subcommand("perturb", "generate a dynamically accessible perturbation");
    auto* verify = app.add_subcommand("verify", "run the identity/inequality battery");
    auto* evolve = app.add_subcommand("evolve", "self-consistent particle evolution");
    std::string resume;
    evolve->add_option("--resume", resume, "checkpoint file to continue from");
    auto* report = app.add_subcommand("report", "aggregate artifacts in the output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (!g.config_path.empty()) g.cfg = Config::load(g.config_path);
        if (g.threads > 0) math::worker_count() = g.threads;

        if (build->parsed()) return cmd_build(g);
        if (orbits->parsed()) return cmd_orbits(g);
        if (perturb->parsed()) return cmd_perturb(g);
        if (verify->parsed()) return cmd_verify(g);
        if (evolve->parsed()) return cmd_evolve(g, resume);
        if (report->parsed()) return cmd_report(g);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "configuration error: %s\n", e.what());
        return 2;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "unexpected error: %s\n", e.what());
        return 1;
    }
    return 2;
}
