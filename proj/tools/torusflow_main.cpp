// torusflow: command-line laboratory driver.
//
// Subcommands: check-basis, simulate, transport, energy, minimize,
// decompose, report.  Every run writes a directory with a manifest
// (config echo, seed, artifact checksums, wall clock); exit status is 0
// when all enabled checks pass, 1 when a check fails, 2 on configuration
// errors.

#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "torusflow/csv.hpp"
#include "torusflow/decomposition.hpp"
#include "torusflow/energy.hpp"
#include "torusflow/manifest.hpp"
#include "torusflow/serialize.hpp"
#include "torusflow/svg.hpp"
#include "torusflow/transport.hpp"
#include "torusflow/variational.hpp"

namespace fs = std::filesystem;
using namespace torusflow;

namespace {

struct SimFlags {
    int grid = 32;
    double dt = 1e-3;
    double T = 0.5;
    std::uint64_t seed = 0;
    int replicas = 8;
    int thin = 1;
    int K = 3;
    double decay = 2.0;

    void attach(CLI::App* cmd) {
        cmd->add_option("--grid", grid, "particles per axis");
        cmd->add_option("--dt", dt, "time step");
        cmd->add_option("--T", T, "horizon");
        cmd->add_option("--seed", seed, "noise seed");
        cmd->add_option("--replicas", replicas, "replica count");
        cmd->add_option("--thin", thin, "record every thin-th step");
        cmd->add_option("--K", K, "noise basis cutoff");
        cmd->add_option("--decay", decay, "noise weight decay");
    }

    SimConfig config() const {
        SimConfig c;
        c.grid_side = grid;
        c.dt = dt;
        c.T = T;
        c.seed = seed;
        c.replicas = replicas;
        c.thin = thin;
        return c;
    }

    json echo() const {
        return {{"grid", grid}, {"dt", dt},           {"T", T},     {"seed", seed},
                {"replicas", replicas}, {"thin", thin}, {"K", K},     {"decay", decay}};
    }
};

fs::path make_run_dir(const std::string& name) {
    fs::path dir(name);
    fs::create_directories(dir);
    return dir;
}

SpectralField load_drift(const std::string& drift_file, double cx, double cy, double T) {
    if (!drift_file.empty()) return field_from_json(load_json(drift_file));
    return SpectralField::constant({cx, cy}, T);
}

int cmd_check_basis(const SimFlags& sim, const std::string& out_dir) {
    fs::path dir = make_run_dir(out_dir);
    RunManifest manifest("check-basis", sim.echo(), sim.seed);
    NoiseBasis basis = build_noise_basis(sim.K, sim.decay);
    StructureReport rep = check_structure(basis);
    bool pass = rep.valid();
    save_json(dir / "basis.json", to_json(basis));
    save_json(dir / "structure.json",
              {{"cutoff", sim.K},
               {"max_divergence", rep.max_divergence},
               {"max_identity_deviation", rep.max_identity_deviation},
               {"max_self_advection", rep.max_self_advection},
               {"tolerance", 1e-10},
               {"pass", pass}});
    manifest.add_artifact(dir / "basis.json");
    manifest.add_artifact(dir / "structure.json");
    manifest.write(dir);
    std::cout << (pass ? "basis structure: ok" : "basis structure: FAILED") << "\n";
    return pass ? 0 : 1;
}

int cmd_simulate(const SimFlags& sim, const std::string& drift_file, double cx, double cy,
                 double tol_incomp, const std::string& out_dir) {
    fs::path dir = make_run_dir(out_dir);
    json cfg = sim.echo();
    cfg["drift_file"] = drift_file;
    cfg["cx"] = cx;
    cfg["cy"] = cy;
    RunManifest manifest("simulate", cfg, sim.seed);

    NoiseBasis basis = build_noise_basis(sim.K, sim.decay);
    SpectralField drift = load_drift(drift_file, cx, cy, sim.T);
    auto ensembles = simulate_ensemble(basis, drift, sim.config());

    std::vector<TrigPoly> embedding = GradientFamily::functions();
    double worst = 0.0;
    json inc = json::array();
    for (const auto& e : ensembles) {
        auto rep = incompressibility_report(e, embedding);
        worst = std::max(worst, rep.worst);
        inc.push_back({{"replica", e.replica}, {"worst", rep.worst}});
    }

    for (const auto& e : ensembles) {
        fs::path f = dir / ("paths-r" + std::to_string(e.replica) + ".bin");
        write_path_binary(f, e);
        manifest.add_artifact(f);
    }
    // CSV export for small runs only
    if (!ensembles.empty() &&
        static_cast<long long>(ensembles[0].positions.size()) <= 200000) {
        const auto& e = ensembles[0];
        CsvWriter csv(dir / "paths-r0.csv");
        csv.row({"record", "time", "particle", "theta1", "theta2"});
        for (int rec = 0; rec < e.recorded(); ++rec)
            for (int i = 0; i < e.particles; ++i) {
                TorusPoint p = e.point(rec, i);
                csv.field(rec).field(e.time_of(rec)).field(i).field(p.theta1).field(p.theta2);
                csv.endrow();
            }
        manifest.add_artifact(dir / "paths-r0.csv");
    }

    // pooled endpoint coupling, consumable by `minimize --target`
    save_json(dir / "coupling.json", to_json(endpoint_coupling(ensembles)));
    manifest.add_artifact(dir / "coupling.json");

    bool pass = worst <= tol_incomp;
    save_json(dir / "incompressibility.json",
              {{"per_replica", inc}, {"worst", worst}, {"tolerance", tol_incomp},
               {"pass", pass}});
    manifest.add_artifact(dir / "incompressibility.json");
    manifest.write(dir);
    std::cout << "incompressibility worst deviation " << worst << (pass ? " (ok)" : " (FAIL)")
              << "\n";
    return pass ? 0 : 1;
}

int cmd_transport(const SimFlags& sim, double cx, double cy, std::uint64_t family_seed,
                  const std::string& out_dir) {
    fs::path dir = make_run_dir(out_dir);
    json cfg = sim.echo();
    cfg["cx"] = cx;
    cfg["cy"] = cy;
    cfg["family_seed"] = family_seed;
    RunManifest manifest("transport", cfg, sim.seed);

    NoiseBasis basis = build_noise_basis(sim.K, sim.decay);
    AxiomReport rep = axiom_sweep(basis, {cx, cy}, sim.config(), family_seed);

    json checks = json::array();
    bool pass = true;
    for (const auto& c : rep.checks) {
        checks.push_back({{"name", c.name}, {"stat", c.stat}, {"tol", c.tol},
                          {"pass", c.pass}});
        pass = pass && c.pass;
        std::cout << (c.pass ? "[pass] " : "[FAIL] ") << c.name << "  (" << c.stat
                  << " vs " << c.tol << ")\n";
    }
    save_json(dir / "axioms.json",
              {{"family_seed", family_seed}, {"family_size", 6}, {"checks", checks},
               {"pass", pass}});
    manifest.add_artifact(dir / "axioms.json");

    // one replica's series for inspection
    SimConfig one = sim.config();
    PathEnsemble e = simulate_replica(basis, SpectralField::constant({cx, cy}, sim.T), one, 0);
    TransportRequest req;
    auto phis = sweep_family(family_seed, 0);
    auto psis = sweep_family(family_seed, 1);
    for (std::size_t j = 0; j < phis.size(); ++j)
        req.phis.push_back(first_arg_from_poly(phis[j], e.initial, "phi" + std::to_string(j)));
    req.psis = psis;
    SpectralField drift = SpectralField::constant({cx, cy}, sim.T);
    req.drift = &drift;
    TransportSeries s = theta_series(e, req);
    CsvWriter csv(dir / "theta-series-r0.csv");
    csv.row({"time", "j", "k", "theta", "drift_integrand"});
    for (int t = 0; t < s.records; ++t)
        for (int j = 0; j < s.J; ++j)
            for (int k = 0; k < s.K; ++k) {
                csv.field(t * s.record_dt).field(j).field(k).field(s.theta(j, k, t))
                    .field(s.drift_integrand(j, k, t));
                csv.endrow();
            }
    manifest.add_artifact(dir / "theta-series-r0.csv");
    manifest.write(dir);
    return pass ? 0 : 1;
}

int cmd_energy(const SimFlags& sim, double cx, double cy, std::vector<int> ms, double slack,
               const std::string& out_dir) {
    fs::path dir = make_run_dir(out_dir);
    if (ms.empty()) ms = {4, 8, 16};
    json cfg = sim.echo();
    cfg["cx"] = cx;
    cfg["cy"] = cy;
    cfg["ms"] = ms;
    RunManifest manifest("energy", cfg, sim.seed);

    NoiseBasis basis = build_noise_basis(sim.K, sim.decay);
    SpectralField drift = SpectralField::constant({cx, cy}, sim.T);
    Prop25Report rep = proposition_2_5_check(basis, drift, sim.config(), ms, slack);

    json ladder = json::array();
    std::vector<double> xs, ys;
    for (const auto& r : rep.rungs) {
        ladder.push_back({{"m", r.m}, {"eps", r.radius_periods}, {"value", r.value},
                          {"se", r.se}});
        xs.push_back(r.m);
        ys.push_back(r.value);
        std::cout << "m=" << r.m << " lower bound " << r.value << " (se " << r.se << ")\n";
    }
    save_json(dir / "energy.json",
              {{"flow_energy", rep.flow_energy}, {"ladder", ladder}, {"slack", rep.slack},
               {"pass", rep.pass}, {"ms", ms}});
    CsvWriter csv(dir / "ladder.csv");
    csv.row({"m", "radius_periods", "value", "se"});
    for (const auto& r : rep.rungs) {
        csv.field(r.m).field(r.radius_periods).field(r.value).field(r.se);
        csv.endrow();
    }
    LinePlot plot("transport energy lower bounds", "partition grid m", "energy");
    plot.add_series("lower bound", xs, ys);
    plot.add_series("flow energy",
                    {xs.front(), xs.back()}, {rep.flow_energy, rep.flow_energy});
    plot.write(dir / "ladder.svg");
    manifest.add_artifact(dir / "energy.json");
    manifest.add_artifact(dir / "ladder.csv");
    manifest.add_artifact(dir / "ladder.svg");
    manifest.write(dir);
    std::cout << "flow energy " << rep.flow_energy << (rep.pass ? " (ok)" : " (FAIL)") << "\n";
    return rep.pass ? 0 : 1;
}

int cmd_minimize(const SimFlags& sim, const std::string& target_file, int Kb, int bins,
                 std::vector<double> lambdas, int iters, const std::string& out_dir) {
    fs::path dir = make_run_dir(out_dir);
    if (lambdas.empty()) lambdas = {10.0, 100.0};
    json cfg = sim.echo();
    cfg["target"] = target_file;
    cfg["Kb"] = Kb;
    cfg["bins"] = bins;
    cfg["lambda"] = lambdas;
    cfg["iters"] = iters;
    RunManifest manifest("minimize", cfg, sim.seed);

    ConstraintSet set = ConstraintSet::standard();
    json tj = load_json(target_file);
    MomentTable target;
    if (tj.contains("values")) {
        target.J = tj.at("J").get<int>();
        target.K = tj.at("K").get<int>();
        target.values = tj.at("values").get<std::vector<double>>();
        if (target.J != set.J() || target.K != set.K())
            throw CLI::ValidationError("--target", "moment table does not match the family");
    } else {
        target = moment_targets(coupling_from_json(tj), set);
    }

    NoiseBasis basis = build_noise_basis(sim.K, sim.decay);
    DriftParameterization param{Kb, bins, sim.T};
    OptimizerConfig opt;
    opt.seed = sim.seed;
    opt.max_evals = iters;
    opt.lambda_schedule = lambdas;
    MinimizationResult res = minimize_energy(target, basis, param, opt, sim.config(), set);

    json telemetry = json::array();
    std::vector<double> ix, ie, ir;
    for (const auto& row : res.telemetry) {
        telemetry.push_back({{"iter", row.iter}, {"evals", row.evals},
                             {"lambda", row.lambda}, {"objective", row.objective},
                             {"energy", row.energy}, {"residual", row.residual}});
        ix.push_back(row.evals);
        ie.push_back(row.energy);
        ir.push_back(row.residual);
    }
    save_json(dir / "minimization.json",
              {{"best_drift", to_json(res.best_drift)},
               {"best_energy", res.best_energy},
               {"best_residual", res.best_residual},
               {"best_objective", res.best_objective},
               {"evaluations", res.evaluations},
               {"converged", res.converged},
               {"seed", res.seed},
               {"telemetry", telemetry}});
    CsvWriter csv(dir / "convergence.csv");
    csv.row({"iter", "evals", "lambda", "objective", "energy", "residual"});
    for (const auto& row : res.telemetry) {
        csv.field(row.iter).field(row.evals).field(row.lambda).field(row.objective)
            .field(row.energy).field(row.residual);
        csv.endrow();
    }
    if (!ix.empty()) {
        LinePlot plot("penalized minimization", "objective evaluations", "value");
        plot.add_series("energy", ix, ie);
        plot.add_series("residual", ix, ir);
        plot.write(dir / "convergence.svg");
        manifest.add_artifact(dir / "convergence.svg");
    }
    manifest.add_artifact(dir / "minimization.json");
    manifest.add_artifact(dir / "convergence.csv");
    manifest.write(dir);
    std::cout << "best energy " << res.best_energy << ", residual " << res.best_residual
              << ", evaluations " << res.evaluations
              << (res.converged ? " (converged)" : " (NOT CONVERGED)") << "\n";
    return res.converged ? 0 : 1;
}

int cmd_decompose(const SimFlags& sim, const std::string& drift_file, double cx, double cy,
                  int pde_factor, int partition_m, const std::string& out_dir) {
    fs::path dir = make_run_dir(out_dir);
    json cfg = sim.echo();
    cfg["drift_file"] = drift_file;
    cfg["pde_factor"] = pde_factor;
    cfg["partition_m"] = partition_m;
    RunManifest manifest("decompose", cfg, sim.seed);

    NoiseBasis basis = build_noise_basis(sim.K, sim.decay);
    SpectralField drift = load_drift(drift_file, cx, cy, sim.T);

    MartingaleFlowRecord rec =
        martingale_flow_with_jacobian(basis, sim.grid, sim.dt, sim.T, sim.seed);
    FactorizationReport fact = factorize(drift, rec, companion_flow(basis, drift, rec));
    WeakDivergenceReport weak = lemma_5_1_check(rec, drift, GradientFamily::functions());

    SigmaBOptions opt;
    opt.grid_side = sim.grid;
    opt.dt = sim.dt;
    opt.seed = sim.seed;
    opt.replicas = sim.replicas;
    opt.pde_factor = pde_factor;
    opt.partition_m = partition_m;
    SigmaBReport sb = theta_sigma_b_study(basis, drift, opt);

    bool pass = fact.det_positive && weak.max_abs <= 0.03 && sb.lb_ok &&
                sb.identity_rel_error <= 0.10 && sb.max_match_deviation <= 0.05;
    save_json(dir / "decomposition.json",
              {{"factorization",
                {{"max_distance", fact.max_distance}, {"mean_distance", fact.mean_distance},
                 {"min_det", fact.min_det}, {"max_det", fact.max_det},
                 {"det_positive", fact.det_positive}}},
               {"weak_divergence", {{"max_abs", weak.max_abs}, {"tolerance", 0.03}}},
               {"sigma_b",
                {{"identity_rel_error", sb.identity_rel_error}, {"energy", sb.energy_b},
                 {"energy_lb", sb.energy_lb}, {"lb_ok", sb.lb_ok},
                 {"max_match_deviation", sb.max_match_deviation},
                 {"mass_drift", sb.mass_drift}, {"l2_decay", sb.l2_decay}}},
               {"pass", pass}});
    manifest.add_artifact(dir / "decomposition.json");

    // transported-field snapshots for the first embedding function
    int pde_n = pde_factor * sim.grid;
    TrigPoly phi = GradientFamily::functions()[0];
    auto fields = solve_transport_pde(
        rec, drift, [&](const TorusPoint& p) { return phi.eval(p); }, pde_n);
    for (int which : {0, rec.steps / 2, rec.steps}) {
        std::string tag = "theta-t" + std::to_string(which);
        CsvWriter csv(dir / (tag + ".csv"));
        for (int a = 0; a < pde_n; ++a) {
            for (int b = 0; b < pde_n; ++b)
                csv.field(fields[which][static_cast<std::size_t>(a) * pde_n + b]);
            csv.endrow();
        }
        write_heatmap(dir / (tag + ".svg"), fields[which], pde_n,
                      "transported field, t = " + std::to_string(which * sim.dt));
        manifest.add_artifact(dir / (tag + ".csv"));
        manifest.add_artifact(dir / (tag + ".svg"));
    }
    manifest.write(dir);
    std::cout << "factorization distance " << fact.max_distance << ", weak divergence "
              << weak.max_abs << ", identity error " << sb.identity_rel_error
              << (pass ? " (ok)" : " (FAIL)") << "\n";
    return pass ? 0 : 1;
}

int cmd_report(const std::vector<std::string>& run_dirs, const std::string& out_dir) {
    if (run_dirs.empty()) throw CLI::ValidationError("runs", "no run directories given");
    fs::path dir = make_run_dir(out_dir);
    RunManifest manifest("report", {{"runs", run_dirs}}, 0);

    json combined = json::array();
    json family_tag;
    std::vector<std::pair<double, double>> dt_and_residual;  // convergence column
    for (const auto& rd : run_dirs) {
        fs::path p(rd);
        if (!fs::exists(p / "manifest.json"))
            throw CLI::ValidationError("runs", "missing manifest in " + rd);
        json man = load_json(p / "manifest.json");
        json entry = {{"run", rd}, {"command", man.at("command")},
                      {"wall_seconds", man.value("wall_seconds", 0.0)}};
        json rows = json::array();
        for (const char* name :
             {"structure.json", "incompressibility.json", "axioms.json", "energy.json",
              "minimization.json", "decomposition.json"}) {
            if (!fs::exists(p / name)) continue;
            json rep = load_json(p / name);
            if (rep.contains("pass"))
                rows.push_back({{"report", name}, {"pass", rep.at("pass")}});
            if (std::string(name) == "axioms.json") {
                json fam = {{"family_seed", rep.value("family_seed", 0)},
                            {"family_size", rep.value("family_size", 0)}};
                if (family_tag.is_null())
                    family_tag = fam;
                else if (family_tag != fam)
                    throw CLI::ValidationError("runs", "mismatched test families across runs");
                for (const auto& c : rep.at("checks"))
                    rows.push_back({{"report", c.at("name")}, {"pass", c.at("pass")},
                                    {"stat", c.at("stat")}});
            }
            if (std::string(name) == "decomposition.json" &&
                man.at("config").contains("dt")) {
                dt_and_residual.push_back(
                    {man.at("config").at("dt").get<double>(),
                     rep.at("factorization").at("max_distance").get<double>()});
            }
        }
        entry["rows"] = rows;
        combined.push_back(entry);
    }

    json out = {{"runs", combined}};
    if (dt_and_residual.size() == 2 && dt_and_residual[0].first != dt_and_residual[1].first) {
        auto hi = dt_and_residual[0].first > dt_and_residual[1].first ? dt_and_residual[0]
                                                                      : dt_and_residual[1];
        auto lo = dt_and_residual[0].first > dt_and_residual[1].first ? dt_and_residual[1]
                                                                      : dt_and_residual[0];
        out["convergence_ratio"] = hi.second > 0 ? lo.second / hi.second : 0.0;
    }
    save_json(dir / "combined.json", out);
    manifest.add_artifact(dir / "combined.json");

    CsvWriter csv(dir / "summary.csv");
    csv.row({"run", "report", "pass"});
    for (const auto& entry : combined)
        for (const auto& row : entry.at("rows")) {
            csv.field(entry.at("run").get<std::string>())
                .field(row.at("report").get<std::string>())
                .field(row.at("pass").get<bool>() ? "pass" : "fail");
            csv.endrow();
        }
    manifest.add_artifact(dir / "summary.csv");
    manifest.write(dir);
    std::cout << "combined report over " << run_dirs.size() << " runs written to " << out_dir
              << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"torusflow: stochastic incompressible flows on the 2-torus"};
    app.set_config("--config", "", "INI configuration (sections per subcommand)");
    app.fallthrough();  // lets --config appear after the subcommand name
    app.require_subcommand(1);

    int status = 0;

    SimFlags sb;
    std::string out;
    auto* basis_cmd = app.add_subcommand("check-basis", "verify noise basis structure");
    sb.attach(basis_cmd);
    basis_cmd->add_option("--out", out, "run directory")->default_val("run-check-basis");
    basis_cmd->callback([&] { status = cmd_check_basis(sb, out); });

    SimFlags ss;
    std::string sim_drift, sim_out;
    double sim_cx = 0.0, sim_cy = 0.0, tol_incomp = 0.05;
    auto* sim_cmd = app.add_subcommand("simulate", "particle ensembles of the flow SDE");
    ss.attach(sim_cmd);
    sim_cmd->add_option("--drift", sim_drift, "drift JSON file");
    sim_cmd->add_option("--cx", sim_cx, "constant drift, first component");
    sim_cmd->add_option("--cy", sim_cy, "constant drift, second component");
    sim_cmd->add_option("--tol-incompressibility", tol_incomp, "deviation gate");
    sim_cmd->add_option("--out", sim_out, "run directory")->default_val("run-simulate");
    sim_cmd->callback(
        [&] { status = cmd_simulate(ss, sim_drift, sim_cx, sim_cy, tol_incomp, sim_out); });

    SimFlags st;
    double tr_cx = 0.25, tr_cy = 0.1;
    std::uint64_t family_seed = 7;
    std::string tr_out;
    auto* tr_cmd = app.add_subcommand("transport", "transport functional axiom sweep");
    st.attach(tr_cmd);
    tr_cmd->add_option("--cx", tr_cx, "constant drift, first component");
    tr_cmd->add_option("--cy", tr_cy, "constant drift, second component");
    tr_cmd->add_option("--family-seed", family_seed, "test family seed");
    tr_cmd->add_option("--out", tr_out, "run directory")->default_val("run-transport");
    tr_cmd->callback([&] { status = cmd_transport(st, tr_cx, tr_cy, family_seed, tr_out); });

    SimFlags se;
    double en_cx = 1.0, en_cy = 0.0, slack = 0.05;
    std::vector<int> ms;
    std::string en_out;
    auto* en_cmd = app.add_subcommand("energy", "flow energy vs transport energy ladder");
    se.attach(en_cmd);
    en_cmd->add_option("--cx", en_cx, "constant drift, first component");
    en_cmd->add_option("--cy", en_cy, "constant drift, second component");
    en_cmd->add_option("--ms", ms, "partition refinement ladder");
    en_cmd->add_option("--slack", slack, "statistical slack for the bound");
    en_cmd->add_option("--out", en_out, "run directory")->default_val("run-energy");
    en_cmd->callback([&] { status = cmd_energy(se, en_cx, en_cy, ms, slack, en_out); });

    SimFlags sm;
    std::string target_file, mi_out;
    int Kb = 1, bins = 1, iters = 400;
    std::vector<double> lambdas;
    auto* mi_cmd = app.add_subcommand("minimize", "energy minimization with target moments");
    sm.attach(mi_cmd);
    mi_cmd->add_option("--target", target_file, "target JSON (moment table or coupling)")
        ->required();
    mi_cmd->add_option("--Kb", Kb, "drift spectral cutoff");
    mi_cmd->add_option("--bins", bins, "drift time bins");
    mi_cmd->add_option("--lambda", lambdas, "penalty schedule");
    mi_cmd->add_option("--iters", iters, "objective evaluation budget");
    mi_cmd->add_option("--out", mi_out, "run directory")->default_val("run-minimize");
    mi_cmd->callback(
        [&] { status = cmd_minimize(sm, target_file, Kb, bins, lambdas, iters, mi_out); });

    SimFlags sd;
    std::string de_drift, de_out;
    double de_cx = 0.35, de_cy = -0.2;
    int pde_factor = 2, partition_m = 4;
    auto* de_cmd = app.add_subcommand("decompose", "drift-free/finite-variation factorization");
    sd.attach(de_cmd);
    de_cmd->add_option("--drift", de_drift, "drift JSON file");
    de_cmd->add_option("--cx", de_cx, "constant drift, first component");
    de_cmd->add_option("--cy", de_cy, "constant drift, second component");
    de_cmd->add_option("--pde-factor", pde_factor, "transport grid refinement factor");
    de_cmd->add_option("--partition-m", partition_m, "partition grid for the energy bound");
    de_cmd->add_option("--out", de_out, "run directory")->default_val("run-decompose");
    de_cmd->callback([&] {
        status = cmd_decompose(sd, de_drift, de_cx, de_cy, pde_factor, partition_m, de_out);
    });

    std::vector<std::string> run_dirs;
    std::string rp_out;
    auto* rp_cmd = app.add_subcommand("report", "merge run directories into one summary");
    rp_cmd->add_option("runs", run_dirs, "run directories");
    rp_cmd->add_option("--out", rp_out, "output directory")->default_val("run-report");
    rp_cmd->callback([&] { status = cmd_report(run_dirs, rp_out); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;  // configuration errors exit 2
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return status;
}
