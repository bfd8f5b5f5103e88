#pragma once

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "monodiff/errors.hpp"
#include "monodiff/io.hpp"
#include "monodiff/monotone_graph.hpp"
#include "monodiff/noise.hpp"
#include "monodiff/solver.hpp"
#include "monodiff/spatial_operator.hpp"
#include "monodiff/verifier.hpp"

namespace monodiff {

inline constexpr const char* kVersion = "0.1.0";

namespace expdetail {

using nlohmann::json;

inline const json& require_key(const json& j, const std::string& key, const std::string& ctx) {
    if (!j.is_object() || !j.contains(key))
        throw ConfigInvalid(ctx + ": missing required key '" + key + "'");
    return j.at(key);
}

inline double num(const json& j, const std::string& key, const std::string& ctx) {
    const json& v = require_key(j, key, ctx);
    if (!v.is_number()) throw ConfigInvalid(ctx + ": '" + key + "' must be a number");
    return v.get<double>();
}

inline double num_or(const json& j, const std::string& key, double dflt) {
    if (!j.is_object() || !j.contains(key)) return dflt;
    return j.at(key).get<double>();
}

inline std::uint64_t seed_or(const json& j, const std::string& key, std::uint64_t dflt) {
    if (!j.is_object() || !j.contains(key)) return dflt;
    return j.at(key).get<std::uint64_t>();
}

inline std::string str(const json& j, const std::string& key, const std::string& ctx) {
    const json& v = require_key(j, key, ctx);
    if (!v.is_string()) throw ConfigInvalid(ctx + ": '" + key + "' must be a string");
    return v.get<std::string>();
}

} // namespace expdetail

/// Everything built from a parsed experiment config. The operator owns the
/// grid geometry, so it is heap-held and fields reference it.
struct ExperimentSetup {
    nlohmann::json echo;
    std::unique_ptr<SpatialOperator> op;
    MonotoneGraph graph = MonotoneGraph::power_law(1.0);
    NoiseSpec spec;
    std::unique_ptr<Field> initial;
    SolverConfig solver;
    std::vector<std::string> checks;
    std::size_t ensemble = 100;
    std::uint64_t verifier_seed = 1;
    std::string output = "run";
    bool dump_noise = false;
    int workers = 1;
    double two_path_initial_factor = 0.5;
    double two_path_perturb = 0.1;
    std::size_t two_path_mode = 0;
};

inline MonotoneGraph graph_from_config(const nlohmann::json& j) {
    using namespace expdetail;
    const std::string family = str(j, "family", "graph");
    if (family == "power_law") return MonotoneGraph::power_law(num(j, "r", "graph"));
    if (family == "fast_diffusion") return MonotoneGraph::fast_diffusion();
    if (family == "logarithmic") return MonotoneGraph::logarithmic(num(j, "mu", "graph"));
    if (family == "exponential_power")
        return MonotoneGraph::exponential_power(num(j, "a", "graph"), num(j, "p", "graph"));
    if (family == "step") return MonotoneGraph::step();
    if (family == "sign") return MonotoneGraph::sign_graph();
    if (family == "piecewise_linear") {
        const auto& nodes = require_key(j, "nodes", "graph");
        if (!nodes.is_array() || nodes.empty())
            throw ConfigInvalid("graph: 'nodes' must be a nonempty array of [s, psi_left, psi_right]");
        std::vector<MonotoneGraph::Breakpoint> bps;
        for (const auto& nd : nodes) {
            if (!nd.is_array() || nd.size() != 3)
                throw ConfigInvalid("graph: each node must be [s, psi_left, psi_right]");
            bps.push_back({nd[0].get<double>(), nd[1].get<double>(), nd[2].get<double>()});
        }
        return MonotoneGraph::piecewise_linear(bps, num(j, "slope_left", "graph"),
                                               num(j, "slope_right", "graph"));
    }
    throw ConfigInvalid("graph: unknown family '" + family + "'");
}

inline Field initial_from_config(const nlohmann::json& j, const SpatialOperator& op) {
    using namespace expdetail;
    const std::string type = str(j, "type", "initial");
    if (type == "zero") return op.zero_field();
    if (type == "eigenmode") {
        const int k = int(num(j, "k", "initial"));
        if (k < 1 || std::size_t(k) > op.modes()) throw ConfigInvalid("initial: eigenmode index out of range");
        return eigenmode_field(op, std::size_t(k - 1), num_or(j, "amplitude", 1.0));
    }
    if (type == "bump")
        return bump_field(op, num_or(j, "center", 0.5), num_or(j, "width", 0.25),
                          num_or(j, "amplitude", 1.0));
    if (type == "values") {
        const auto& v = require_key(j, "v", "initial");
        if (!v.is_array() || v.size() != op.points())
            throw ConfigInvalid("initial: 'v' must be an array matching the grid size");
        std::vector<double> vals(op.points());
        for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = v[i].get<double>();
        return Field(op, std::move(vals));
    }
    throw ConfigInvalid("initial: unknown type '" + type + "'");
}

inline NoiseSpec noise_from_config(const nlohmann::json& j, const SpatialOperator& op) {
    using namespace expdetail;
    const std::string kind = str(j, "kind", "noise");
    const double gamma = num(j, "gamma", "noise");
    const std::uint64_t seed = seed_or(j, "seed", 1234);
    if (kind == "additive") {
        const auto& prof = require_key(j, "profile", "noise");
        const std::string ptype = str(prof, "type", "noise.profile");
        const std::size_t K = std::size_t(num_or(j, "K", 0.0));
        NoiseSpec spec;
        if (ptype == "zero") {
            spec = NoiseSpec::zero_noise(op, gamma, seed);
        } else if (ptype == "eigen_decay") {
            spec = NoiseSpec::additive_eigen_decay(op, num(prof, "exponent", "noise.profile"),
                                                   num_or(prof, "amplitude", 1.0), gamma, K, seed);
        } else if (ptype == "coeffs") {
            const auto& garr = require_key(prof, "g", "noise.profile");
            std::vector<double> g;
            for (const auto& v : garr) g.push_back(v.get<double>());
            spec = NoiseSpec::additive(std::move(g), gamma, seed);
        } else {
            throw ConfigInvalid("noise.profile: unknown type '" + ptype + "'");
        }
        spec.validate(op);
        return spec;
    }
    if (kind == "multiplicative") {
        NoiseSpec spec = NoiseSpec::multiplicative(num(j, "scale", "noise"), num_or(j, "eps", 0.1),
                                                   num_or(j, "delta", 1.0), gamma, seed);
        spec.K = op.modes();
        if (j.contains("anchor")) {
            const Field a = initial_from_config(j.at("anchor"), op);
            spec.anchor.assign(a.values().begin(), a.values().end());
        }
        spec.validate(op);
        return spec;
    }
    throw ConfigInvalid("noise: unknown kind '" + kind + "'");
}

inline SolverConfig solver_from_config(const nlohmann::json& j) {
    using namespace expdetail;
    SolverConfig cfg;
    cfg.dt = num(j, "dt", "solver");
    cfg.T = num(j, "T", "solver");
    if (j.contains("lambda")) {
        const auto& lj = j.at("lambda");
        if (lj.contains("schedule")) {
            cfg.lambda_schedule.clear();
            for (const auto& v : lj.at("schedule")) cfg.lambda_schedule.push_back(v.get<double>());
        } else {
            cfg.lambda_schedule = SolverConfig::geometric_schedule(
                num_or(lj, "initial", 1.0), int(num_or(lj, "levels", 8)), num_or(lj, "factor", 0.5));
        }
    }
    cfg.inner_tol = num_or(j, "inner_tol", 1e-10);
    cfg.inner_max_iter = int(num_or(j, "inner_max_iter", 600));
    cfg.anderson_depth = int(num_or(j, "anderson_depth", 4));
    cfg.snapshots = int(num_or(j, "snapshots", 65));
    if (j.contains("picard")) {
        const auto& pj = j.at("picard");
        cfg.picard.alpha = num_or(pj, "alpha", 1.0);
        cfg.picard.tol = num_or(pj, "tol", 1e-6);
        cfg.picard.max_iter = int(num_or(pj, "max_iter", 15));
    }
    cfg.validate();
    return cfg;
}

/// Parse and validate a full experiment config; throws ConfigInvalid before
/// any computation happens.
inline ExperimentSetup parse_experiment(const nlohmann::json& j,
                                        std::uint64_t* seed_override = nullptr) {
    using namespace expdetail;
    ExperimentSetup setup;
    setup.echo = j;

    const auto& spatial = require_key(j, "spatial", "config");
    const int dim = int(num(spatial, "dim", "spatial"));
    const int n = int(num(spatial, "n", "spatial"));
    setup.op = std::make_unique<SpatialOperator>(dim, n);

    setup.graph = graph_from_config(require_key(j, "graph", "config"));
    setup.spec = noise_from_config(require_key(j, "noise", "config"), *setup.op);
    setup.initial = std::make_unique<Field>(
        initial_from_config(require_key(j, "initial", "config"), *setup.op));
    setup.solver = solver_from_config(require_key(j, "solver", "config"));

    if (j.contains("verifier")) {
        const auto& vj = j.at("verifier");
        if (vj.contains("checks"))
            for (const auto& c : vj.at("checks")) setup.checks.push_back(c.get<std::string>());
        setup.ensemble = std::size_t(num_or(vj, "ensemble", 100));
        setup.verifier_seed = seed_or(vj, "seed", 99);
        setup.two_path_initial_factor = num_or(vj, "two_path_initial_factor", 0.5);
        setup.two_path_perturb = num_or(vj, "two_path_perturb", 0.1);
        setup.two_path_mode = std::size_t(num_or(vj, "two_path_mode", 0.0));
    }
    setup.output = j.contains("output") ? j.at("output").get<std::string>() : "run";
    setup.dump_noise = j.contains("dump_noise") && j.at("dump_noise").get<bool>();
    setup.workers = int(num_or(j, "workers", 1.0));

    if (seed_override) {
        setup.spec.seed = *seed_override;
        setup.verifier_seed = rng::derive(*seed_override, 0x5eedULL);
        setup.echo["noise"]["seed"] = setup.spec.seed;
        if (!setup.echo.contains("verifier")) setup.echo["verifier"] = nlohmann::json::object();
        setup.echo["verifier"]["seed"] = setup.verifier_seed;
    }

    for (const std::string& c : setup.checks) {
        const bool additive_only = c == "energy_identity" || c == "two_path_stability";
        const bool mult_only = c == "lipschitz_solution_map";
        if (additive_only && setup.spec.kind != NoiseSpec::Kind::Additive)
            throw ConfigInvalid("check '" + c + "' requires additive noise");
        if (mult_only && setup.spec.kind != NoiseSpec::Kind::Multiplicative)
            throw ConfigInvalid("check '" + c + "' requires multiplicative noise");
        if (c != "energy_identity" && c != "two_path_stability" && c != "apriori" &&
            c != "selection" && c != "lipschitz_solution_map")
            throw ConfigInvalid("unknown check '" + c + "'");
    }
    return setup;
}

/// Catalog of built-in graph families: pointwise map, closed-form potential,
/// and symmetry/superlinearity notes.
inline std::string graph_catalog() {
    return
        "built-in maximal monotone graph families\n"
        "\n"
        "power_law(r>0)        Psi(s) = sign(s)|s|^r\n"
        "                      j(y) = |y|^{r+1}/(r+1); j*(p) = r/(r+1) |p|^{(r+1)/r}\n"
        "                      even potential: symmetry ratio 1; full domain and range\n"
        "\n"
        "fast_diffusion        Psi(s) = sign(s)sqrt(|s|)  (power_law with r = 1/2)\n"
        "                      j(y) = (2/3)|y|^{3/2}; j*(p) = |p|^3/3\n"
        "\n"
        "logarithmic(mu>0)     Psi(s) = sign(s)(log(mu+|s|) - log mu)\n"
        "                      j(y) = (mu+|y|)log(1+|y|/mu) - |y|; j*(p) = mu(e^{|p|}-1-|p|)\n"
        "                      even potential: symmetry ratio 1; full domain and range\n"
        "\n"
        "exponential_power(a>0,p>=1)\n"
        "                      Psi(s) = sign(s)(exp(a|s|^p)-1)\n"
        "                      j closed-form for p=1, adaptive quadrature otherwise;\n"
        "                      symmetric by construction (ratio 1); evaluations\n"
        "                      saturate at 1e300 with an overflow flag\n"
        "\n"
        "piecewise_linear      monotone piecewise-linear branches with jump breakpoints;\n"
        "                      every jump is stored filled as the closed interval\n"
        "                      [Psi(r-), Psi(r+)], so only maximal graphs are\n"
        "                      representable; j is the exact piecewise quadratic;\n"
        "                      range probes report non-surjective profiles\n"
        "\n"
        "step                  0 for s<0, [0,1] at s=0, 1 for s>0 (filled jump);\n"
        "                      bounded range, so the superlinearity probe of j fails\n"
        "sign                  -1 for s<0, [-1,1] at s=0, 1 for s>0; j(y) = |y|\n"
        "\n"
        "custom                any monotone scalar map with Psi(0)=0 (library API only);\n"
        "                      potential by closed form when supplied, else adaptive\n"
        "                      quadrature of the minimal section\n";
}

struct RunOutcome {
    int exit_code = 0;
    std::filesystem::path output_dir;
    std::string message;
};

namespace expdetail {

inline json report_to_json(const CheckReport& r) {
    json j;
    j["name"] = r.name;
    j["passed"] = r.passed;
    j["tolerance"] = r.tolerance;
    j["sample_size"] = r.sample_size;
    j["seed"] = r.seed;
    j["note"] = r.note;
    json m = json::object();
    for (const auto& [k, v] : r.measured) m[k] = v;
    j["measured"] = m;
    return j;
}

inline void write_checks_csv(const std::filesystem::path& p, const std::vector<CheckReport>& reports) {
    std::ofstream out(p);
    if (!out) throw Error("cannot write " + p.string());
    out << "check,time,measured,bound\n";
    for (const auto& r : reports)
        for (const auto& row : r.series)
            out << r.name << "," << io::format_double(row[0]) << "," << io::format_double(row[1])
                << "," << io::format_double(row[2]) << "\n";
}

} // namespace expdetail

/// Execute a parsed experiment into setup.output. Artifacts are staged in a
/// ".partial" directory and renamed into place on success; a failed run is
/// left quarantined instead.
inline RunOutcome run_experiment(ExperimentSetup& setup) {
    namespace fs = std::filesystem;
    using nlohmann::json;
    RunOutcome outcome;
    const fs::path outdir = setup.output;
    outcome.output_dir = outdir;
    if (fs::exists(outdir)) {
        outcome.exit_code = 2;
        outcome.message = "output directory already exists: " + outdir.string();
        return outcome;
    }
    const fs::path partial = outdir.string() + ".partial";
    fs::remove_all(partial);
    fs::create_directories(partial);

    const auto t0 = std::chrono::steady_clock::now();
    std::vector<CheckReport> reports;
    json manifest;
    try {
        const SpatialOperator& op = *setup.op;
        const MonotoneGraph& g = setup.graph;
        const Field& x = *setup.initial;
        const SolverConfig& cfg = setup.solver;

        SolutionPath path;
        json picard_summary;
        if (setup.spec.kind == NoiseSpec::Kind::Additive) {
            const WienerPath wiener =
                sample_wiener(std::max<std::size_t>(1, setup.spec.g.size()), cfg.dt, cfg.steps(),
                              setup.spec.seed);
            path = solve_additive(g, op, x, setup.spec, wiener, cfg);
            if (setup.dump_noise) io::write_wiener_csv(partial / "noise.csv", wiener);
        } else {
            PicardResult pr = picard_solve(g, op, x, setup.spec, cfg, setup.ensemble, setup.workers);
            path = std::move(pr.representative);
            picard_summary["iterations"] = pr.iterations;
            picard_summary["converged"] = pr.converged;
            picard_summary["lipschitz"] = pr.lipschitz;
            picard_summary["alpha"] = pr.alpha;
            picard_summary["distances"] = pr.distances;
            picard_summary["ratios"] = pr.ratios;
        }

        for (const std::string& c : setup.checks) {
            if (c == "selection") {
                reports.push_back(check_selection(path, g));
            } else if (c == "apriori") {
                reports.push_back(check_apriori(path, g, x));
            } else if (c == "energy_identity") {
                NoiseSpec spec = setup.spec;
                spec.seed = rng::derive(setup.verifier_seed, 0xe4e26);
                reports.push_back(
                    check_energy_identity(g, op, x, spec, cfg, setup.ensemble, setup.workers));
            } else if (c == "two_path_stability") {
                NoiseSpec s1 = setup.spec;
                s1.seed = rng::derive(setup.verifier_seed, 0x29a1);
                // (a) identical data and coefficients, (b) scaled initial
                // state, (c) perturbed leading mode
                Field y = x;
                CheckReport a = check_two_path_stability(g, op, s1, s1, x, y, cfg,
                                                         setup.ensemble, setup.workers);
                a.name += "_identical";
                reports.push_back(std::move(a));
                y *= setup.two_path_initial_factor;
                CheckReport b = check_two_path_stability(g, op, s1, s1, x, y, cfg,
                                                         setup.ensemble, setup.workers);
                b.name += "_initial_gap";
                reports.push_back(std::move(b));
                NoiseSpec s2 = s1;
                if (setup.two_path_mode < s2.g.size())
                    s2.g[setup.two_path_mode] += setup.two_path_perturb;
                CheckReport cr = check_two_path_stability(g, op, s1, s2, x, x, cfg,
                                                          setup.ensemble, setup.workers);
                cr.name += "_coefficient_gap";
                reports.push_back(std::move(cr));
            } else if (c == "lipschitz_solution_map") {
                std::vector<std::pair<Field, Field>> pairs;
                Field a = x;
                a *= 0.75;
                Field b = x;
                b *= 0.5;
                Field cfield = x;
                cfield *= -0.5;
                pairs.emplace_back(x, a);
                pairs.emplace_back(x, b);
                pairs.emplace_back(x, cfield);
                reports.push_back(check_lipschitz_solution_map(g, op, setup.spec, pairs, cfg,
                                                               setup.ensemble, setup.workers));
            }
        }

        io::write_field_matrix_csv(partial / "state.csv", op, path.times, path.state, "state");
        io::write_field_matrix_csv(partial / "selection.csv", op, path.times, path.selection,
                                   "selection");
        expdetail::write_checks_csv(partial / "checks.csv", reports);

        json report;
        report["version"] = kVersion;
        report["checks"] = json::array();
        for (const auto& r : reports) report["checks"].push_back(expdetail::report_to_json(r));
        report["lambda_cauchy"] = json::array();
        for (const auto& [lam, dist] : path.ledger.lambda_cauchy)
            report["lambda_cauchy"].push_back({{"lambda", lam}, {"distance", dist}});
        if (!picard_summary.is_null()) report["picard"] = picard_summary;
        report["delta_sup"] = path.ledger.delta_sup;
        report["max_abs_state"] = path.ledger.max_abs_state;
        report["inner_iterations"] = path.ledger.inner_iterations;
        report["newton_fallbacks"] = path.ledger.newton_fallbacks;
        {
            std::ofstream out(partial / "report.json");
            out << report.dump(2) << "\n";
        }

        const auto wall =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        manifest["version"] = kVersion;
        manifest["config"] = setup.echo;
        manifest["effective_seeds"] = {{"noise", setup.spec.seed}, {"verifier", setup.verifier_seed}};
        manifest["wall_clock_sec"] = wall;
        manifest["checks"] = json::array();
        bool all_passed = true;
        for (const auto& r : reports) {
            manifest["checks"].push_back({{"name", r.name}, {"passed", r.passed}});
            all_passed = all_passed && r.passed;
        }
        json inventory = json::array();
        for (const char* f : {"state.csv", "selection.csv", "checks.csv", "noise.csv"}) {
            const fs::path p = partial / f;
            if (!fs::exists(p)) continue;
            inventory.push_back({{"file", f},
                                 {"bytes", fs::file_size(p)},
                                 {"fnv64", io::checksum_hex(io::file_checksum(p))}});
        }
        manifest["inventory"] = inventory;
        {
            std::ofstream out(partial / "manifest.json");
            out << manifest.dump(2) << "\n";
        }
        fs::rename(partial, outdir);
        outcome.exit_code = all_passed ? 0 : 1;
        if (!all_passed) outcome.message = "one or more checks failed";
        return outcome;
    } catch (const ConfigInvalid& e) {
        fs::remove_all(partial);
        outcome.exit_code = 2;
        outcome.message = e.what();
        return outcome;
    } catch (const std::invalid_argument& e) {
        fs::remove_all(partial);
        outcome.exit_code = 2;
        outcome.message = e.what();
        return outcome;
    } catch (const std::exception& e) {
        const fs::path quarantine = outdir.string() + ".quarantine";
        fs::remove_all(quarantine);
        if (fs::exists(partial)) fs::rename(partial, quarantine);
        outcome.exit_code = 3;
        outcome.message = std::string("solver failure: ") + e.what();
        outcome.output_dir = quarantine;
        return outcome;
    }
}

inline RunOutcome run_experiment_file(const std::filesystem::path& config_path,
                                      const std::string& out_override = "",
                                      int workers_override = 0,
                                      const std::uint64_t* seed_override = nullptr) {
    RunOutcome outcome;
    nlohmann::json j;
    try {
        std::ifstream in(config_path);
        if (!in) throw ConfigInvalid("cannot read config " + config_path.string());
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        outcome.exit_code = 2;
        outcome.message = std::string("config is not valid JSON: ") + e.what();
        return outcome;
    } catch (const ConfigInvalid& e) {
        outcome.exit_code = 2;
        outcome.message = e.what();
        return outcome;
    }
    try {
        std::uint64_t seed_val = 0;
        std::uint64_t* seed_ptr = nullptr;
        if (seed_override) {
            seed_val = *seed_override;
            seed_ptr = &seed_val;
        }
        ExperimentSetup setup = parse_experiment(j, seed_ptr);
        if (!out_override.empty()) {
            setup.output = out_override;
            setup.echo["output"] = out_override;
        }
        if (workers_override > 0) setup.workers = workers_override;
        return run_experiment(setup);
    } catch (const ConfigInvalid& e) {
        outcome.exit_code = 2;
        outcome.message = e.what();
        return outcome;
    } catch (const GammaViolation& e) {
        outcome.exit_code = 2;
        outcome.message = e.what();
        return outcome;
    } catch (const std::invalid_argument& e) {
        outcome.exit_code = 2;
        outcome.message = e.what();
        return outcome;
    }
}

/// Re-execute a run from its manifest with the recorded seeds and assert
/// byte-identical CSV artifacts. Returns exit code 4 on any inventory or
/// checksum mismatch, with the differences in `message`.
inline RunOutcome replay_manifest(const std::filesystem::path& manifest_path) {
    namespace fs = std::filesystem;
    using nlohmann::json;
    RunOutcome outcome;
    json manifest;
    try {
        std::ifstream in(manifest_path);
        if (!in) throw ConfigInvalid("cannot read manifest " + manifest_path.string());
        in >> manifest;
    } catch (const std::exception& e) {
        outcome.exit_code = 2;
        outcome.message = std::string("manifest unreadable: ") + e.what();
        return outcome;
    }
    std::string diff;
    try {
        const fs::path rundir = manifest_path.parent_path();
        json config = manifest.at("config");
        config["noise"]["seed"] = manifest.at("effective_seeds").at("noise");
        if (!config.contains("verifier")) config["verifier"] = json::object();
        config["verifier"]["seed"] = manifest.at("effective_seeds").at("verifier");

        // original artifacts must still match the manifest
        for (const auto& entry : manifest.at("inventory")) {
            const std::string f = entry.at("file").get<std::string>();
            const fs::path orig = rundir / f;
            if (!fs::exists(orig)) {
                diff += "missing original artifact: " + f + "\n";
                continue;
            }
            const std::string have = io::checksum_hex(io::file_checksum(orig));
            if (have != entry.at("fnv64").get<std::string>())
                diff += "original artifact drifted: " + f + "\n";
        }

        const fs::path tmp =
            rundir / (".replay-" + std::to_string(std::chrono::steady_clock::now().time_since_epoch().count()));
        config["output"] = tmp.string();
        ExperimentSetup setup = parse_experiment(config);
        RunOutcome rerun = run_experiment(setup);
        if (rerun.exit_code >= 2) {
            outcome.exit_code = rerun.exit_code;
            outcome.message = "replay solve failed: " + rerun.message;
            return outcome;
        }
        for (const auto& entry : manifest.at("inventory")) {
            const std::string f = entry.at("file").get<std::string>();
            const fs::path regen = tmp / f;
            if (!fs::exists(regen)) {
                diff += "replay did not regenerate: " + f + "\n";
                continue;
            }
            const std::string have = io::checksum_hex(io::file_checksum(regen));
            if (have != entry.at("fnv64").get<std::string>())
                diff += "checksum mismatch: " + f + " manifest=" +
                        entry.at("fnv64").get<std::string>() + " regenerated=" + have + "\n";
        }
        fs::remove_all(tmp);
    } catch (const std::exception& e) {
        outcome.exit_code = 4;
        outcome.message = std::string("replay failed: ") + e.what();
        return outcome;
    }
    if (!diff.empty()) {
        outcome.exit_code = 4;
        outcome.message = "reproduction mismatch:\n" + diff;
    } else {
        outcome.exit_code = 0;
        outcome.message = "replay matched all recorded checksums";
    }
    return outcome;
}

} // namespace monodiff
