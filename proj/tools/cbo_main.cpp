// Command-line front end: optimize | meanfield | verify | chaos.
// Exit codes: 0 ok, 1 verify failure, 2 config/data error, 3 numeric
// blow-up, 4 fixed-point non-convergence.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cbo/cbo.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct RunConfig {
    std::string objective_name = "quadratic";
    std::size_t dim = 2;
    cbo::ObjectiveFunction objective;
    cbo::CboParams params;
    cbo::DiffusionModel diffusion;
    std::optional<cbo::TruncationConfig> truncation;
    std::optional<cbo::PicardConfig> picard;
    cbo::InitSampler init;
    std::string init_desc = "uniform_box(-2,2)";
    double C_M = 1.0;      // sublinearity estimate, caller-supplied
    double L_M_R1 = 1.0;   // consensus-map Lipschitz estimate on the R+1 ball
    double L_phi_R = cbo::cutoff_lipschitz;
    std::vector<std::size_t> chaos_n = {64, 128, 256};
    std::size_t chaos_reps = 5;
    fs::path output_dir = "out";
};

json load_json(const fs::path& path) {
    std::ifstream f(path);
    if (!f) throw cbo::UsageError("cannot open config " + path.string());
    try {
        return json::parse(f);
    } catch (const json::exception& e) {
        throw cbo::UsageError("config parse error in " + path.string() + ": " +
                              e.what());
    }
}

RunConfig parse_config(const json& j) {
    RunConfig cfg;
    try {
        if (j.contains("objective")) {
            const auto& jo = j.at("objective");
            cfg.objective_name = jo.value("name", cfg.objective_name);
            cfg.dim = jo.value("dim", cfg.dim);
        }
        cfg.objective = cbo::builtin_objective(cfg.objective_name, cfg.dim);

        if (j.contains("cbo")) {
            const auto& jc = j.at("cbo");
            cfg.params.lambda = jc.value("lambda", cfg.params.lambda);
            cfg.params.beta = jc.value("beta", cfg.params.beta);
            cfg.params.T = jc.value("T", cfg.params.T);
            cfg.params.dt = jc.value("dt", cfg.params.dt);
            cfg.params.n = jc.value("n", cfg.params.n);
            cfg.params.seed = jc.value("seed", cfg.params.seed);
        }
        cfg.params.validate();

        std::string kind = "isotropic";
        double theta = 0.25;
        if (j.contains("diffusion")) {
            const auto& jd = j.at("diffusion");
            kind = jd.value("kind", kind);
            theta = jd.value("theta", theta);
        }
        if (kind == "isotropic")
            cfg.diffusion = cbo::isotropic_diffusion(theta, cfg.dim);
        else if (kind == "anisotropic")
            cfg.diffusion = cbo::anisotropic_diffusion(theta);
        else
            throw cbo::UsageError("diffusion.kind must be isotropic or "
                                  "anisotropic");

        if (j.contains("truncation")) {
            const auto& jt = j.at("truncation");
            cbo::TruncationConfig t;
            t.R = jt.value("R", t.R);
            t.p = jt.value("p", t.p);
            t.validate();
            cfg.truncation = t;
        }
        if (j.contains("picard")) {
            const auto& jp = j.at("picard");
            cbo::PicardConfig p;
            p.m_samples = jp.value("m_samples", p.m_samples);
            p.max_iters = jp.value("max_iters", p.max_iters);
            p.tol = jp.value("tol", p.tol);
            p.p = jp.value("p", p.p);
            p.validate();
            cfg.picard = p;
        }

        std::string init_kind = "uniform_box";
        if (j.contains("init")) {
            const auto& ji = j.at("init");
            init_kind = ji.value("kind", init_kind);
            if (init_kind == "uniform_box") {
                const double lo = ji.value("lo", -2.0);
                const double hi = ji.value("hi", 2.0);
                cfg.init = cbo::uniform_box_sampler(lo, hi);
                cfg.init_desc = "uniform_box(" + cbo::format_double(lo) + "," +
                                cbo::format_double(hi) + ")";
            } else if (init_kind == "gaussian") {
                const double mean = ji.value("mean", 0.0);
                const double sd = ji.value("stddev", 1.0);
                cfg.init = cbo::gaussian_sampler(mean, sd);
                cfg.init_desc = "gaussian(" + cbo::format_double(mean) + "," +
                                cbo::format_double(sd) + ")";
            } else if (init_kind == "point") {
                auto at = ji.at("at").get<std::vector<double>>();
                if (at.size() != cfg.dim)
                    throw cbo::UsageError("init.at must have dim entries");
                cfg.init = cbo::point_sampler(std::move(at));
                cfg.init_desc = "point";
            } else {
                throw cbo::UsageError("init.kind must be uniform_box, "
                                      "gaussian, or point");
            }
        } else {
            cfg.init = cbo::uniform_box_sampler(-2.0, 2.0);
        }

        if (j.contains("constants")) {
            const auto& jk = j.at("constants");
            cfg.C_M = jk.value("C_M", cfg.C_M);
            cfg.L_M_R1 = jk.value("L_M_R1", cfg.L_M_R1);
            cfg.L_phi_R = jk.value("L_phi_R", cfg.L_phi_R);
        }
        if (j.contains("chaos")) {
            const auto& jh = j.at("chaos");
            cfg.chaos_n =
                jh.value("n_list", cfg.chaos_n);
            cfg.chaos_reps = jh.value("reps", cfg.chaos_reps);
        }
        cfg.output_dir = j.value("output_dir", cfg.output_dir.string());
    } catch (const json::exception& e) {
        throw cbo::UsageError(std::string("config field error: ") + e.what());
    }
    return cfg;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
        .count();
}

void write_json(const fs::path& path, const json& j) {
    cbo::write_text_file(path, j.dump(2) + "\n");
}

int cmd_optimize(const RunConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto init = cbo::sample_ensemble(cfg.params.n, cfg.dim, cfg.init,
                                           cfg.params.seed);
    const auto traj = cbo::run_particle_cbo(cfg.params, cfg.diffusion,
                                            cfg.objective, init,
                                            cfg.truncation);

    cbo::write_text_file(cfg.output_dir / "trajectory.csv",
                         cbo::trajectory_csv(traj));
    cbo::write_text_file(cfg.output_dir / "final_ensemble.csv",
                         cbo::ensemble_csv(traj.final_ensemble));

    json summary;
    summary["objective"] = cfg.objective_name;
    summary["dim"] = cfg.dim;
    summary["n"] = cfg.params.n;
    summary["seed"] = cfg.params.seed;
    summary["best_f"] = traj.best_f.back();
    summary["consensus"] = std::vector<double>(
        traj.consensus.end() - static_cast<std::ptrdiff_t>(traj.dim),
        traj.consensus.end());
    summary["moment_p"] = traj.moment.back();
    summary["threads"] = cbo::max_threads();
    summary["wall_time_seconds"] = seconds_since(t0);
    write_json(cfg.output_dir / "summary.json", summary);
    return 0;
}

int cmd_meanfield(const RunConfig& cfg) {
    if (!cfg.truncation || !cfg.picard)
        throw cbo::UsageError("meanfield needs truncation and picard config "
                              "sections");
    if (cfg.truncation->p != cfg.picard->p)
        throw cbo::UsageError("truncation.p and picard.p must agree");
    if (!(cfg.picard->p >= 2.0))
        throw cbo::UsageError("meanfield constants need picard.p >= 2");

    const auto t0 = std::chrono::steady_clock::now();
    const auto res = cbo::truncated_meanfield_solve(
        cfg.truncation->R, *cfg.picard, cfg.params, cfg.diffusion,
        cfg.objective, cfg.init);
    const auto& sol = res.solution;

    cbo::write_text_file(cfg.output_dir / "consensus.csv",
                         cbo::consensus_csv(sol));
    cbo::write_text_file(cfg.output_dir / "picard_history.csv",
                         cbo::picard_history_csv(res.history));
    cbo::write_text_file(cfg.output_dir / "final_ensemble.csv",
                         cbo::ensemble_csv(sol.curve.frames.back()));
    cbo::write_measure_curve(cfg.output_dir / "curve", sol.curve);

    const auto rep = cbo::make_constants_report(
        cfg.objective.params, cfg.params.lambda, cfg.diffusion.L_S, cfg.C_M,
        cfg.L_M_R1, cfg.L_phi_R, cfg.truncation->R, cfg.picard->p,
        static_cast<double>(cfg.dim), cfg.params.T);
    json jc;
    jc["p_M"] = rep.p_M;
    jc["c_p"] = rep.c_p;
    jc["L_v_tilde"] = rep.L_v_tilde;
    jc["L_sigma_tilde"] = rep.L_sigma_tilde;
    jc["C_1"] = rep.C_1;
    jc["C_0"] = rep.C_0;
    jc["K_0"] = rep.K_0;
    jc["K"] = rep.K;
    jc["log_K"] = rep.log_K;
    jc["picard_n"] = rep.picard_n;
    jc["inputs"] = {{"lambda", cfg.params.lambda},
                    {"L_S", cfg.diffusion.L_S},
                    {"C_M", cfg.C_M},
                    {"L_M_R1", cfg.L_M_R1},
                    {"L_phi_R", cfg.L_phi_R},
                    {"R", cfg.truncation->R},
                    {"p", cfg.picard->p},
                    {"d", cfg.dim},
                    {"T", cfg.params.T}};
    write_json(cfg.output_dir / "constants.json", jc);

    const auto bound = cbo::verify_moment_bound(sol, rep.C_0, cfg.picard->p);
    json summary;
    summary["converged"] = res.converged;
    summary["iterations"] = res.iterations;
    summary["final_path_dist"] =
        res.history.empty() ? 0.0 : res.history.back();
    summary["exit_index"] =
        sol.exit_index ? json(*sol.exit_index) : json(nullptr);
    summary["moment_bound"] = {{"initial_moment", bound.initial_moment},
                               {"sup_moment", bound.sup_moment},
                               {"bound", bound.bound},
                               {"ratio", bound.ratio},
                               {"pass", bound.pass}};
    summary["threads"] = cbo::max_threads();
    summary["wall_time_seconds"] = seconds_since(t0);
    write_json(cfg.output_dir / "summary.json", summary);

    if (!res.converged) {
        std::cerr << "picard iteration did not converge in "
                  << res.iterations << " iterations (last distance "
                  << summary["final_path_dist"].dump() << ")\n";
        return 4;
    }
    return 0;
}

int cmd_chaos(const RunConfig& cfg, std::vector<std::size_t> n_list,
              std::size_t reps) {
    if (!cfg.picard)
        throw cbo::UsageError("chaos needs a picard config section for the "
                              "mean-field reference");
    if (n_list.empty()) n_list = cfg.chaos_n;
    if (reps == 0) reps = cfg.chaos_reps;

    const auto t0 = std::chrono::steady_clock::now();
    cbo::PicardResult ref;
    if (cfg.truncation)
        ref = cbo::truncated_meanfield_solve(cfg.truncation->R, *cfg.picard,
                                             cfg.params, cfg.diffusion,
                                             cfg.objective, cfg.init);
    else
        ref = cbo::picard_fixed_point(*cfg.picard, cfg.params, cfg.diffusion,
                                      cfg.objective, std::nullopt, cfg.init);
    if (!ref.converged) {
        std::cerr << "mean-field reference did not converge\n";
        return 4;
    }

    const auto table =
        cbo::propagation_of_chaos(n_list, reps, cfg.params, cfg.diffusion,
                                  cfg.objective, ref.solution, cfg.init);

    cbo::write_text_file(cfg.output_dir / "chaos.csv", cbo::chaos_csv(table));

    std::size_t inversions = 0;
    for (std::size_t i = 1; i < table.size(); ++i)
        if (table[i].median > table[i - 1].median) ++inversions;
    json summary;
    json medians = json::array();
    for (const auto& row : table)
        medians.push_back({{"N", row.n}, {"median_w_p", row.median}});
    summary["medians"] = medians;
    summary["reps"] = reps;
    summary["p"] = ref.solution.moment_order;
    summary["inversions"] = inversions;
    summary["trend_nonincreasing"] = inversions == 0;
    summary["trend_holds_within_one_inversion"] = inversions <= 1;
    summary["threads"] = cbo::max_threads();
    summary["wall_time_seconds"] = seconds_since(t0);
    write_json(cfg.output_dir / "chaos_summary.json", summary);
    return 0;
}

// ---------------------------------------------------------------------------
// verify: self-contained invariant suite over all modules.

struct Check {
    std::string name;
    bool pass = false;
    double margin = 0.0;
    std::string detail;
};

class Verifier {
  public:
    explicit Verifier(std::uint64_t seed)
        : key_(cbo::derive_key(seed, cbo::rng_tag::validation)) {}

    void add(std::string name, bool pass, double margin, std::string detail) {
        checks_.push_back(
            {std::move(name), pass, margin, std::move(detail)});
    }

    double u() { return cbo::uniform01(key_, stream_, step_++, 0); }
    double u(double lo, double hi) { return lo + (hi - lo) * u(); }

    cbo::Ensemble random_ensemble(std::size_t n, std::size_t dim, double lo,
                                  double hi) {
        cbo::Ensemble e;
        e.n = n;
        e.dim = dim;
        e.points.resize(n * dim);
        for (auto& v : e.points) v = u(lo, hi);
        return e;
    }

    void next_stream() {
        ++stream_;
        step_ = 0;
    }

    const std::vector<Check>& checks() const { return checks_; }

  private:
    std::uint64_t key_;
    std::uint64_t stream_ = 0;
    std::uint32_t step_ = 0;
    std::vector<Check> checks_;
};

double frob_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

double norm_of(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

void check_bdg(Verifier& v) {
    const double c2 = cbo::bdg_constant(2.0);
    v.add("bdg_c2_equals_4", c2 == 4.0, std::abs(c2 - 4.0), "exact equality");
    const double want = (512.0 / 27.0) * (512.0 / 27.0);
    const double c4 = cbo::bdg_constant(4.0);
    const double rel = std::abs(c4 - want) / want;
    v.add("bdg_c4_value", rel <= 1e-6, 1e-6 - rel,
          "relative error vs (512/27)^2");
    double min_gap = std::numeric_limits<double>::infinity();
    for (double p = 2.0; p < 6.0; p += 1.0)
        min_gap =
            std::min(min_gap, cbo::bdg_constant(p + 1.0) - cbo::bdg_constant(p));
    v.add("bdg_monotone_2_to_6", min_gap > 0.0, min_gap,
          "min consecutive increment");
}

void check_cutoff(Verifier& v) {
    const double R = 3.0;
    const bool fault = []() {
        const char* e = std::getenv("CBO_FAULT_INJECT");
        return e && std::string(e) == "cutoff-monotonicity";
    }();
    auto eta = [&](double z) {
        // fault hook: evaluate a mirrored curve, which increases in z
        return fault ? cbo::cutoff_eta(std::max(0.0, 2.0 * R + 2.0 - z), R)
                     : cbo::cutoff_eta(z, R);
    };

    double branch_dev = std::abs(cbo::cutoff_eta(R - 0.3, R) - 1.0);
    branch_dev = std::max(branch_dev, std::abs(cbo::cutoff_eta(R + 1.7, R)));
    branch_dev =
        std::max(branch_dev, std::abs(cbo::cutoff_eta(R + 0.5, R) - 0.5));
    v.add("cutoff_branches", branch_dev == 0.0, branch_dev,
          "1 below R, 0 above R+1, exactly 0.5 at the midpoint");

    v.next_stream();
    double worst_increase = 0.0;
    double prev = eta(0.0);
    for (int i = 1; i <= 10000; ++i) {
        const double z = (R + 2.0) * i / 10000.0;
        const double cur = eta(z);
        worst_increase = std::max(worst_increase, cur - prev);
        prev = cur;
    }
    v.add("cutoff_monotone", worst_increase <= 1e-15,
          1e-15 - worst_increase, "max increase over a 10^4 grid");

    double worst_ratio = 0.0;
    for (int i = 0; i < 100; ++i) {
        const double z1 = v.u(0.0, R + 2.0);
        const double z2 = v.u(0.0, R + 2.0);
        if (z1 == z2) continue;
        worst_ratio = std::max(worst_ratio,
                               std::abs(cbo::cutoff_eta(z1, R) -
                                        cbo::cutoff_eta(z2, R)) /
                                   std::abs(z1 - z2));
    }
    v.add("cutoff_lipschitz", worst_ratio <= cbo::cutoff_lipschitz * (1 + 1e-9),
          cbo::cutoff_lipschitz - worst_ratio,
          "worst slope over 100 sampled pairs vs 15/8");
}

void check_measure(Verifier& v) {
    v.next_stream();
    double worst = 0.0;
    for (int t = 0; t < 100; ++t) {
        const auto n = static_cast<std::size_t>(v.u(1.0, 20.0)) + 1;
        const auto d = static_cast<std::size_t>(v.u(1.0, 4.0));
        const auto e = v.random_ensemble(n, d, -3.0, 3.0);
        for (double p : {1.0, 2.0, 4.0})
            worst = std::max(worst, std::abs(cbo::moment_p(e, p) -
                                             cbo::wasserstein_to_dirac0(e, p)));
    }
    v.add("moment_equals_dirac_distance", worst <= 1e-12, 1e-12 - worst,
          "100 random ensembles, p in {1,2,4}");

    v.next_stream();
    double sym = 0.0, tri = -std::numeric_limits<double>::infinity();
    double permuted = 0.0;
    for (int t = 0; t < 20; ++t) {
        const auto a = v.random_ensemble(8, 2, -2.0, 2.0);
        const auto b = v.random_ensemble(8, 2, -2.0, 2.0);
        const auto c = v.random_ensemble(8, 2, -2.0, 2.0);
        const double ab = cbo::wasserstein_assignment(a, b, 2.0);
        const double ba = cbo::wasserstein_assignment(b, a, 2.0);
        const double bc = cbo::wasserstein_assignment(b, c, 2.0);
        const double ac = cbo::wasserstein_assignment(a, c, 2.0);
        sym = std::max(sym, std::abs(ab - ba));
        tri = std::max(tri, ac - (ab + bc));
        cbo::Ensemble ap = a;
        for (std::size_t i = 0; i < a.n; ++i) {
            const auto src = a.point(a.n - 1 - i);
            std::copy(src.begin(), src.end(),
                      ap.points.begin() +
                          static_cast<std::ptrdiff_t>(i * a.dim));
        }
        permuted = std::max(permuted, cbo::wasserstein_assignment(a, ap, 2.0));
    }
    v.add("wasserstein_symmetry", sym <= 1e-12, 1e-12 - sym,
          "20 random pairs");
    v.add("wasserstein_triangle", tri <= 1e-12, 1e-12 - tri,
          "20 random triples, W(a,c) - W(a,b) - W(b,c)");
    v.add("wasserstein_zero_on_permutation", permuted <= 1e-12,
          1e-12 - permuted, "row-reversed copies");

    v.next_stream();
    double cross = 0.0;
    for (int t = 0; t < 20; ++t) {
        const auto a = v.random_ensemble(16, 1, -5.0, 5.0);
        const auto b = v.random_ensemble(16, 1, -5.0, 5.0);
        const double exact = cbo::wasserstein_assignment(a, b, 2.0);
        const double mono = cbo::wasserstein_1d(a.points, b.points, 2.0);
        cross = std::max(cross, std::abs(exact - mono));
    }
    v.add("wasserstein_1d_consistency", cross <= 1e-12, 1e-12 - cross,
          "assignment vs monotone coupling in 1-D");

    v.next_stream();
    double phi_excess = -std::numeric_limits<double>::infinity();
    const cbo::TruncationConfig tc{2.0, 2.0};
    for (int t = 0; t < 100; ++t) {
        const auto a = v.random_ensemble(8, 2, -3.0, 3.0);
        const auto b = v.random_ensemble(8, 2, -3.0, 3.0);
        const double lhs = std::abs(cbo::truncation_phi(a, tc) -
                                    cbo::truncation_phi(b, tc));
        const double rhs = cbo::cutoff_lipschitz *
                           cbo::wasserstein_assignment(a, b, 2.0);
        phi_excess = std::max(phi_excess, lhs - rhs * (1.0 + 1e-9));
    }
    v.add("phi_lipschitz_in_wasserstein", phi_excess <= 1e-15,
          1e-15 - phi_excess, "|phi(a)-phi(b)| vs (15/8) W_2 on 100 pairs");
}

void check_path_distance(Verifier& v) {
    v.next_stream();
    double monotone_violation = 0.0;
    double upper_violation = -std::numeric_limits<double>::infinity();
    for (int t = 0; t < 20; ++t) {
        cbo::MeasureCurve a, b;
        const std::size_t n = 64, d = 2, K = 5;
        for (std::size_t k = 0; k <= K; ++k) {
            a.times.push_back(0.1 * static_cast<double>(k));
            b.times.push_back(0.1 * static_cast<double>(k));
            a.frames.push_back(v.random_ensemble(n, d, -2.0, 2.0));
            b.frames.push_back(v.random_ensemble(n, d, -2.0, 2.0));
        }
        double prev = 0.0;
        for (std::size_t k = 0; k <= K; ++k) {
            const double cur = cbo::path_distance_upper(a, b, 2.0, k);
            monotone_violation = std::max(monotone_violation, prev - cur);
            prev = cur;
            const double exact =
                cbo::wasserstein_assignment(a.frames[k], b.frames[k], 2.0);
            upper_violation = std::max(upper_violation, exact - cur);
        }
    }
    v.add("path_distance_monotone", monotone_violation <= 0.0,
          -monotone_violation, "nondecreasing in the frame index");
    v.add("path_distance_upper_bounds_exact",
          upper_violation <= 1e-12, 1e-12 - upper_violation,
          "coupled bound vs exact assignment distance per frame");
}

void check_consensus(Verifier& v) {
    const auto quad = cbo::builtin_objective("quadratic", 1);
    v.next_stream();
    bool hull_exact = true;
    for (int t = 0; t < 50; ++t) {
        const auto e = v.random_ensemble(12, 1, -4.0, 4.0);
        const double m = cbo::consensus_point(e, quad, v.u(0.1, 30.0))[0];
        const auto [lo, hi] =
            std::minmax_element(e.points.begin(), e.points.end());
        if (m < *lo || m > *hi) hull_exact = false;
    }
    v.add("consensus_hull_1d_exact", hull_exact, 0.0,
          "min <= consensus <= max, exact comparisons, 50 ensembles");

    const auto quad2 = cbo::builtin_objective("quadratic", 2);
    v.next_stream();
    double weight_dev = 0.0;
    for (int t = 0; t < 20; ++t) {
        const auto e = v.random_ensemble(10, 2, -2.0, 2.0);
        const double beta = v.u(0.5, 10.0);
        const auto m = cbo::consensus_point(e, quad2, beta);
        // direct softmax evaluation as the oracle
        double wsum = 0.0;
        std::vector<double> ref(2, 0.0), w(e.n);
        double amax = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < e.n; ++i)
            amax = std::max(amax, -beta * cbo::builtin::quadratic(e.point(i)));
        for (std::size_t i = 0; i < e.n; ++i) {
            w[i] = std::exp(-beta * cbo::builtin::quadratic(e.point(i)) - amax);
            wsum += w[i];
        }
        double normsum = 0.0;
        for (std::size_t i = 0; i < e.n; ++i) {
            normsum += w[i] / wsum;
            for (std::size_t jx = 0; jx < 2; ++jx)
                ref[jx] += (w[i] / wsum) * e.point(i)[jx];
        }
        weight_dev = std::max(weight_dev, std::abs(normsum - 1.0));
        weight_dev = std::max(weight_dev, frob_diff(m, ref));
    }
    v.add("consensus_matches_direct_weights", weight_dev <= 1e-12,
          1e-12 - weight_dev, "normalized weights sum to 1 and reproduce M");

    v.next_stream();
    double shift_dev = 0.0;
    for (int t = 0; t < 20; ++t) {
        const auto e = v.random_ensemble(10, 2, -2.0, 2.0);
        cbo::ObjectiveFunction shifted = quad2;
        shifted.eval = [](std::span<const double> x) {
            return cbo::builtin::quadratic(x) + 1234.5;
        };
        shift_dev = std::max(
            shift_dev, frob_diff(cbo::consensus_point(e, quad2, 3.0),
                                 cbo::consensus_point(e, shifted, 3.0)));
    }
    v.add("consensus_shift_invariance", shift_dev <= 1e-12, 1e-12 - shift_dev,
          "f vs f + constant");

    v.next_stream();
    double argmin_dev = 0.0;
    for (int t = 0; t < 20; ++t) {
        auto e = v.random_ensemble(10, 2, -2.0, 2.0);
        // force a unique minimizer with a definite gap
        e.points[0] = 0.01;
        e.points[1] = -0.01;
        double range = 0.0, diam = 0.0;
        for (std::size_t i = 0; i < e.n; ++i) {
            range = std::max(range, cbo::builtin::quadratic(e.point(i)));
            for (std::size_t jx = 0; jx < e.n; ++jx) {
                double s = 0.0;
                for (std::size_t k = 0; k < 2; ++k) {
                    const double dd = e.point(i)[k] - e.point(jx)[k];
                    s += dd * dd;
                }
                diam = std::max(diam, std::sqrt(s));
            }
        }
        const auto m = cbo::consensus_point(e, quad2, 1e4 / range);
        double dev = 0.0;
        for (std::size_t k = 0; k < 2; ++k) {
            const double dd = m[k] - e.point(0)[k];
            dev += dd * dd;
        }
        argmin_dev = std::max(argmin_dev, std::sqrt(dev) - 1e-6 * diam);
    }
    v.add("consensus_argmin_limit", argmin_dev <= 0.0, -argmin_dev,
          "beta = 1e4/range pins the unique minimizer");

    v.next_stream();
    double mean_dev = 0.0;
    for (int t = 0; t < 20; ++t) {
        const auto e = v.random_ensemble(10, 2, -2.0, 2.0);
        const auto m = cbo::consensus_point(e, quad2, 1e-12);
        std::vector<double> mean(2, 0.0);
        for (std::size_t i = 0; i < e.n; ++i)
            for (std::size_t k = 0; k < 2; ++k)
                mean[k] += e.point(i)[k] / static_cast<double>(e.n);
        mean_dev = std::max(mean_dev, frob_diff(m, mean));
    }
    v.add("consensus_beta_to_zero_mean", mean_dev <= 1e-9, 1e-9 - mean_dev,
          "beta -> 0 limit is the arithmetic mean");

    v.next_stream();
    bool hull_ok = true;
    for (int t = 0; t < 20; ++t) {
        const auto e = v.random_ensemble(15, 2, -3.0, 3.0);
        const auto rep =
            cbo::sublinearity_check(e, quad2, v.u(0.5, 20.0), 2.0, 1.0);
        hull_ok = hull_ok && rep.hull_bound_ok;
    }
    v.add("sublinearity_hull_bound", hull_ok, 0.0,
          "consensus norm under max particle norm");
}

void check_fields(Verifier& v) {
    const auto zero2 = std::vector<double>{0.0, 0.0};
    const auto d1 = cbo::drift_field(std::vector<double>{1.0, 0.0}, zero2, 2.0);
    const bool drift_ok = d1[0] == -2.0 && d1[1] == 0.0 &&
                          norm_of(cbo::drift_field(zero2, zero2, 3.0)) == 0.0;
    v.add("drift_formula", drift_ok, 0.0, "-lambda (x - m), zero at x = m");

    const auto iso = cbo::isotropic_diffusion(0.5, 2);
    const auto aniso = cbo::anisotropic_diffusion(0.5);
    const auto s0 =
        cbo::diffusion_apply(iso, zero2, std::vector<double>{7.0, -1.0});
    const auto s0a =
        cbo::diffusion_apply(aniso, zero2, std::vector<double>{7.0, -1.0});
    v.add("diffusion_vanishes_at_origin",
          norm_of(s0) == 0.0 && norm_of(s0a) == 0.0, 0.0, "S(0) = 0");

    const auto si = cbo::diffusion_apply(iso, std::vector<double>{3.0, 4.0},
                                         std::vector<double>{1.0, 0.0});
    const auto sa = cbo::diffusion_apply(aniso, std::vector<double>{3.0, 4.0},
                                         std::vector<double>{1.0, 1.0});
    const double dev = std::max({std::abs(si[0] - 5.0), std::abs(si[1]),
                                 std::abs(sa[0] - 3.0), std::abs(sa[1] - 4.0)});
    v.add("diffusion_hand_values", dev <= 1e-12, 1e-12 - dev,
          "isotropic scales by |u|, anisotropic elementwise");

    v.next_stream();
    double excess = -std::numeric_limits<double>::infinity();
    for (int t = 0; t < 100; ++t) {
        const std::size_t d = 3;
        std::vector<double> uu(d), vv(d), xi(d);
        for (auto& x : uu) x = v.u(-2.0, 2.0);
        for (auto& x : vv) x = v.u(-2.0, 2.0);
        const auto mi = cbo::isotropic_diffusion(0.7, d);
        const auto ma = cbo::anisotropic_diffusion(0.7);
        // Frobenius norms computed from the explicit matrices
        double du = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
            const double dd = uu[k] - vv[k];
            du += dd * dd;
        }
        du = std::sqrt(du);
        const double fi = std::sqrt(2.0 * 0.7) *
                          std::abs(norm_of(uu) - norm_of(vv)) *
                          std::sqrt(static_cast<double>(d));
        double fa = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
            const double dd = uu[k] - vv[k];
            fa += 2.0 * 0.7 * dd * dd;
        }
        fa = std::sqrt(fa);
        excess = std::max(excess, fi - mi.L_S * du);
        excess = std::max(excess, fa - ma.L_S * du);
    }
    v.add("diffusion_lipschitz_certified", excess <= 1e-12, 1e-12 - excess,
          "Frobenius increments against L_S over 100 pairs");
}

void check_dynamics(Verifier& v) {
    const auto quad = cbo::builtin_objective("quadratic", 2);
    cbo::CboParams prm;
    prm.lambda = 1.0;
    prm.beta = 5.0;
    prm.T = 0.5;
    prm.dt = 0.01;
    prm.n = 16;
    prm.seed = 99;

    cbo::Ensemble same;
    same.n = 16;
    same.dim = 2;
    same.points.assign(32, 0.75);
    const auto model = cbo::isotropic_diffusion(0.25, 2);
    auto st = cbo::make_state(prm, same);
    const auto st2 = cbo::em_step(st, prm, model, quad);
    double dev = 0.0;
    for (std::size_t i = 0; i < same.points.size(); ++i)
        dev = std::max(dev,
                       std::abs(st2.ensemble.points[i] - same.points[i]));
    v.add("em_fixed_point_at_consensus", dev == 0.0, dev,
          "coinciding particles do not move");

    // hand-checked deterministic step
    const auto line = cbo::ObjectiveFunction{
        [](std::span<const double> x) { return x[0]; },
        {.s = 0.0, .ell = 0.0, .L_f = 1.0},
        1};
    cbo::Ensemble two;
    two.n = 2;
    two.dim = 1;
    two.points = {0.0, 1.0};
    cbo::CboParams prm2;
    prm2.lambda = 1.0;
    prm2.beta = std::log(3.0);
    prm2.T = 0.5;
    prm2.dt = 0.5;
    prm2.n = 2;
    const auto zero_map = cbo::custom_diffusion(
        [](std::span<const double>, std::span<const double>,
           std::span<double> out) {
            for (auto& x : out) x = 0.0;
        },
        0.0);
    const auto stepped =
        cbo::em_step(cbo::make_state(prm2, two), prm2, zero_map, line);
    const double hand = std::max(std::abs(stepped.ensemble.points[0] - 0.125),
                                 std::abs(stepped.ensemble.points[1] - 0.625));
    v.add("em_hand_step", hand <= 1e-12, 1e-12 - hand,
          "two particles, deterministic drift, one half step");

    // phi = 1 branch is bitwise inert
    v.next_stream();
    auto e = v.random_ensemble(16, 2, -1.0, 1.0);
    auto st3 = cbo::make_state(prm, e);
    const auto plain = cbo::em_step(st3, prm, model, quad);
    const auto truncd = cbo::em_step(st3, prm, model, quad,
                                     cbo::TruncationConfig{1e6, 2.0});
    v.add("truncation_identity_branch",
          plain.ensemble.points == truncd.ensemble.points, 0.0,
          "R above the running moment leaves the step bitwise unchanged");

    // determinism across worker counts
    const auto saved = cbo::max_threads();
    cbo::set_max_threads(1);
    const auto run1 =
        cbo::run_particle_cbo(prm, model, quad, e);
    cbo::set_max_threads(4);
    const auto run4 =
        cbo::run_particle_cbo(prm, model, quad, e);
    cbo::set_max_threads(saved);
    v.add("determinism_across_threads",
          run1.final_ensemble.points == run4.final_ensemble.points &&
              run1.consensus == run4.consensus,
          0.0, "bitwise equal trajectories with 1 and 4 workers");
}

void check_meanfield(Verifier& v) {
    // Euler error against the exact linear ODE
    cbo::CboParams prm;
    prm.lambda = 1.0;
    prm.beta = 1.0;
    prm.T = 1.0;
    prm.dt = 0.01;
    prm.n = 1;
    prm.seed = 7;
    const auto zero_map = cbo::custom_diffusion(
        [](std::span<const double>, std::span<const double>,
           std::span<double> out) {
            for (auto& x : out) x = 0.0;
        },
        0.0);
    cbo::Ensemble x0;
    x0.n = 1;
    x0.dim = 1;
    x0.points = {2.0};
    const std::vector<double> zero_curve(prm.steps() + 1, 0.0);
    const auto curve = cbo::solve_auxiliary(zero_curve, x0, prm, zero_map);
    double worst = 0.0;
    for (std::size_t k = 0; k < curve.frames.size(); ++k) {
        const double expect = 2.0 * std::exp(-curve.times[k]);
        worst = std::max(worst,
                         std::abs(curve.frames[k].points[0] - expect));
    }
    const double allow = 5.0 * prm.dt * (1.0 + 2.0 + 0.0);
    v.add("auxiliary_matches_exact_ode", worst <= allow, allow - worst,
          "frozen zero curve, zero noise vs x0 exp(-lambda t)");

    const double c0 =
        cbo::moment_bound_constants(1.3, 4.0, 3.0, 0.9, 2.0, 0.0).C_0;
    v.add("moment_constants_unit_at_T0", c0 == 1.0, std::abs(c0 - 1.0),
          "C_0 = 1 when T = 0");

    // small fixed-point run: convergence, decreasing tail, moment bound
    const auto quad = cbo::builtin_objective("quadratic", 1);
    cbo::CboParams mf;
    mf.lambda = 1.0;
    mf.beta = 10.0;
    mf.T = 0.5;
    mf.dt = 0.025;
    mf.n = 1;
    mf.seed = 11;
    const auto model = cbo::isotropic_diffusion(0.1, 1);
    cbo::PicardConfig pc;
    pc.m_samples = 300;
    pc.max_iters = 25;
    pc.tol = 1e-2;
    pc.p = 2.0;
    const double R = 40.0;
    const auto res = cbo::truncated_meanfield_solve(
        R, pc, mf, model, quad, cbo::uniform_box_sampler(-2.0, 2.0));
    v.add("picard_converges_small_benchmark", res.converged,
          static_cast<double>(pc.max_iters - res.iterations),
          "tol 1e-2 within 25 iterations");
    double tail_increase = 0.0;
    for (std::size_t i = 5; i + 1 < res.history.size(); ++i)
        tail_increase = std::max(tail_increase,
                                 res.history[i + 1] - res.history[i]);
    v.add("picard_history_decreasing_tail", tail_increase <= 0.0,
          -tail_increase, "no increase after the burn-in iterations");

    const double C_0 =
        cbo::moment_bound_constants(mf.lambda, pc.p, 1.0, model.L_S, 1.0,
                                    mf.T)
            .C_0;
    const auto bound = cbo::verify_moment_bound(res.solution, C_0, pc.p);
    v.add("moment_bound_small_benchmark", bound.ratio <= 1.05,
          1.05 - bound.ratio, "sup m_p within C_0 m_p(0), slack 1.05");
    bool phi_one = true;
    for (double f : res.solution.phi) phi_one = phi_one && f == 1.0;
    v.add("truncation_inactive_for_large_R",
          phi_one && !res.solution.exit_index, 0.0,
          "phi identically 1 when R dominates C_0 m_p(0)");
}

int cmd_verify(const RunConfig& cfg) {
    Verifier v(cfg.params.seed);
    check_bdg(v);
    check_cutoff(v);
    check_measure(v);
    check_path_distance(v);
    check_consensus(v);
    check_fields(v);
    check_dynamics(v);
    check_meanfield(v);

    std::size_t n_pass = 0;
    json rows = json::array();
    for (const auto& c : v.checks()) {
        rows.push_back({{"name", c.name},
                        {"pass", c.pass},
                        {"margin", c.margin},
                        {"detail", c.detail}});
        if (c.pass) ++n_pass;
    }
    json report;
    report["checks"] = rows;
    report["n_pass"] = n_pass;
    report["n_fail"] = v.checks().size() - n_pass;
    report["all_pass"] = n_pass == v.checks().size();
    write_json(cfg.output_dir / "verify_report.json", report);

    for (const auto& c : v.checks())
        std::cout << (c.pass ? "PASS " : "FAIL ") << c.name << "\n";
    return n_pass == v.checks().size() ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"consensus-based optimization toolkit"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed_override;
    std::optional<std::string> out_override;
    std::vector<std::size_t> n_list;
    std::size_t reps = 0;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON config path")
            ->required();
        sub->add_option("--seed", seed_override, "override cbo.seed");
        sub->add_option("--out", out_override, "override output_dir");
    };
    auto* opt = app.add_subcommand("optimize", "run the particle system");
    add_common(opt);
    auto* mf = app.add_subcommand("meanfield", "solve the mean-field law");
    add_common(mf);
    auto* ver = app.add_subcommand("verify", "run the invariant suite");
    add_common(ver);
    auto* ch = app.add_subcommand("chaos", "particle-to-mean-field distances");
    add_common(ch);
    ch->add_option("--n-list", n_list, "particle counts (ascending)");
    ch->add_option("--reps", reps, "repetitions per count");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    }

    try {
        RunConfig cfg = parse_config(load_json(config_path));
        if (seed_override) cfg.params.seed = *seed_override;
        if (out_override) cfg.output_dir = *out_override;

        if (app.got_subcommand(opt)) return cmd_optimize(cfg);
        if (app.got_subcommand(mf)) return cmd_meanfield(cfg);
        if (app.got_subcommand(ver)) return cmd_verify(cfg);
        return cmd_chaos(cfg, n_list, reps);
    } catch (const cbo::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const cbo::UsageError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
