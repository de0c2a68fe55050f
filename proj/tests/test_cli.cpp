#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include <sys/wait.h>

#include <json.hpp>

#include "cbo/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path& work_root() {
    static const fs::path dir = [] {
        const fs::path d = fs::temp_directory_path() / "cbo_cli_tests";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

fs::path case_dir(const char* leaf) {
    const fs::path d = work_root() / leaf;
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    REQUIRE(f.good());
    return {std::istreambuf_iterator<char>(f),
            std::istreambuf_iterator<char>()};
}

int run_cli(const std::string& args, const fs::path& log) {
    const std::string cmd = std::string(CBO_CLI_PATH) + " " + args + " > " +
                            log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    REQUIRE(WIFEXITED(status));
    return WEXITSTATUS(status);
}

json optimize_config(const fs::path& out) {
    json j;
    j["objective"] = {{"name", "quadratic"}, {"dim", 2}};
    j["cbo"] = {{"lambda", 1.0}, {"beta", 30.0}, {"T", 2.0}, {"dt", 0.01},
                {"n", 200}, {"seed", 3}};
    j["diffusion"] = {{"kind", "isotropic"}, {"theta", 0.25}};
    j["init"] = {{"kind", "uniform_box"}, {"lo", -2.0}, {"hi", 2.0}};
    j["output_dir"] = out.string();
    return j;
}

json meanfield_config(const fs::path& out) {
    json j;
    j["objective"] = {{"name", "quadratic"}, {"dim", 1}};
    j["cbo"] = {{"lambda", 1.0}, {"beta", 10.0}, {"T", 0.5}, {"dt", 0.025},
                {"n", 8}, {"seed", 11}};
    j["diffusion"] = {{"kind", "isotropic"}, {"theta", 0.1}};
    j["truncation"] = {{"R", 40.0}, {"p", 2.0}};
    j["picard"] = {{"m_samples", 200}, {"max_iters", 25}, {"tol", 1e-2},
                   {"p", 2.0}};
    j["init"] = {{"kind", "uniform_box"}, {"lo", -2.0}, {"hi", 2.0}};
    j["output_dir"] = out.string();
    return j;
}

fs::path save_config(const fs::path& dir, const json& j) {
    const fs::path p = dir / "config.json";
    cbo::write_text_file(p, j.dump(2) + "\n");
    return p;
}

} // namespace

TEST_CASE("cli optimize solves the quadratic benchmark") {
    const auto dir = case_dir("optimize");
    const auto cfgp = save_config(dir, optimize_config(dir / "out"));
    const int rc = run_cli("optimize --config " + cfgp.string(),
                           dir / "log.txt");
    INFO(slurp(dir / "log.txt"));
    REQUIRE(rc == 0);

    REQUIRE(fs::exists(dir / "out" / "trajectory.csv"));
    REQUIRE(fs::exists(dir / "out" / "final_ensemble.csv"));
    const auto summary = json::parse(slurp(dir / "out" / "summary.json"));
    CHECK(summary.at("best_f").get<double>() < 0.1);
    CHECK(summary.at("dim") == 2);
    CHECK(summary.at("consensus").size() == 2);
    CHECK(summary.at("threads").get<int>() >= 1);

    const std::string traj = slurp(dir / "out" / "trajectory.csv");
    CHECK(traj.rfind("t,consensus_0,consensus_1,best_f,moment_p\n", 0) == 0);
    CHECK(traj.find('\r') == std::string::npos);
}

TEST_CASE("cli reruns are byte-identical across seeds and threads") {
    const auto dir = case_dir("determinism");
    const auto cfgp = save_config(dir, optimize_config(dir / "unused"));

    auto run_into = [&](const std::string& extra, const char* out) {
        const int rc = run_cli("optimize --config " + cfgp.string() +
                                   " --out " + (dir / out).string() + extra,
                               dir / (std::string(out) + ".log"));
        REQUIRE(rc == 0);
    };

    setenv("CBO_THREADS", "1", 1);
    run_into("", "t1");
    setenv("CBO_THREADS", "8", 1);
    run_into("", "t8");
    unsetenv("CBO_THREADS");
    CHECK(slurp(dir / "t1" / "trajectory.csv") ==
          slurp(dir / "t8" / "trajectory.csv"));
    CHECK(slurp(dir / "t1" / "final_ensemble.csv") ==
          slurp(dir / "t8" / "final_ensemble.csv"));

    run_into(" --seed 5", "s5a");
    run_into(" --seed 5", "s5b");
    run_into(" --seed 6", "s6");
    CHECK(slurp(dir / "s5a" / "trajectory.csv") ==
          slurp(dir / "s5b" / "trajectory.csv"));
    CHECK(slurp(dir / "s5a" / "trajectory.csv") !=
          slurp(dir / "s6" / "trajectory.csv"));
}

TEST_CASE("cli config and usage errors exit with 2") {
    const auto dir = case_dir("config_errors");

    cbo::write_text_file(dir / "broken.json", "{ not json\n");
    CHECK(run_cli("optimize --config " + (dir / "broken.json").string(),
                  dir / "a.log") == 2);

    CHECK(run_cli("optimize --config " + (dir / "missing.json").string(),
                  dir / "b.log") == 2);

    auto bad = optimize_config(dir / "out");
    bad["cbo"]["dt"] = 4.0;  // dt > T
    CHECK(run_cli("optimize --config " + save_config(dir, bad).string(),
                  dir / "c.log") == 2);

    CHECK(run_cli("optimize", dir / "d.log") == 2);  // missing --config
    CHECK(run_cli("", dir / "e.log") == 2);          // missing subcommand

    auto badkind = optimize_config(dir / "out");
    badkind["diffusion"]["kind"] = "fancy";
    cbo::write_text_file(dir / "kind.json", badkind.dump() + "\n");
    CHECK(run_cli("optimize --config " + (dir / "kind.json").string(),
                  dir / "f.log") == 2);

    auto badinit = optimize_config(dir / "out");
    badinit["init"] = {{"kind", "point"}, {"at", {0.5}}};  // wrong length
    cbo::write_text_file(dir / "init.json", badinit.dump() + "\n");
    CHECK(run_cli("optimize --config " + (dir / "init.json").string(),
                  dir / "g.log") == 2);
}

TEST_CASE("cli meanfield produces the full artifact set") {
    const auto dir = case_dir("meanfield");
    const auto cfgp = save_config(dir, meanfield_config(dir / "out"));
    const int rc = run_cli("meanfield --config " + cfgp.string(),
                           dir / "log.txt");
    INFO(slurp(dir / "log.txt"));
    REQUIRE(rc == 0);

    for (const char* leaf :
         {"consensus.csv", "picard_history.csv", "final_ensemble.csv",
          "constants.json", "summary.json"})
        REQUIRE(fs::exists(dir / "out" / leaf));
    REQUIRE(fs::exists(dir / "out" / "curve" / "manifest.json"));
    REQUIRE(fs::exists(dir / "out" / "curve" / "frame_000000.csv"));

    const auto summary = json::parse(slurp(dir / "out" / "summary.json"));
    CHECK(summary.at("converged") == true);
    CHECK(summary.at("exit_index").is_null());
    CHECK(summary.at("moment_bound").at("pass") == true);

    const auto constants = json::parse(slurp(dir / "out" / "constants.json"));
    for (const char* key : {"p_M", "c_p", "L_v_tilde", "L_sigma_tilde", "C_1",
                            "C_0", "K_0", "K", "log_K", "picard_n", "inputs"})
        CHECK(constants.contains(key));
    CHECK(constants.at("C_0").get<double>() > 1.0);

    const auto manifest =
        json::parse(slurp(dir / "out" / "curve" / "manifest.json"));
    CHECK(manifest.at("n") == 200);
    CHECK(manifest.at("dim") == 1);
    CHECK(manifest.at("times").size() == 21);
    CHECK(manifest.at("frames").size() == 21);
}

TEST_CASE("cli meanfield reports non-convergence with exit 4") {
    const auto dir = case_dir("meanfield_stall");
    auto cfg = meanfield_config(dir / "out");
    cfg["picard"]["max_iters"] = 1;
    cfg["picard"]["tol"] = 1e-12;
    const auto cfgp = save_config(dir, cfg);
    const int rc = run_cli("meanfield --config " + cfgp.string(),
                           dir / "log.txt");
    CHECK(rc == 4);

    // artifacts are still written for post-mortem inspection
    REQUIRE(fs::exists(dir / "out" / "summary.json"));
    const auto summary = json::parse(slurp(dir / "out" / "summary.json"));
    CHECK(summary.at("converged") == false);
    CHECK(summary.at("iterations") == 1);
    const std::string hist = slurp(dir / "out" / "picard_history.csv");
    const std::string prefix = "iter,path_dist\n1,";
    REQUIRE(hist.rfind(prefix, 0) == 0);
    CHECK(std::strtod(hist.c_str() + prefix.size(), nullptr) ==
          summary.at("final_path_dist").get<double>());
}

TEST_CASE("cli meanfield records an immediate truncation exit") {
    const auto dir = case_dir("meanfield_exit");
    auto cfg = meanfield_config(dir / "out");
    cfg["truncation"]["R"] = 1e-3;
    const auto cfgp = save_config(dir, cfg);
    const int rc = run_cli("meanfield --config " + cfgp.string(),
                           dir / "log.txt");
    INFO(slurp(dir / "log.txt"));
    REQUIRE(rc == 0);
    const auto summary = json::parse(slurp(dir / "out" / "summary.json"));
    CHECK(summary.at("exit_index") == 0);
}

TEST_CASE("cli meanfield rejects inconsistent sections") {
    const auto dir = case_dir("meanfield_bad");
    auto nop = meanfield_config(dir / "out");
    nop.erase("truncation");
    CHECK(run_cli("meanfield --config " + save_config(dir, nop).string(),
                  dir / "a.log") == 2);

    auto mismatch = meanfield_config(dir / "out");
    mismatch["truncation"]["p"] = 4.0;
    cbo::write_text_file(dir / "m.json", mismatch.dump() + "\n");
    CHECK(run_cli("meanfield --config " + (dir / "m.json").string(),
                  dir / "b.log") == 2);
}

TEST_CASE("cli verify runs the invariant suite") {
    const auto dir = case_dir("verify");
    json cfg;
    cfg["output_dir"] = (dir / "out").string();
    const auto cfgp = save_config(dir, cfg);

    const int rc = run_cli("verify --config " + cfgp.string(),
                           dir / "log.txt");
    const std::string log = slurp(dir / "log.txt");
    INFO(log);
    REQUIRE(rc == 0);
    CHECK(log.find("PASS bdg_c2_equals_4") != std::string::npos);
    CHECK(log.find("FAIL") == std::string::npos);

    const auto report =
        json::parse(slurp(dir / "out" / "verify_report.json"));
    CHECK(report.at("all_pass") == true);
    CHECK(report.at("n_fail") == 0);
    CHECK(report.at("checks").size() >= 20);

    // a deliberately broken invariant must be caught, not smoothed over
    setenv("CBO_FAULT_INJECT", "cutoff-monotonicity", 1);
    const int rc_fault = run_cli("verify --config " + cfgp.string() +
                                     " --out " + (dir / "fault").string(),
                                 dir / "fault.log");
    unsetenv("CBO_FAULT_INJECT");
    CHECK(rc_fault == 1);
    CHECK(slurp(dir / "fault.log").find("FAIL cutoff_monotone") !=
          std::string::npos);
}

TEST_CASE("cli chaos writes the distance table") {
    const auto dir = case_dir("chaos");
    json cfg;
    cfg["objective"] = {{"name", "quadratic"}, {"dim", 1}};
    cfg["cbo"] = {{"lambda", 1.0}, {"beta", 10.0}, {"T", 0.25}, {"dt", 0.025},
                  {"n", 8}, {"seed", 17}};
    cfg["diffusion"] = {{"kind", "isotropic"}, {"theta", 0.1}};
    cfg["picard"] = {{"m_samples", 64}, {"max_iters", 25}, {"tol", 1e-2},
                     {"p", 2.0}};
    cfg["init"] = {{"kind", "uniform_box"}, {"lo", -2.0}, {"hi", 2.0}};
    cfg["chaos"] = {{"n_list", {8, 16}}, {"reps", 3}};
    cfg["output_dir"] = (dir / "out").string();
    const auto cfgp = save_config(dir, cfg);

    const int rc = run_cli("chaos --config " + cfgp.string(), dir / "log.txt");
    INFO(slurp(dir / "log.txt"));
    REQUIRE(rc == 0);

    const std::string csv = slurp(dir / "out" / "chaos.csv");
    CHECK(csv.rfind("N,rep,w_p\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 7);

    const auto summary =
        json::parse(slurp(dir / "out" / "chaos_summary.json"));
    CHECK(summary.at("medians").size() == 2);
    CHECK(summary.at("reps") == 3);

    // flag-driven overrides
    const int rc1 = run_cli("chaos --config " + cfgp.string() + " --out " +
                                (dir / "single").string() + " --n-list 8",
                            dir / "single.log");
    REQUIRE(rc1 == 0);
    const auto s1 =
        json::parse(slurp(dir / "single" / "chaos_summary.json"));
    CHECK(s1.at("medians").size() == 1);
    CHECK(s1.at("trend_nonincreasing") == true);

    CHECK(run_cli("chaos --config " + cfgp.string() + " --n-list 600",
                  dir / "big.log") == 2);
}
