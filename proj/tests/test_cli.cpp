#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct CmdResult {
    int exit_code = -1;
    std::string output;  // stdout + stderr
};

CmdResult run_cli(const std::string& args) {
    const std::string cmd = std::string(METAPDE_CLI_PATH) + " " + args + " 2>&1";
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    CmdResult r;
    std::array<char, 4096> buf;
    while (fgets(buf.data(), buf.size(), pipe)) r.output += buf.data();
    const int status = pclose(pipe);
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

fs::path write_tiny_config() {
    const fs::path p = fs::temp_directory_path() / "metapde_cli_cfg.json";
    std::ofstream out(p);
    out << R"({
  "suite": {
    "pde": {"grid_n": 32, "fourier_cutoff": 3, "dt_solver": 1e-3, "dt_save": 5e-3, "n_frames": 8},
    "tasks": 2, "n_nodes_min": 12, "n_nodes_max": 12, "k_neighbors": 3, "split_k": 4,
    "master_seed": 3
  },
  "model": {"sdm_hidden": 4, "tdm_hidden": 4, "rgn_hidden": 4},
  "meta": {"epochs": 2, "adapt_epochs": 2}
})";
    return p;
}

}  // namespace

TEST_CASE("fdm subcommand prints exact coefficients") {
    CmdResult r = run_cli("fdm --offsets -1,0,1 --order 2");
    CHECK(r.exit_code == 0);
    CHECK(r.output == "1 -2 1\n");
    r = run_cli("fdm --offsets 0,1 --order 1");
    CHECK(r.output == "-1 1\n");
}

TEST_CASE("scratch training refuses meta-suite flags") {
    CmdResult r = run_cli("train --preset desk --suite /nonexistent --out /tmp/x --variant scratch --beta 0.5");
    CHECK(r.exit_code == 1);
    CHECK(r.output.find("--beta") != std::string::npos);
}

TEST_CASE("config and preset are mutually exclusive and one is required") {
    CmdResult r = run_cli("generate --preset desk --config /tmp/c.json --out /tmp/x");
    CHECK(r.exit_code == 1);
    CHECK(r.output.find("not both") != std::string::npos);
    r = run_cli("generate --out /tmp/x");
    CHECK(r.exit_code == 1);
}

TEST_CASE("generate_rerun_produces_identical_bytes_across_threads") {
    const fs::path cfg = write_tiny_config();
    const fs::path out1 = fs::temp_directory_path() / "metapde_cli_gen1";
    const fs::path out2 = fs::temp_directory_path() / "metapde_cli_gen2";
    fs::remove_all(out1);
    fs::remove_all(out2);
    CmdResult r1 = run_cli("generate --config " + cfg.string() + " --threads 1 --out " + out1.string());
    REQUIRE(r1.exit_code == 0);
    CmdResult r2 = run_cli("generate --config " + cfg.string() + " --threads 2 --out " + out2.string());
    REQUIRE(r2.exit_code == 0);
    CHECK(slurp(out1 / "suite.json") == slurp(out2 / "suite.json"));
    CHECK(slurp(out1 / "task_0000" / "frames.csv") == slurp(out2 / "task_0000" / "frames.csv"));
    CHECK(slurp(out1 / "task_0000" / "meta.json") == slurp(out2 / "task_0000" / "meta.json"));
    fs::remove_all(out1);
    fs::remove_all(out2);
    fs::remove(cfg);
}

TEST_CASE("invalid config quarantines instead of committing") {
    const fs::path cfg = fs::temp_directory_path() / "metapde_cli_badcfg.json";
    {
        std::ofstream out(cfg);
        out << R"({"suite": {"pde": {"grid_n": 4}}})";  // grid too small
    }
    const fs::path dir = fs::temp_directory_path() / "metapde_cli_bad";
    fs::remove_all(dir);
    fs::remove_all(dir.string() + ".incomplete");
    CmdResult r = run_cli("generate --config " + cfg.string() + " --out " + dir.string());
    CHECK(r.exit_code == 1);
    CHECK(!fs::exists(dir));
    fs::remove_all(dir.string() + ".incomplete");
    fs::remove(cfg);
}
