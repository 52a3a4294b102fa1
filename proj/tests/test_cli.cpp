#include <catch2/catch.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "fairfed/config.hpp"

namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args) {
    const std::string cmd = std::string(FAIRFED_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    return dir;
}

// A fast throwaway experiment so CLI paths stay quick to exercise.
fs::path small_config() {
    const fs::path path = fs::temp_directory_path() / "fairfed_cli_small.conf";
    std::ofstream out(path);
    out << "dataset = synthetic\n"
        << "synth_per_group = 200\n"
        << "synth_dim = 8\n"
        << "synth_separation = 10.0\n"
        << "synth_minority_share = 0.5\n"
        << "num_clients = 4\n"
        << "noise_plan = 0, 0, 0.3, 0.3\n"
        << "algorithm = mwr\n"
        << "eta_mu = -0.003\n"
        << "rounds = 3\n"
        << "lr = 0.05\n"
        << "batch_size = 32\n"
        << "seed = 5\n";
    return path;
}

} // namespace

TEST_CASE("run emits the full artifact set") {
    const auto dir = fresh_dir("fairfed_cli_run");
    const int status =
        run_cli("run --config " + small_config().string() + " --output " + dir.string());
    REQUIRE(status == 0);
    for (const char* name : {"config.echo", "log.jsonl", "report.json", "report.csv"})
        REQUIRE(fs::exists(dir / name));
    REQUIRE(fs::exists(dir / "checkpoints" / "round_000.bin"));
    REQUIRE(fs::exists(dir / "checkpoints" / "round_002.bin"));

    // one startup record plus rounds x clients round records
    std::istringstream log(slurp(dir / "log.jsonl"));
    std::string line;
    int startups = 0, rounds = 0;
    while (std::getline(log, line)) {
        const auto rec = nlohmann::json::parse(line);
        if (rec.at("record") == "startup") startups++;
        if (rec.at("record") == "round") rounds++;
    }
    REQUIRE(startups == 1);
    REQUIRE(rounds == 3 * 4);

    // the echoed config parses back to a valid, identical echo
    const auto echoed = fairfed::parse_config((dir / "config.echo").string());
    REQUIRE(fairfed::echo_config(echoed) == slurp(dir / "config.echo"));
}

TEST_CASE("reruns are byte-identical and flags override the file") {
    const auto dir_a = fresh_dir("fairfed_cli_a");
    const auto dir_b = fresh_dir("fairfed_cli_b");
    const auto cfg = small_config().string();
    REQUIRE(run_cli("run --config " + cfg + " --output " + dir_a.string()) == 0);
    REQUIRE(run_cli("run --config " + cfg + " --output " + dir_b.string()) == 0);
    REQUIRE(slurp(dir_a / "report.json") == slurp(dir_b / "report.json"));

    const auto dir_c = fresh_dir("fairfed_cli_c");
    REQUIRE(run_cli("run --config " + cfg + " --seed 6 --output " + dir_c.string()) == 0);
    const auto rep = nlohmann::json::parse(slurp(dir_c / "report.json"));
    REQUIRE(rep.at("seed") == 6);
}

TEST_CASE("fedavg and mwr runs produce comparable reports") {
    const auto dir_fa = fresh_dir("fairfed_cli_fa");
    const auto dir_mw = fresh_dir("fairfed_cli_mw");
    const auto cfg = small_config().string();
    REQUIRE(run_cli("run --config " + cfg + " --algorithm fedavg --output " + dir_fa.string()) == 0);
    REQUIRE(run_cli("run --config " + cfg + " --algorithm mwr --output " + dir_mw.string()) == 0);
    const auto fa = nlohmann::json::parse(slurp(dir_fa / "report.json"));
    const auto mw = nlohmann::json::parse(slurp(dir_mw / "report.json"));
    REQUIRE(fa.at("algorithm") == "fedavg");
    REQUIRE(mw.at("algorithm") == "mwr");
    REQUIRE(fa.at("clients").size() == mw.at("clients").size());
}

TEST_CASE("fail-on-threshold exits cleanly when no violation occurs") {
    const auto dir = fresh_dir("fairfed_cli_thresh");
    REQUIRE(run_cli("run --config " + small_config().string() + " --fail-on-threshold --output " +
                    dir.string()) == 0);
}

TEST_CASE("sweep writes one run per value plus a summary") {
    const auto dir = fresh_dir("fairfed_cli_sweep");
    const int status = run_cli("sweep --config " + small_config().string() +
                               " --vary eta_mu=-0.009,-0.003,-0.001,-0.0002 --output " +
                               dir.string());
    REQUIRE(status == 0);
    int reports = 0;
    for (const char* v : {"-0.009", "-0.003", "-0.001", "-0.0002"}) {
        const fs::path run_dir = dir / (std::string("eta_mu_") + v);
        REQUIRE(fs::exists(run_dir / "report.json"));
        reports++;
    }
    REQUIRE(reports == 4);
    REQUIRE(fs::exists(dir / "sweep_summary.csv"));
    std::istringstream csv(slurp(dir / "sweep_summary.csv"));
    std::string line;
    int rows = 0;
    while (std::getline(csv, line))
        if (!line.empty()) rows++;
    REQUIRE(rows == 1 + 4 + 2); // header, four runs, mean and sd rows
}

TEST_CASE("bad configs fail with a nonzero status") {
    const fs::path bad = fs::temp_directory_path() / "fairfed_cli_bad.conf";
    std::ofstream(bad) << "nonsense_key = 1\n";
    REQUIRE(run_cli("run --config " + bad.string() + " --output /tmp/fairfed_never") != 0);
    REQUIRE(run_cli("run --config /definitely/missing.conf") != 0);
}
