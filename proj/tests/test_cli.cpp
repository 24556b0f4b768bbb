#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <unistd.h>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

struct TempDir {
    static inline int counter_ = 0;
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("btlnmf_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter_++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

struct RunResult {
    int exit_code;
    std::string output;  // stdout + stderr
};

RunResult run_cli(const std::string& args, const fs::path& capture_dir) {
    const fs::path out_file = capture_dir / "cli_output.txt";
    const std::string command =
        std::string(BTLNMF_CLI_PATH) + " " + args + " > " + out_file.string() + " 2>&1";
    const int status = std::system(command.c_str());
    RunResult result;
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream in(out_file);
    std::stringstream buffer;
    buffer << in.rdbuf();
    result.output = buffer.str();
    return result;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

void write_file(const fs::path& p, const std::string& contents) {
    std::ofstream out(p);
    out << contents;
}

}  // namespace

TEST_CASE("synth is deterministic and fit consumes its output") {
    TempDir tmp;
    const auto synth_a = run_cli("synth --m 3 --n 5 --k 2 --games 4 --seed 9 --out " +
                                     (tmp.path / "a").string(),
                                 tmp.path);
    REQUIRE(synth_a.exit_code == 0);
    const auto synth_b = run_cli("synth --m 3 --n 5 --k 2 --games 4 --seed 9 --out " +
                                     (tmp.path / "b").string(),
                                 tmp.path);
    REQUIRE(synth_b.exit_code == 0);
    CHECK(slurp(tmp.path / "a" / "synthetic.csv") == slurp(tmp.path / "b" / "synthetic.csv"));
    CHECK(fs::exists(tmp.path / "a" / "W_true.csv"));
    CHECK(fs::exists(tmp.path / "a" / "H_true.csv"));
    CHECK(fs::exists(tmp.path / "a" / "run_manifest.json"));

    const auto fit = run_cli(
        "fit --data " + (tmp.path / "a" / "synthetic.csv").string() + " --manifest " +
            (tmp.path / "a" / "synthetic_manifest.json").string() + " --k 2 --seed 3 " +
            "--max-iters 2000 --strict-monotone --out " + (tmp.path / "fit").string(),
        tmp.path);
    REQUIRE(fit.exit_code == 0);
    CHECK(fit.output.find("objective:") != std::string::npos);
    CHECK(fit.output.find("stationarity residual:") != std::string::npos);
    CHECK(fs::exists(tmp.path / "fit" / "result.json"));
    CHECK(fs::exists(tmp.path / "fit" / "W.csv"));
    CHECK(fs::exists(tmp.path / "fit" / "lambda.csv"));
    CHECK(fs::exists(tmp.path / "fit" / "trace.csv"));
    const std::string manifest = slurp(tmp.path / "fit" / "run_manifest.json");
    CHECK(manifest.find("dataset_hash") != std::string::npos);
    CHECK(manifest.find("fnv1a64:") != std::string::npos);
    CHECK(manifest.find("tool_version") != std::string::npos);

    // Re-running the same fit produces an identical result document.
    const auto fit_again = run_cli(
        "fit --data " + (tmp.path / "a" / "synthetic.csv").string() + " --manifest " +
            (tmp.path / "a" / "synthetic_manifest.json").string() + " --k 2 --seed 3 " +
            "--max-iters 2000 --out " + (tmp.path / "fit2").string(),
        tmp.path);
    REQUIRE(fit_again.exit_code == 0);
    CHECK(slurp(tmp.path / "fit" / "result.json") == slurp(tmp.path / "fit2" / "result.json"));

    const auto diag = run_cli("diag --data " + (tmp.path / "a" / "synthetic.csv").string() +
                                  " --manifest " +
                                  (tmp.path / "a" / "synthetic_manifest.json").string() +
                                  " --result " + (tmp.path / "fit" / "result.json").string(),
                              tmp.path);
    REQUIRE(diag.exit_code == 0);
    CHECK(diag.output.find("stationarity residual:") != std::string::npos);
    CHECK(diag.output.find("finite-difference max relative error") != std::string::npos);
}

TEST_CASE("fit with restarts writes the objective histogram data") {
    TempDir tmp;
    REQUIRE(run_cli("synth --m 2 --n 4 --k 2 --games 3 --seed 1 --out " +
                        (tmp.path / "d").string(),
                    tmp.path)
                .exit_code == 0);
    const auto fit = run_cli("fit --data " + (tmp.path / "d" / "synthetic.csv").string() +
                                 " --k 2 --restarts 4 --seed 5 --max-iters 500 --out " +
                                 (tmp.path / "fit").string(),
                             tmp.path);
    REQUIRE(fit.exit_code == 0);
    const std::string histogram = slurp(tmp.path / "fit" / "all_objectives.csv");
    CHECK(histogram.find("restart,objective") != std::string::npos);
    int lines = 0;
    for (char c : histogram) {
        if (c == '\n') ++lines;
    }
    CHECK(lines == 5);  // header + 4 restarts
}

TEST_CASE("restart results do not depend on RANK_THREADS") {
    TempDir tmp;
    REQUIRE(run_cli("synth --m 3 --n 4 --k 2 --games 3 --seed 8 --out " +
                        (tmp.path / "d").string(),
                    tmp.path)
                .exit_code == 0);
    const std::string common = std::string(" fit --data ") +
                               (tmp.path / "d" / "synthetic.csv").string() +
                               " --k 2 --restarts 4 --seed 9 --max-iters 400 --out ";
    REQUIRE(std::system(("env RANK_THREADS=1 " BTLNMF_CLI_PATH + common +
                         (tmp.path / "one").string() + " > /dev/null 2>&1")
                            .c_str()) == 0);
    REQUIRE(std::system(("env RANK_THREADS=2 " BTLNMF_CLI_PATH + common +
                         (tmp.path / "two").string() + " > /dev/null 2>&1")
                            .c_str()) == 0);
    CHECK(slurp(tmp.path / "one" / "all_objectives.csv") ==
          slurp(tmp.path / "two" / "all_objectives.csv"));
    CHECK(slurp(tmp.path / "one" / "result.json") == slurp(tmp.path / "two" / "result.json"));
}

TEST_CASE("usage errors exit with code 1") {
    TempDir tmp;
    write_file(tmp.path / "d.csv", "tournament,winner,loser,wins\nT1,A,B,1\nT1,B,A,1\n");
    CHECK(run_cli("fit --data " + (tmp.path / "d.csv").string() + " --k 0 --out " +
                      (tmp.path / "o").string(),
                  tmp.path)
              .exit_code == 1);
    CHECK(run_cli("fit --out " + (tmp.path / "o").string(), tmp.path).exit_code == 1);
    CHECK(run_cli("definitely-not-a-command", tmp.path).exit_code == 1);
    write_file(tmp.path / "bad.csv", "tournament,winner,loser,wins\nT1,A,A,1\n");
    CHECK(run_cli("audit --data " + (tmp.path / "bad.csv").string(), tmp.path).exit_code == 1);
}

TEST_CASE("identifiability problems exit with code 2") {
    TempDir tmp;
    write_file(tmp.path / "split.csv",
               "tournament,winner,loser,wins\nT1,A,B,1\nT1,B,A,1\nT1,C,D,2\nT1,D,C,1\n");
    const auto result = run_cli("baseline btl --data " + (tmp.path / "split.csv").string(),
                                tmp.path);
    CHECK(result.exit_code == 2);
    CHECK(result.output.find("disconnected") != std::string::npos);
}

TEST_CASE("baseline btl prints the closed-form two-player solution") {
    TempDir tmp;
    write_file(tmp.path / "two.csv", "tournament,winner,loser,wins\nT1,A,B,3\nT1,B,A,1\n");
    const auto result = run_cli("baseline btl --data " + (tmp.path / "two.csv").string(),
                                tmp.path);
    REQUIRE(result.exit_code == 0);
    CHECK(result.output.find("A,0.75") != std::string::npos);
    CHECK(result.output.find("B,0.25") != std::string::npos);
    CHECK(result.output.find("log_likelihood,") != std::string::npos);
}

TEST_CASE("baseline mixture reports dispersion across restarts") {
    TempDir tmp;
    write_file(tmp.path / "d.csv",
               "tournament,winner,loser,wins\nT1,A,B,5\nT1,B,A,2\nT1,A,C,4\nT1,C,A,3\n"
               "T1,B,C,2\nT1,C,B,6\n");
    const auto result = run_cli("baseline mixture --k 2 --restarts 5 --seed 2 --data " +
                                    (tmp.path / "d.csv").string() + " --out " +
                                    (tmp.path / "mix").string(),
                                tmp.path);
    REQUIRE(result.exit_code == 0);
    CHECK(result.output.find("log_likelihood,") != std::string::npos);
    CHECK(result.output.find("within 1.0 of best") != std::string::npos);
    CHECK(fs::exists(tmp.path / "mix" / "restart_loglik.csv"));
    CHECK(fs::exists(tmp.path / "mix" / "mixture_baseline.csv"));
}

TEST_CASE("audit prints the four-way split") {
    TempDir tmp;
    write_file(tmp.path / "d.csv", "tournament,winner,loser,wins\nT1,A,B,2\n");
    const auto result = run_cli("audit --data " + (tmp.path / "d.csv").string() + " --csv " +
                                    (tmp.path / "audit.csv").string(),
                                tmp.path);
    REQUIRE(result.exit_code == 0);
    CHECK(result.output.find("nonzero") != std::string::npos);
    CHECK(result.output.find("true zeros") != std::string::npos);
    const std::string csv = slurp(tmp.path / "audit.csv");
    CHECK(csv.find("nonzero,1,25") != std::string::npos);
    CHECK(csv.find("true_zeros,1,25") != std::string::npos);

    write_file(tmp.path / "empty.csv", "");
    write_file(tmp.path / "m.json", R"({"players": ["A", "B"], "tournaments": ["T1"]})");
    const auto empty = run_cli("audit --data " + (tmp.path / "empty.csv").string() +
                                   " --manifest " + (tmp.path / "m.json").string(),
                               tmp.path);
    REQUIRE(empty.exit_code == 0);
    CHECK(empty.output.find("nonzero                       0") != std::string::npos);
}
