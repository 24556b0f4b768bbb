#include <algorithm>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "btlnmf/baselines.hpp"
#include "btlnmf/data_io.hpp"
#include "btlnmf/diagnostics.hpp"
#include "btlnmf/format.hpp"
#include "btlnmf/model.hpp"
#include "btlnmf/solver.hpp"
#include "btlnmf/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitNumerical = 2;

std::string utc_timestamp() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buffer[32];
    std::strftime(buffer, sizeof(buffer), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buffer;
}

unsigned restart_threads_from_env() {
    const char* env = std::getenv("RANK_THREADS");
    if (env == nullptr) return 0;  // one thread per restart up to hardware parallelism
    char* end = nullptr;
    const unsigned long value = std::strtoul(env, &end, 10);
    if (end == env || *end != '\0' || value == 0) return 0;
    return static_cast<unsigned>(value);
}

void write_run_manifest(const fs::path& out_dir, const std::string& command,
                        const json& config_echo, const std::string& dataset_hash) {
    json doc;
    doc["command"] = command;
    doc["config"] = config_echo;
    doc["dataset_hash"] = dataset_hash;
    doc["timestamp"] = utc_timestamp();
    doc["tool_version"] = btlnmf::kToolVersion;
    std::ofstream out(out_dir / "run_manifest.json");
    if (!out) throw std::runtime_error("cannot write run_manifest.json");
    out << doc.dump(2) << '\n';
}

btlnmf::ComparisonTensor load(const std::string& data_path, const std::string& manifest_path) {
    if (manifest_path.empty()) return btlnmf::load_dataset(data_path);
    return btlnmf::load_dataset(data_path, manifest_path);
}

void print_warnings(const std::vector<std::string>& warnings) {
    for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
}

struct FitArgs {
    std::string data;
    std::string manifest;
    std::string out;
    int rank = 2;
    double epsilon = 1e-300;
    double tau = 1e-6;
    int max_iterations = 20000;
    std::string norm = "column";
    std::uint64_t seed = 0;
    int restarts = 1;
    bool strict_monotone = false;
};

int run_fit(const FitArgs& args) {
    const auto data = load(args.data, args.manifest);
    btlnmf::SolverConfig config;
    config.rank = args.rank;
    config.epsilon = args.epsilon;
    config.tolerance = args.tau;
    config.max_iterations = args.max_iterations;
    config.normalization = btlnmf::normalization_from_string(args.norm);
    config.seed = args.seed;

    fs::create_directories(args.out);
    btlnmf::FitResult result;
    if (args.restarts > 1) {
        auto multi = btlnmf::multi_restart_fit(data, config, args.restarts,
                                               restart_threads_from_env());
        std::ofstream all(fs::path(args.out) / "all_objectives.csv");
        all << "restart,objective\n";
        for (std::size_t r = 0; r < multi.all_objectives.size(); ++r) {
            all << r << ',' << btlnmf::double_to_string(multi.all_objectives[r]) << '\n';
        }
        std::cout << "best restart: " << multi.best_index << " of " << args.restarts << '\n';
        result = std::move(multi.best);
    } else {
        result = btlnmf::fit(data, config);
    }
    print_warnings(result.warnings);

    if (args.strict_monotone) {
        for (std::size_t l = 0; l + 1 < result.objective_trace.size(); ++l) {
            if (result.objective_trace[l + 1] > result.objective_trace[l] + 1e-10) {
                std::cerr << btlnmf::format(
                    "monotonicity violated at iteration %zu: %.17g -> %.17g\n", l + 1,
                    result.objective_trace[l], result.objective_trace[l + 1]);
                return kExitNumerical;
            }
        }
    }

    btlnmf::export_result(result, data, config, fs::path(args.out) / "result.json",
                          btlnmf::ExportFormat::Json);
    btlnmf::export_result(result, data, config, args.out, btlnmf::ExportFormat::CsvBundle);
    write_run_manifest(args.out, "fit",
                       json{{"rank", config.rank},
                            {"epsilon", config.epsilon},
                            {"tolerance", config.tolerance},
                            {"max_iterations", config.max_iterations},
                            {"normalization", btlnmf::to_string(config.normalization)},
                            {"seed", config.seed},
                            {"restarts", args.restarts}},
                       btlnmf::file_digest(args.data));

    std::cout << "objective: " << btlnmf::double_to_string(result.final_objective()) << '\n'
              << "iterations: " << result.iterations
              << (result.converged ? " (converged)" : " (max iterations reached)") << '\n'
              << "stationarity residual: "
              << btlnmf::double_to_string(result.stationarity_residual) << '\n'
              << "results written to " << args.out << '\n';
    return 0;
}

struct BaselineArgs {
    std::string data;
    std::string manifest;
    std::string out;
    int rank = 2;
    int restarts = 100;
    std::uint64_t seed = 0;
    double tolerance = 1e-8;
};

int run_baseline_btl(const BaselineArgs& args) {
    const auto data = load(args.data, args.manifest);
    const auto agg = btlnmf::aggregate(data);
    const auto result = btlnmf::btl_mle(agg);
    print_warnings(result.warnings);

    std::cout << "player,skill\n";
    for (int i = 0; i < agg.num_players(); ++i) {
        std::cout << agg.player_names[static_cast<std::size_t>(i)] << ','
                  << btlnmf::double_to_string(result.skills[i]) << '\n';
    }
    std::cout << "weights,1\n";
    std::cout << "log_likelihood," << btlnmf::double_to_string(result.log_likelihood) << '\n';

    if (!args.out.empty()) {
        fs::create_directories(args.out);
        std::ofstream out(fs::path(args.out) / "btl_baseline.csv");
        out << "player,skill\n";
        for (int i = 0; i < agg.num_players(); ++i) {
            out << agg.player_names[static_cast<std::size_t>(i)] << ','
                << btlnmf::double_to_string(result.skills[i]) << '\n';
        }
        out << "weights,1\n";
        out << "log_likelihood," << btlnmf::double_to_string(result.log_likelihood) << '\n';
        write_run_manifest(args.out, "baseline btl", json{{"model", "btl"}},
                           btlnmf::file_digest(args.data));
    }
    return 0;
}

int run_baseline_mixture(const BaselineArgs& args) {
    const auto data = load(args.data, args.manifest);
    const auto agg = btlnmf::aggregate(data);
    const auto result = btlnmf::mixture_btl_em(agg, args.rank, args.restarts, args.seed,
                                               args.tolerance);
    print_warnings(result.warnings);

    const auto& lls = result.restart_log_likelihoods;
    const double best = result.best.log_likelihood;
    const double worst = *std::min_element(lls.begin(), lls.end());
    const double mean = std::accumulate(lls.begin(), lls.end(), 0.0) /
                        static_cast<double>(lls.size());
    int near_optimal = 0;
    for (double ll : lls) {
        if (ll >= best - 1.0) ++near_optimal;
    }

    std::cout << "player";
    for (int k = 0; k < args.rank; ++k) std::cout << ",component_" << k + 1;
    std::cout << '\n';
    for (int i = 0; i < agg.num_players(); ++i) {
        std::cout << agg.player_names[static_cast<std::size_t>(i)];
        for (int k = 0; k < args.rank; ++k) {
            std::cout << ',' << btlnmf::double_to_string(result.best.components(k, i));
        }
        std::cout << '\n';
    }
    std::cout << "weights";
    for (int k = 0; k < args.rank; ++k) {
        std::cout << ',' << btlnmf::double_to_string(result.best.weights[k]);
    }
    std::cout << '\n';
    std::cout << "log_likelihood," << btlnmf::double_to_string(best) << '\n';
    std::cout << "restarts: " << args.restarts << ", best " << btlnmf::double_to_string(best)
              << ", mean " << btlnmf::double_to_string(mean) << ", worst "
              << btlnmf::double_to_string(worst) << ", within 1.0 of best: " << near_optimal
              << '\n';

    if (!args.out.empty()) {
        fs::create_directories(args.out);
        std::ofstream out(fs::path(args.out) / "mixture_baseline.csv");
        out << "player";
        for (int k = 0; k < args.rank; ++k) out << ",component_" << k + 1;
        out << '\n';
        for (int i = 0; i < agg.num_players(); ++i) {
            out << agg.player_names[static_cast<std::size_t>(i)];
            for (int k = 0; k < args.rank; ++k) {
                out << ',' << btlnmf::double_to_string(result.best.components(k, i));
            }
            out << '\n';
        }
        out << "weights";
        for (int k = 0; k < args.rank; ++k) {
            out << ',' << btlnmf::double_to_string(result.best.weights[k]);
        }
        out << '\n';
        out << "log_likelihood," << btlnmf::double_to_string(best) << '\n';
        std::ofstream ll_out(fs::path(args.out) / "restart_loglik.csv");
        ll_out << "restart,log_likelihood\n";
        for (std::size_t r = 0; r < lls.size(); ++r) {
            ll_out << r << ',' << btlnmf::double_to_string(lls[r]) << '\n';
        }
        write_run_manifest(args.out, "baseline mixture",
                           json{{"model", "mixture"},
                                {"components", args.rank},
                                {"restarts", args.restarts},
                                {"seed", args.seed},
                                {"tolerance", args.tolerance}},
                           btlnmf::file_digest(args.data));
    }
    return 0;
}

int run_audit(const std::string& data_path, const std::string& manifest_path,
              const std::string& csv_path) {
    const auto data = load(data_path, manifest_path);
    const auto report = btlnmf::sparsity_report(data);

    auto row = [&](const char* label, std::int64_t count) {
        std::cout << btlnmf::format("%-22s %8lld  %6.2f%%\n", label,
                                    static_cast<long long>(count), report.percent(count));
    };
    std::cout << btlnmf::format("%-22s %8lld\n", "total entries",
                                static_cast<long long>(report.total_entries));
    row("nonzero", report.nonzero);
    row("zeros on the diagonal", report.diagonal_zeros);
    row("missing data", report.missing);
    row("true zeros", report.true_zeros);

    if (!csv_path.empty()) {
        std::ofstream out(csv_path);
        out << "class,count,percentage\n";
        out << "nonzero," << report.nonzero << ',' << btlnmf::double_to_string(report.percent(report.nonzero)) << '\n';
        out << "diagonal_zeros," << report.diagonal_zeros << ',' << btlnmf::double_to_string(report.percent(report.diagonal_zeros)) << '\n';
        out << "missing," << report.missing << ',' << btlnmf::double_to_string(report.percent(report.missing)) << '\n';
        out << "true_zeros," << report.true_zeros << ',' << btlnmf::double_to_string(report.percent(report.true_zeros)) << '\n';
        out << "total," << report.total_entries << ",100\n";

        json manifest;
        manifest["command"] = "audit";
        manifest["config"] = json::object();
        manifest["dataset_hash"] = btlnmf::file_digest(data_path);
        manifest["timestamp"] = utc_timestamp();
        manifest["tool_version"] = btlnmf::kToolVersion;
        std::ofstream mout(csv_path + ".run.json");
        mout << manifest.dump(2) << '\n';
    }
    return 0;
}

struct SynthArgs {
    int m = 0;
    int n = 0;
    int k = 0;
    int games = 0;
    std::uint64_t seed = 0;
    std::string out;
};

int run_synth(const SynthArgs& args) {
    const auto synthetic = btlnmf::generate_synthetic(args.m, args.n, args.k, args.games,
                                                      args.seed);
    fs::create_directories(args.out);
    const fs::path out_dir(args.out);
    btlnmf::write_dataset_csv(synthetic.tensor, out_dir / "synthetic.csv");
    btlnmf::write_manifest(synthetic.tensor, out_dir / "synthetic_manifest.json");

    std::vector<std::string> factor_labels;
    for (int k = 0; k < args.k; ++k) factor_labels.push_back(btlnmf::format("factor_%d", k + 1));
    {
        std::ofstream out(out_dir / "W_true.csv");
        out << "tournament";
        for (const auto& f : factor_labels) out << ',' << f;
        out << '\n';
        for (int m = 0; m < args.m; ++m) {
            out << synthetic.tensor.tournament_names()[static_cast<std::size_t>(m)];
            for (int k = 0; k < args.k; ++k) {
                out << ',' << btlnmf::double_to_string(synthetic.truth.w(m, k));
            }
            out << '\n';
        }
    }
    {
        std::ofstream out(out_dir / "H_true.csv");
        out << "factor";
        for (const auto& p : synthetic.tensor.player_names()) out << ',' << p;
        out << '\n';
        for (int k = 0; k < args.k; ++k) {
            out << factor_labels[static_cast<std::size_t>(k)];
            for (int i = 0; i < args.n; ++i) {
                out << ',' << btlnmf::double_to_string(synthetic.truth.h(k, i));
            }
            out << '\n';
        }
    }
    write_run_manifest(out_dir, "synth",
                       json{{"m", args.m},
                            {"n", args.n},
                            {"k", args.k},
                            {"games", args.games},
                            {"seed", args.seed}},
                       btlnmf::file_digest(out_dir / "synthetic.csv"));
    std::cout << "synthetic dataset written to " << args.out << '\n';
    return 0;
}

int run_diag(const std::string& data_path, const std::string& manifest_path,
             const std::string& result_path, double fd_step) {
    const auto data = load(data_path, manifest_path);
    const auto imported = btlnmf::import_result(result_path);
    if (imported.player_names != data.player_names() ||
        imported.tournament_names != data.tournament_names()) {
        throw btlnmf::ParseError("result file does not match the dataset's players/tournaments");
    }

    const double epsilon = imported.config.epsilon;
    const auto report =
        btlnmf::stationarity_residual(data, imported.result.factors, epsilon);
    const auto grads = btlnmf::gradient(data, imported.result.factors, epsilon);
    // Use a diagnostics-friendly epsilon for differencing when the stored one
    // is too small for stable quotients.
    const double fd_epsilon = epsilon < 1e-12 ? 1e-6 : epsilon;
    const double fd_error =
        btlnmf::finite_difference_check(data, imported.result.factors, fd_epsilon, fd_step);

    std::cout << "objective: " << btlnmf::double_to_string(report.objective) << '\n'
              << "stationarity residual: " << btlnmf::double_to_string(report.residual) << '\n'
              << "  interior max |grad|: "
              << btlnmf::double_to_string(report.interior_max_abs_grad) << '\n'
              << "  boundary max -grad:  "
              << btlnmf::double_to_string(report.boundary_max_neg_grad) << '\n'
              << "  worst coordinate: " << report.worst_coordinate.matrix << '('
              << report.worst_coordinate.row << ',' << report.worst_coordinate.col << ")\n"
              << "max |grad W|: " << btlnmf::double_to_string(grads.grad_w.cwiseAbs().maxCoeff())
              << ", max |grad H|: "
              << btlnmf::double_to_string(grads.grad_h.cwiseAbs().maxCoeff()) << '\n'
              << "finite-difference max relative error (step "
              << btlnmf::double_to_string(fd_step) << ", eps "
              << btlnmf::double_to_string(fd_epsilon)
              << "): " << btlnmf::double_to_string(fd_error) << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"BTL-NMF ranking: monotone MM fits, baselines and dataset audits"};
    app.require_subcommand(1);

    FitArgs fit_args;
    auto* fit_cmd = app.add_subcommand("fit", "Fit the BTL-NMF model");
    fit_cmd->add_option("--data", fit_args.data, "Long-format match CSV")->required();
    fit_cmd->add_option("--manifest", fit_args.manifest, "Optional JSON ordering manifest");
    fit_cmd->add_option("--out", fit_args.out, "Output directory")->required();
    fit_cmd->add_option("--k", fit_args.rank, "Number of latent factors");
    fit_cmd->add_option("--eps", fit_args.epsilon, "Epsilon added to H inside the model");
    fit_cmd->add_option("--tau", fit_args.tau, "Termination threshold on max-abs change");
    fit_cmd->add_option("--max-iters", fit_args.max_iterations, "Iteration cap");
    fit_cmd->add_option("--norm", fit_args.norm, "Normalization: row|column|none");
    fit_cmd->add_option("--seed", fit_args.seed, "Random seed");
    fit_cmd->add_option("--restarts", fit_args.restarts, "Number of random restarts");
    fit_cmd->add_flag("--strict-monotone", fit_args.strict_monotone,
                      "Fail (exit 2) if the objective trace ever increases by more than 1e-10");

    BaselineArgs baseline_args;
    auto* baseline_cmd = app.add_subcommand("baseline", "BTL and mixture-BTL baselines");
    baseline_cmd->require_subcommand(1);
    auto* btl_cmd = baseline_cmd->add_subcommand("btl", "Single BTL maximum likelihood");
    btl_cmd->add_option("--data", baseline_args.data, "Long-format match CSV")->required();
    btl_cmd->add_option("--manifest", baseline_args.manifest, "Optional JSON manifest");
    btl_cmd->add_option("--out", baseline_args.out, "Output directory");
    auto* mixture_cmd = baseline_cmd->add_subcommand("mixture", "Mixture-BTL via EM");
    mixture_cmd->add_option("--data", baseline_args.data, "Long-format match CSV")->required();
    mixture_cmd->add_option("--manifest", baseline_args.manifest, "Optional JSON manifest");
    mixture_cmd->add_option("--out", baseline_args.out, "Output directory");
    mixture_cmd->add_option("--k", baseline_args.rank, "Number of mixture components");
    mixture_cmd->add_option("--restarts", baseline_args.restarts, "Number of EM restarts");
    mixture_cmd->add_option("--seed", baseline_args.seed, "Random seed");
    mixture_cmd->add_option("--tol", baseline_args.tolerance, "EM log-likelihood tolerance");

    std::string audit_data;
    std::string audit_manifest;
    std::string audit_csv;
    auto* audit_cmd = app.add_subcommand("audit", "Sparsity audit of a dataset");
    audit_cmd->add_option("--data", audit_data, "Long-format match CSV")->required();
    audit_cmd->add_option("--manifest", audit_manifest, "Optional JSON manifest");
    audit_cmd->add_option("--csv", audit_csv, "Also write the report as CSV");

    SynthArgs synth_args;
    auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic dataset");
    synth_cmd->add_option("--m", synth_args.m, "Tournaments")->required();
    synth_cmd->add_option("--n", synth_args.n, "Players")->required();
    synth_cmd->add_option("--k", synth_args.k, "Planted rank")->required();
    synth_cmd->add_option("--games", synth_args.games, "Games per pair")->required();
    synth_cmd->add_option("--seed", synth_args.seed, "Random seed");
    synth_cmd->add_option("--out", synth_args.out, "Output directory")->required();

    std::string diag_data;
    std::string diag_manifest;
    std::string diag_result;
    double diag_fd_step = 1e-6;
    auto* diag_cmd = app.add_subcommand("diag", "Gradient/stationarity report for a saved fit");
    diag_cmd->add_option("--data", diag_data, "Long-format match CSV")->required();
    diag_cmd->add_option("--manifest", diag_manifest, "Optional JSON manifest");
    diag_cmd->add_option("--result", diag_result, "result.json from a fit run")->required();
    diag_cmd->add_option("--fd-step", diag_fd_step, "Central difference step");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (*fit_cmd) return run_fit(fit_args);
        if (*btl_cmd) return run_baseline_btl(baseline_args);
        if (*mixture_cmd) return run_baseline_mixture(baseline_args);
        if (*audit_cmd) return run_audit(audit_data, audit_manifest, audit_csv);
        if (*synth_cmd) return run_synth(synth_args);
        if (*diag_cmd) return run_diag(diag_data, diag_manifest, diag_result, diag_fd_step);
    } catch (const btlnmf::ParseError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const btlnmf::DegeneracyError& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const btlnmf::EvaluationError& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const btlnmf::IdentifiabilityError& e) {
        std::cerr << "identifiability error: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    }
    return 0;
}
