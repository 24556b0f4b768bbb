#include "btlnmf/data_io.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"

#include "btlnmf/format.hpp"
#include "btlnmf/model.hpp"
#include "btlnmf/solver.hpp"
#include "btlnmf/version.hpp"

namespace btlnmf {

namespace {

using nlohmann::json;

constexpr const char* kCsvHeader = "tournament,winner,loser,wins";

std::string strip_cr(std::string line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

struct Record {
    std::string tournament;
    std::string winner;
    std::string loser;
    std::int64_t wins;
};

std::vector<Record> parse_records(const std::filesystem::path& csv_path) {
    std::ifstream in(csv_path);
    if (!in) throw ParseError("cannot open dataset file: " + csv_path.string());

    std::vector<Record> records;
    std::string line;
    int line_number = 0;
    bool saw_header = false;
    std::set<std::tuple<std::string, std::string, std::string>> seen;

    while (std::getline(in, line)) {
        ++line_number;
        line = strip_cr(line);
        if (line.empty()) continue;
        if (!saw_header) {
            if (line != kCsvHeader) {
                throw ParseError(format("line %d: expected header '%s'", line_number,
                                        kCsvHeader));
            }
            saw_header = true;
            continue;
        }
        const auto fields = split_csv_line(line);
        if (fields.size() != 4) {
            throw ParseError(format("line %d: expected 4 fields, got %zu", line_number,
                                    fields.size()));
        }
        Record rec{fields[0], fields[1], fields[2], 0};
        if (rec.tournament.empty() || rec.winner.empty() || rec.loser.empty()) {
            throw ParseError(format("line %d: empty field", line_number));
        }
        const std::string& wins = fields[3];
        auto [ptr, ec] = std::from_chars(wins.data(), wins.data() + wins.size(), rec.wins);
        if (ec != std::errc{} || ptr != wins.data() + wins.size()) {
            throw ParseError(format("line %d: cannot parse win count '%s'", line_number,
                                    wins.c_str()));
        }
        if (rec.wins < 0) {
            throw ParseError(format("line %d: negative win count", line_number));
        }
        if (rec.winner == rec.loser) {
            throw ParseError(format("line %d: self-match for player '%s'", line_number,
                                    rec.winner.c_str()));
        }
        if (!seen.insert({rec.tournament, rec.winner, rec.loser}).second) {
            throw ParseError(format("line %d: duplicate record (%s, %s, %s)", line_number,
                                    rec.tournament.c_str(), rec.winner.c_str(),
                                    rec.loser.c_str()));
        }
        records.push_back(std::move(rec));
    }
    return records;
}

// Manifest names first in manifest order, then unseen observed names in
// lexicographic order.
std::vector<std::string> build_universe(const std::vector<std::string>& manifest_names,
                                        const std::set<std::string>& observed,
                                        const char* what) {
    std::vector<std::string> universe;
    std::set<std::string> taken;
    for (const auto& name : manifest_names) {
        if (!taken.insert(name).second) {
            throw ParseError(format("manifest lists %s '%s' twice", what, name.c_str()));
        }
        universe.push_back(name);
    }
    for (const auto& name : observed) {
        if (taken.insert(name).second) universe.push_back(name);
    }
    return universe;
}

ComparisonTensor build_tensor(const std::vector<Record>& records,
                              const std::vector<std::string>& manifest_tournaments,
                              const std::vector<std::string>& manifest_players) {
    std::set<std::string> observed_tournaments;
    std::set<std::string> observed_players;
    for (const auto& rec : records) {
        observed_tournaments.insert(rec.tournament);
        observed_players.insert(rec.winner);
        observed_players.insert(rec.loser);
    }
    const auto tournaments =
        build_universe(manifest_tournaments, observed_tournaments, "tournament");
    const auto players = build_universe(manifest_players, observed_players, "player");
    if (tournaments.empty()) throw ParseError("dataset declares no tournaments");
    if (players.empty()) throw ParseError("dataset declares no players");

    std::map<std::string, int> tournament_index;
    std::map<std::string, int> player_index;
    for (std::size_t t = 0; t < tournaments.size(); ++t)
        tournament_index[tournaments[t]] = static_cast<int>(t);
    for (std::size_t p = 0; p < players.size(); ++p)
        player_index[players[p]] = static_cast<int>(p);

    const int n = static_cast<int>(players.size());
    std::vector<CountMatrix> counts(tournaments.size(), CountMatrix::Zero(n, n));
    for (const auto& rec : records) {
        counts[static_cast<std::size_t>(tournament_index[rec.tournament])](
            player_index[rec.winner], player_index[rec.loser]) = rec.wins;
    }
    return ComparisonTensor(std::move(counts), tournaments, players);
}

std::vector<std::string> manifest_name_list(const json& doc, const char* key) {
    std::vector<std::string> names;
    if (!doc.contains(key)) return names;
    if (!doc[key].is_array()) {
        throw ParseError(format("manifest field '%s' must be an array", key));
    }
    for (const auto& entry : doc[key]) {
        if (!entry.is_string()) {
            throw ParseError(format("manifest field '%s' must contain strings", key));
        }
        names.push_back(entry.get<std::string>());
    }
    return names;
}

json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

Matrix matrix_from_json(const json& rows) {
    if (!rows.is_array() || rows.empty()) throw ParseError("result JSON: matrix must be a non-empty array");
    const auto nrows = static_cast<Eigen::Index>(rows.size());
    const auto ncols = static_cast<Eigen::Index>(rows[0].size());
    Matrix m(nrows, ncols);
    for (Eigen::Index r = 0; r < nrows; ++r) {
        if (static_cast<Eigen::Index>(rows[r].size()) != ncols) {
            throw ParseError("result JSON: ragged matrix rows");
        }
        for (Eigen::Index c = 0; c < ncols; ++c) m(r, c) = rows[r][c].get<double>();
    }
    return m;
}

void write_matrix_csv(const Matrix& m, const std::string& corner_label,
                      const std::vector<std::string>& row_labels,
                      const std::vector<std::string>& col_labels,
                      const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << corner_label;
    for (const auto& c : col_labels) out << ',' << c;
    out << '\n';
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        out << row_labels[static_cast<std::size_t>(r)];
        for (Eigen::Index c = 0; c < m.cols(); ++c) out << ',' << double_to_string(m(r, c));
        out << '\n';
    }
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

double uniform_open_closed(std::mt19937_64& rng) {
    return static_cast<double>((rng() >> 11) + 1) * 0x1.0p-53;
}

}  // namespace

std::string double_to_string(double value) {
    char buffer[64];
    auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof(buffer), value);
    return std::string(buffer, ptr);
}

ComparisonTensor load_dataset(const std::filesystem::path& csv_path) {
    return build_tensor(parse_records(csv_path), {}, {});
}

ComparisonTensor load_dataset(const std::filesystem::path& csv_path,
                              const std::filesystem::path& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw ParseError("cannot open manifest file: " + manifest_path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError(format("manifest %s: %s", manifest_path.string().c_str(), e.what()));
    }
    return build_tensor(parse_records(csv_path), manifest_name_list(doc, "tournaments"),
                        manifest_name_list(doc, "players"));
}

SparsityReport sparsity_report(const ComparisonTensor& data) {
    SparsityReport report;
    const int n = data.num_players();
    report.total_entries =
        static_cast<std::int64_t>(data.num_tournaments()) * n * n;
    for (int m = 0; m < data.num_tournaments(); ++m) {
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                if (i == j) {
                    ++report.diagonal_zeros;
                } else if (data.count(m, i, j) > 0) {
                    ++report.nonzero;
                } else if (data.count(m, j, i) > 0) {
                    ++report.true_zeros;
                } else {
                    ++report.missing;
                }
            }
        }
    }
    return report;
}

void export_result(const FitResult& result, const ComparisonTensor& data,
                   const SolverConfig& config, const std::filesystem::path& path,
                   ExportFormat fmt) {
    if (fmt == ExportFormat::Json) {
        json doc;
        doc["schema_version"] = kSchemaVersion;
        doc["tool_version"] = kToolVersion;
        doc["config"] = {{"rank", config.rank},
                         {"epsilon", config.epsilon},
                         {"tolerance", config.tolerance},
                         {"max_iterations", config.max_iterations},
                         {"normalization", to_string(config.normalization)},
                         {"seed", config.seed}};
        doc["tournaments"] = data.tournament_names();
        doc["players"] = data.player_names();
        doc["w"] = matrix_to_json(result.factors.w);
        doc["h"] = matrix_to_json(result.factors.h);
        doc["lambda"] = matrix_to_json(result.lambda);
        doc["objective_trace"] = result.objective_trace;
        doc["iterations"] = result.iterations;
        doc["converged"] = result.converged;
        doc["stationarity_residual"] = result.stationarity_residual;
        doc["clamp_firings"] = result.clamp_firings;
        doc["warnings"] = result.warnings;
        std::ofstream out(path);
        if (!out) throw std::runtime_error("cannot write " + path.string());
        out << doc.dump(2) << '\n';
        if (!out) throw std::runtime_error("write failed for " + path.string());
        return;
    }

    std::filesystem::create_directories(path);
    std::vector<std::string> factor_labels;
    for (int k = 0; k < result.factors.rank(); ++k) {
        factor_labels.push_back(format("factor_%d", k + 1));
    }
    write_matrix_csv(result.factors.w, "tournament", data.tournament_names(), factor_labels,
                     path / "W.csv");
    write_matrix_csv(result.factors.h, "factor", factor_labels, data.player_names(),
                     path / "H.csv");
    write_matrix_csv(result.lambda, "tournament", data.tournament_names(),
                     data.player_names(), path / "lambda.csv");
    std::ofstream trace(path / "trace.csv");
    if (!trace) throw std::runtime_error("cannot write trace.csv");
    trace << "iteration,objective\n";
    for (std::size_t l = 0; l < result.objective_trace.size(); ++l) {
        trace << l << ',' << double_to_string(result.objective_trace[l]) << '\n';
    }
    if (!trace) throw std::runtime_error("write failed for trace.csv");
}

ImportedResult import_result(const std::filesystem::path& json_path) {
    std::ifstream in(json_path);
    if (!in) throw ParseError("cannot open result file: " + json_path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError(format("result %s: %s", json_path.string().c_str(), e.what()));
    }
    if (!doc.contains("schema_version") || doc["schema_version"].get<int>() != kSchemaVersion) {
        throw ParseError("result JSON: unsupported schema_version");
    }
    ImportedResult imported;
    try {
        const json& config = doc.at("config");
        imported.config.rank = config.at("rank").get<int>();
        imported.config.epsilon = config.at("epsilon").get<double>();
        imported.config.tolerance = config.at("tolerance").get<double>();
        imported.config.max_iterations = config.at("max_iterations").get<int>();
        imported.config.normalization =
            normalization_from_string(config.at("normalization").get<std::string>());
        imported.config.seed = config.at("seed").get<std::uint64_t>();
        imported.tournament_names = doc.at("tournaments").get<std::vector<std::string>>();
        imported.player_names = doc.at("players").get<std::vector<std::string>>();
        imported.result.factors.w = matrix_from_json(doc.at("w"));
        imported.result.factors.h = matrix_from_json(doc.at("h"));
        imported.result.lambda = matrix_from_json(doc.at("lambda"));
        imported.result.objective_trace = doc.at("objective_trace").get<std::vector<double>>();
        imported.result.iterations = doc.at("iterations").get<int>();
        imported.result.converged = doc.at("converged").get<bool>();
        imported.result.stationarity_residual = doc.at("stationarity_residual").get<double>();
        imported.result.clamp_firings = doc.at("clamp_firings").get<std::size_t>();
        imported.result.warnings = doc.at("warnings").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
        throw ParseError(format("result %s: %s", json_path.string().c_str(), e.what()));
    }

    const auto& factors = imported.result.factors;
    const auto m = static_cast<std::size_t>(factors.num_tournaments());
    const auto n = static_cast<std::size_t>(factors.num_players());
    if (factors.w.cols() != factors.h.rows() ||
        imported.result.lambda.rows() != factors.w.rows() ||
        imported.result.lambda.cols() != factors.h.cols() ||
        imported.tournament_names.size() != m || imported.player_names.size() != n) {
        throw ParseError("result JSON: inconsistent matrix or label dimensions");
    }
    return imported;
}

void write_dataset_csv(const ComparisonTensor& data, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << kCsvHeader << '\n';
    for (int m = 0; m < data.num_tournaments(); ++m) {
        for (int i = 0; i < data.num_players(); ++i) {
            for (int j = 0; j < data.num_players(); ++j) {
                if (data.count(m, i, j) > 0) {
                    out << data.tournament_names()[static_cast<std::size_t>(m)] << ','
                        << data.player_names()[static_cast<std::size_t>(i)] << ','
                        << data.player_names()[static_cast<std::size_t>(j)] << ','
                        << data.count(m, i, j) << '\n';
                }
            }
        }
    }
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

void write_manifest(const ComparisonTensor& data, const std::filesystem::path& path) {
    json doc;
    doc["tournaments"] = data.tournament_names();
    doc["players"] = data.player_names();
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << doc.dump(2) << '\n';
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

SyntheticDataset generate_synthetic(int num_tournaments, int num_players, int rank,
                                    int games_per_pair, std::uint64_t seed) {
    if (num_tournaments < 1 || num_players < 2) {
        throw std::invalid_argument("synthetic data needs M >= 1 and N >= 2");
    }
    if (rank < 1 || rank > std::min(num_tournaments, num_players)) {
        throw std::invalid_argument("synthetic rank must satisfy 1 <= K <= min(M, N)");
    }
    if (games_per_pair < 1) {
        throw std::invalid_argument("games_per_pair must be at least 1");
    }

    std::mt19937_64 rng(seed);
    FactorPair truth;
    truth.w.resize(num_tournaments, rank);
    truth.h.resize(rank, num_players);
    for (Eigen::Index r = 0; r < truth.w.rows(); ++r)
        for (Eigen::Index c = 0; c < truth.w.cols(); ++c)
            truth.w(r, c) = uniform_open_closed(rng);
    for (Eigen::Index r = 0; r < truth.h.rows(); ++r)
        for (Eigen::Index c = 0; c < truth.h.cols(); ++c)
            truth.h(r, c) = uniform_open_closed(rng);
    truth = normalize_column(truth, 0.0);

    const Matrix lambda = lambda_matrix(truth);
    std::vector<CountMatrix> counts(
        static_cast<std::size_t>(num_tournaments),
        CountMatrix::Zero(num_players, num_players));
    for (int m = 0; m < num_tournaments; ++m) {
        for (int i = 0; i < num_players; ++i) {
            for (int j = i + 1; j < num_players; ++j) {
                const double p = lambda(m, i) / (lambda(m, i) + lambda(m, j));
                for (int g = 0; g < games_per_pair; ++g) {
                    if (uniform_open_closed(rng) <= p) {
                        ++counts[static_cast<std::size_t>(m)](i, j);
                    } else {
                        ++counts[static_cast<std::size_t>(m)](j, i);
                    }
                }
            }
        }
    }

    // Zero-padded names keep lexicographic order equal to index order.
    const int width = static_cast<int>(std::to_string(num_tournaments).size());
    const int pwidth = static_cast<int>(std::to_string(num_players).size());
    std::vector<std::string> tournaments;
    std::vector<std::string> players;
    for (int m = 0; m < num_tournaments; ++m) {
        tournaments.push_back(format("T%0*d", width, m + 1));
    }
    for (int i = 0; i < num_players; ++i) players.push_back(format("P%0*d", pwidth, i + 1));

    return SyntheticDataset{
        ComparisonTensor(std::move(counts), std::move(tournaments), std::move(players)),
        std::move(truth)};
}

std::string file_digest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string() + " for hashing");
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    char chunk[4096];
    while (in.read(chunk, sizeof(chunk)) || in.gcount() > 0) {
        for (std::streamsize b = 0; b < in.gcount(); ++b) {
            hash ^= static_cast<unsigned char>(chunk[b]);
            hash *= 0x100000001b3ULL;
        }
        if (!in) break;
    }
    return format("fnv1a64:%016llx", static_cast<unsigned long long>(hash));
}

}  // namespace btlnmf
