#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "btlnmf/types.hpp"

namespace btlnmf {

// Every (m, i, j) cell falls in exactly one class.
struct SparsityReport {
    std::int64_t total_entries = 0;
    std::int64_t nonzero = 0;
    std::int64_t diagonal_zeros = 0;
    std::int64_t missing = 0;     // i != j, b_ij = b_ji = 0
    std::int64_t true_zeros = 0;  // b_ij = 0 but b_ji > 0

    double percent(std::int64_t count) const {
        return total_entries > 0 ? 100.0 * static_cast<double>(count) / total_entries : 0.0;
    }
};

// Long-format CSV with header `tournament,winner,loser,wins`. Cells never
// mentioned stay zero. The optional JSON manifest
// {"players": [...], "tournaments": [...]} pins the row/column ordering and
//declares entities with no recorded matches; names observed in the data but
// absent from the manifest are appended in lexicographic order.
ComparisonTensor load_dataset(const std::filesystem::path& csv_path);
ComparisonTensor load_dataset(const std::filesystem::path& csv_path,
                              const std::filesystem::path& manifest_path);

SparsityReport sparsity_report(const ComparisonTensor& data);

enum class ExportFormat { Json, CsvBundle };

// Json writes a single self-contained document at `path`; CsvBundle treats
// `path` as a directory and writes W.csv, H.csv, lambda.csv and trace.csv.
// Doubles are rendered with shortest round-trip precision.
void export_result(const FitResult& result, const ComparisonTensor& data,
                   const SolverConfig& config, const std::filesystem::path& path,
                   ExportFormat fmt);

struct ImportedResult {
    FitResult result;
    SolverConfig config;
    std::vector<std::string> tournament_names;
    std::vector<std::string> player_names;
};

ImportedResult import_result(const std::filesystem::path& json_path);

// Dataset writers used by the synth command and round-trip tests.
void write_dataset_csv(const ComparisonTensor& data, const std::filesystem::path& path);
void write_manifest(const ComparisonTensor& data, const std::filesystem::path& path);

struct SyntheticDataset {
    ComparisonTensor tensor;
    FactorPair truth;  // column-normalized planted factors
};

// Draws positive factors, column-normalizes them, and samples
// `games_per_pair` outcomes for every tournament and unordered pair from the
// BTL probabilities of Lambda = W * H.
SyntheticDataset generate_synthetic(int num_tournaments, int num_players, int rank,
                                    int games_per_pair, std::uint64_t seed);

// Shortest representation that parses back to the same double.
std::string double_to_string(double value);

// FNV-1a 64 digest of a file's bytes, e.g. "fnv1a64:cbf29ce484222325".
std::string file_digest(const std::filesystem::path& path);

}  // namespace btlnmf
