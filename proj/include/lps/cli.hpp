#pragma once

// Command-line driver. Every subcommand writes its outputs plus manifest.txt into --out.
// Exit codes: 0 success, 1 usage, 2 data/format, 3 numerical failure.

#include "lps/config.hpp"
#include "lps/solver.hpp"
#include "lps/unfolded.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace lps::cli {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

/// args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// One row of the experiment matrix.
struct ExperimentConfig {
    std::string name;
    ActivationMode activation = ActivationMode::Simple;
    bool tied = true;
    std::size_t layers = 100;
    double init_lambda_L = 0.0234, init_lambda_S = 1.6e-5;
    TrainConfig train;
    std::filesystem::path data, out;
    std::uint64_t seed = 0;

    io::Manifest to_manifest() const;
    static ExperimentConfig from_manifest(const io::Manifest& m);
};

/// The six published configurations (#1..#6) on top of `base`.
std::vector<ExperimentConfig> table1_rows(const TrainConfig& base);

struct Table1Row {
    ExperimentConfig config;
    std::size_t trained_params = 0;
    double train_loss = 0; // last-epoch mean
    double test_mae = 0;   // whole-sequence mean over the test set
};

std::vector<Table1Row> run_table1_matrix(const std::vector<ExperimentConfig>& configs,
                                         const std::vector<Example>& train, const std::vector<Example>& test);

/// experiment,activation,tied,layers,trained_params,init_lambda_l,init_lambda_s,train_loss,test_mae
std::string table1_csv(const std::vector<Table1Row>& rows);
inline constexpr const char* kTable1Header =
    "experiment,activation,tied,layers,trained_params,init_lambda_l,init_lambda_s,train_loss,test_mae";

/// 16-bit binary PGM, values scaled linearly from [0, vmax] (vmax <= 0: the maximum).
void write_pgm(const std::filesystem::path& path, const std::vector<double>& values, std::size_t width,
               std::size_t height, double vmax = 0);
/// One row per image row, comma separated, 17 significant digits.
void write_image_csv(const std::filesystem::path& path, const std::vector<double>& values, std::size_t width,
                     std::size_t height);

/// Magnitude frames tiled left to right.
std::vector<double> montage(const ImageSequence& seq, std::size_t& width, std::size_t& height);

/// Examples from simulation directories (seq_* children of a root, or the directories themselves).
std::vector<Example> load_examples(const std::vector<std::filesystem::path>& dirs, const ProblemOptions& opts = {});
std::vector<std::filesystem::path> expand_dataset_dirs(const std::vector<std::filesystem::path>& dirs);

} // namespace lps::cli
