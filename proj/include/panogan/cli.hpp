#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "panogan/metrics.hpp"
#include "panogan/training.hpp"

namespace panogan::cli {

/// Everything one command needs. Persisted as `config.json` next to each
/// command's outputs and loadable again with `--config`.
struct RunConfig {
  std::optional<std::filesystem::path> dataset_root;
  data::Split split = data::Split::kTrain;
  train::ModelConfig model;
  train::TrainConfig training;
  std::optional<std::filesystem::path> out;
  std::optional<std::filesystem::path> checkpoint;
  std::optional<std::filesystem::path> input_dir;
  std::optional<int> loops;
  std::optional<std::filesystem::path> fake_dir;
  std::optional<std::filesystem::path> real_dir;
  std::string oracle = "synthetic";

  nlohmann::json to_json() const;
  /// Rejects unknown keys at every level.
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::filesystem::path& path);
};

struct PreprocessReport {
  std::filesystem::path out_dir;
  std::size_t written = 0;
  std::size_t unchanged = 0;
};

/// Writes `<out>/<split>/input/<id>.png` (the preprocessed generator
/// input) plus `manifest.json` and `config.json`. Files whose bytes would not
/// change are left untouched. Output defaults to $PANOGAN_CACHE/<format>.
PreprocessReport cmd_preprocess(const RunConfig& config);

train::FitResult cmd_train(const RunConfig& config, std::ostream& progress);

/// Writes `<out>/panorama/<id>.png` and `<out>/segmentation/<id>.png`;
/// returns the ids. Loops default to the checkpoint's training k.
std::vector<std::string> cmd_infer(const RunConfig& config);

/// Writes `<out>/metrics.json` and `<out>/metrics.csv`.
metrics::MetricsReport cmd_evaluate(const RunConfig& config);

/// Entry point: `panogan <preprocess|train|infer|evaluate> [flags]`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace panogan::cli
