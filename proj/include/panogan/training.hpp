#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "panogan/dataio.hpp"
#include "panogan/losses.hpp"
#include "panogan/model.hpp"

namespace panogan::train {

inline constexpr int kCheckpointVersion = 1;

struct ModelConfig {
  nn::GeneratorConfig generator;
  nn::DiscriminatorConfig discriminator;
  data::InputFormat input_format = data::InputFormat::kDuplicateRotate;
  int64_t image_height = 256;  // panoramas are image_height x 4*image_height

  void validate() const;
};

struct TrainConfig {
  double lr_g = 1e-4;
  double lr_d = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  int feedback_loops = 2;  // k
  int epochs = 30;
  int batch_size = 1;
  std::uint64_t seed = 0;
  int checkpoint_every = 0;  // steps; 0 = only at the end
  bool shuffle = true;
  bool average_includes_forward = true;  // count the t = 0 pass in loss averages
  loss::LossWeights weights;

  void validate() const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// Indices of the iterations that enter the loss averages.
std::vector<int> averaged_iterations(int feedback_loops, bool include_forward);

struct Objective {
  torch::Tensor total;  // differentiable; what the updated side descends
  loss::LossBreakdown breakdown;
};

/// Generator objective L_adv + L_fa + L_re over k feedback loops, with the
/// non-saturating adversarial terms. Gradients reach G, and through the
/// feedback path and the scoring also D_g / D_s.
Objective generator_objective(nn::PanoGan& net, const data::Batch& batch, const TrainConfig& config);

/// Discriminator objective (to ascend) on fakes from `iterations`, which are
/// detached. `total` is the negated value, ready for gradient descent.
Objective discriminator_objective(nn::PanoGan& net, const data::Batch& batch,
                                  const std::vector<nn::GeneratorOutput>& fakes, const TrainConfig& config);

struct StepResult {
  std::int64_t step = 0;
  loss::LossBreakdown generator;
  loss::LossBreakdown discriminator;  // adv/align fields hold the D-side values

  nlohmann::json to_json() const;
};

class Trainer {
 public:
  Trainer(ModelConfig model_config, TrainConfig train_config);

  /// One D update on detached fakes, then one G update through all k loops.
  StepResult train_step(const data::Batch& batch);
  /// The two halves of train_step; neither advances the step counter.
  loss::LossBreakdown update_discriminator(const data::Batch& batch);
  loss::LossBreakdown update_generator(const data::Batch& batch);

  void save(const std::filesystem::path& path, bool include_discriminators = true) const;
  /// Restores weights, optimizer moments, step counter and RNG state. The
  /// stored training config is replaced by `override_config` when given.
  static Trainer load(const std::filesystem::path& path, std::optional<TrainConfig> override_config = std::nullopt);

  nn::PanoGan& model() { return net_; }
  const ModelConfig& model_config() const { return model_config_; }
  const TrainConfig& train_config() const { return train_config_; }
  std::int64_t step() const { return step_; }

 private:
  ModelConfig model_config_;
  TrainConfig train_config_;
  nn::PanoGan net_{nullptr};
  std::unique_ptr<torch::optim::Adam> opt_g_;
  std::unique_ptr<torch::optim::Adam> opt_d_;
  std::int64_t step_ = 0;
};

struct FitOptions {
  std::optional<std::filesystem::path> out_dir;  // checkpoints + train_log.jsonl
  std::optional<std::filesystem::path> resume_from;
  std::int64_t max_steps = -1;  // stop early after this global step (-1: run all epochs)
  std::ostream* progress = nullptr;
};

struct FitResult {
  std::optional<std::filesystem::path> checkpoint;
  std::vector<nlohmann::json> log;
  std::int64_t steps = 0;
};

/// Runs epochs x batches train steps. Batch order depends only on (seed,
/// epoch), so a run resumed from a checkpoint continues exactly where the
/// uninterrupted run would be.
FitResult fit(const data::Dataset& dataset, const ModelConfig& model_config, const TrainConfig& train_config,
              const FitOptions& options = {});

/// A checkpoint opened for generation.
struct LoadedModel {
  ModelConfig model_config;
  TrainConfig train_config;
  nn::PanoGan net{nullptr};
  bool has_discriminators = false;
  std::int64_t step = 0;
};

LoadedModel load_model(const std::filesystem::path& checkpoint);

/// Final-iteration outputs for raw aerial images after `loops` feedback
/// loops (default: the training k stored in the checkpoint).
nn::GeneratorOutput infer(LoadedModel& model, const std::vector<ImageTensor>& aerial_images,
                          std::optional<int> loops = std::nullopt);
nn::GeneratorOutput infer_preprocessed(LoadedModel& model, const torch::Tensor& aerial, std::optional<int> loops);

/// Order-sensitive digest of every parameter's bytes.
std::uint64_t parameter_hash(const std::vector<torch::Tensor>& params);

}  // namespace panogan::train
