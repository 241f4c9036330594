#include "panogan/training.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <algorithm>
#include <cstring>
#include <fstream>
#include <mutex>

#include "panogan/errors.hpp"

namespace fs = std::filesystem;

namespace panogan::train {

namespace {

constexpr const char* kFormatTag = "panogan-checkpoint";

void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<const char*> keys, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return key == k; })) {
      throw ConfigError("unknown " + where + " key '" + key + "'");
    }
  }
}

torch::Tensor mean_abs(const torch::Tensor& a, const torch::Tensor& b) { return (a - b).abs().mean(); }

}  // namespace

void ModelConfig::validate() const {
  generator.validate();
  discriminator.validate();
  if (generator.feedback_layers != discriminator.num_scales) {
    throw ConfigError("generator feedback_layers must equal discriminator num_scales");
  }
  if (generator.discriminator_channels != discriminator.base_channels) {
    throw ConfigError("generator discriminator_channels must equal discriminator base_channels");
  }
  if (image_height < 1) throw ConfigError("image_height must be positive");
  const int64_t reduction = int64_t{1} << std::max(generator.num_layers, discriminator.num_scales);
  if (image_height < reduction / 2 || 4 * image_height < reduction) {
    throw ConfigError("image_height " + std::to_string(image_height) + " too small for the configured depth");
  }
}

void TrainConfig::validate() const {
  if (!(lr_g >= 0.0) || !(lr_d >= 0.0)) throw ConfigError("learning rates must be non-negative");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("betas must lie in [0, 1)");
  if (feedback_loops < 0) throw ConfigError("feedback_loops must be >= 0");
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"generator", c.generator},
                     {"discriminator", c.discriminator},
                     {"input_format", data::to_string(c.input_format)},
                     {"image_height", c.image_height}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  reject_unknown_keys(j, {"generator", "discriminator", "input_format", "image_height"}, "model config");
  if (j.contains("discriminator")) c.discriminator = j.at("discriminator").get<nn::DiscriminatorConfig>();
  c.generator.discriminator_channels = c.discriminator.base_channels;
  c.generator.feedback_layers = c.discriminator.num_scales;
  c.generator.alpha.assign(static_cast<std::size_t>(c.generator.feedback_layers), 0.5);
  if (j.contains("generator")) {
    nn::from_json(j.at("generator"), c.generator);
  }
  if (j.contains("input_format")) c.input_format = data::parse_input_format(j.at("input_format").get<std::string>());
  c.image_height = j.value("image_height", c.image_height);
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"lr_g", c.lr_g},
                     {"lr_d", c.lr_d},
                     {"beta1", c.beta1},
                     {"beta2", c.beta2},
                     {"feedback_loops", c.feedback_loops},
                     {"epochs", c.epochs},
                     {"batch_size", c.batch_size},
                     {"seed", c.seed},
                     {"checkpoint_every", c.checkpoint_every},
                     {"shuffle", c.shuffle},
                     {"average_includes_forward", c.average_includes_forward},
                     {"weights",
                      {{"adversarial", c.weights.adversarial},
                       {"alignment", c.weights.alignment},
                       {"reconstruction", c.weights.reconstruction}}}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  reject_unknown_keys(j,
                      {"lr_g", "lr_d", "beta1", "beta2", "feedback_loops", "epochs", "batch_size", "seed",
                       "checkpoint_every", "shuffle", "average_includes_forward", "weights"},
                      "training config");
  c.lr_g = j.value("lr_g", c.lr_g);
  c.lr_d = j.value("lr_d", c.lr_d);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.feedback_loops = j.value("feedback_loops", c.feedback_loops);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.seed = j.value("seed", c.seed);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  c.shuffle = j.value("shuffle", c.shuffle);
  c.average_includes_forward = j.value("average_includes_forward", c.average_includes_forward);
  if (j.contains("weights")) {
    const auto& w = j.at("weights");
    reject_unknown_keys(w, {"adversarial", "alignment", "reconstruction"}, "loss weights");
    c.weights.adversarial = w.value("adversarial", c.weights.adversarial);
    c.weights.alignment = w.value("alignment", c.weights.alignment);
    c.weights.reconstruction = w.value("reconstruction", c.weights.reconstruction);
  }
}

std::vector<int> averaged_iterations(int feedback_loops, bool include_forward) {
  std::vector<int> out;
  const int first = (include_forward || feedback_loops == 0) ? 0 : 1;
  for (int t = first; t <= feedback_loops; ++t) out.push_back(t);
  return out;
}

Objective generator_objective(nn::PanoGan& net, const data::Batch& batch, const TrainConfig& config) {
  if (!batch.segmentation.defined()) throw ConfigError("training batches need segmentation maps");
  const auto& aerial = batch.aerial;
  auto iterations = net->unroll(aerial, config.feedback_loops, /*features_for_last=*/true);
  const auto real_img_feats = net->image_disc->extract_pyramid(aerial, batch.panorama);
  const auto real_seg_feats = net->seg_disc->extract_pyramid(aerial, batch.segmentation);

  const auto used = averaged_iterations(config.feedback_loops, config.average_includes_forward);
  std::vector<loss::IterationLosses> parts;
  torch::Tensor total = torch::zeros({}, aerial.options());
  for (int t : used) {
    const auto& it = iterations[static_cast<std::size_t>(t)];
    const auto adv_g = loss::adversarial_loss({}, net->image_disc->realfake_scores(it.image_feats), loss::Side::kGenerator);
    const auto adv_s = loss::adversarial_loss({}, net->seg_disc->realfake_scores(it.seg_feats), loss::Side::kGenerator);
    const auto align_g = loss::alignment_loss({}, nn::alignment_scores(it.image_feats, real_seg_feats),
                                              loss::Side::kGenerator);
    const auto align_s = loss::alignment_loss({}, nn::alignment_scores(it.seg_feats, real_img_feats),
                                              loss::Side::kGenerator);
    const auto recon_img = mean_abs(it.output.panorama(), batch.panorama);
    const auto recon_seg = mean_abs(it.output.segmentation(), batch.segmentation);
    total = total + config.weights.adversarial * (adv_g + adv_s) + config.weights.alignment * (align_g + align_s) +
            config.weights.reconstruction * (recon_img + recon_seg);
    parts.push_back({adv_g.item<double>(), adv_s.item<double>(), align_g.item<double>(), align_s.item<double>(),
                     recon_img.item<double>(), recon_seg.item<double>()});
  }
  total = total / static_cast<double>(used.size());
  return {total, loss::total_objective(parts, config.weights)};
}

Objective discriminator_objective(nn::PanoGan& net, const data::Batch& batch,
                                  const std::vector<nn::GeneratorOutput>& fakes, const TrainConfig& config) {
  if (!batch.segmentation.defined()) throw ConfigError("training batches need segmentation maps");
  const auto& aerial = batch.aerial;
  const auto real_img_feats = net->image_disc->extract_pyramid(aerial, batch.panorama);
  const auto real_seg_feats = net->seg_disc->extract_pyramid(aerial, batch.segmentation);
  const auto real_img_scores = net->image_disc->realfake_scores(real_img_feats);
  const auto real_seg_scores = net->seg_disc->realfake_scores(real_seg_feats);
  // Real-real alignment; identical for both branches.
  const auto aligned_real = nn::alignment_scores(real_img_feats, real_seg_feats);

  const auto used = averaged_iterations(config.feedback_loops, config.average_includes_forward);
  std::vector<loss::IterationLosses> parts;
  torch::Tensor value = torch::zeros({}, aerial.options());
  for (int t : used) {
    const auto& fake = fakes.at(static_cast<std::size_t>(t));
    const auto fake_img_feats = net->image_disc->extract_pyramid(aerial, fake.panorama().detach());
    const auto fake_seg_feats = net->seg_disc->extract_pyramid(aerial, fake.segmentation().detach());
    const auto adv_g = loss::adversarial_loss(real_img_scores, net->image_disc->realfake_scores(fake_img_feats),
                                              loss::Side::kDiscriminator);
    const auto adv_s = loss::adversarial_loss(real_seg_scores, net->seg_disc->realfake_scores(fake_seg_feats),
                                              loss::Side::kDiscriminator);
    const auto align_g = loss::alignment_loss(aligned_real, nn::alignment_scores(fake_img_feats, real_seg_feats),
                                              loss::Side::kDiscriminator);
    const auto align_s = loss::alignment_loss(aligned_real, nn::alignment_scores(fake_seg_feats, real_img_feats),
                                              loss::Side::kDiscriminator);
    value = value + config.weights.adversarial * (adv_g + adv_s) + config.weights.alignment * (align_g + align_s);
    parts.push_back(
        {adv_g.item<double>(), adv_s.item<double>(), align_g.item<double>(), align_s.item<double>(), 0.0, 0.0});
  }
  value = value / static_cast<double>(used.size());
  return {-value, loss::total_objective(parts, config.weights)};
}

nlohmann::json StepResult::to_json() const {
  auto j = generator.to_json();
  j["step"] = step;
  j["D"] = {{"L_adv", discriminator.L_adv}, {"L_fa", discriminator.L_fa}, {"value", discriminator.L_total}};
  return j;
}

// ---------------------------------------------------------------------------

Trainer::Trainer(ModelConfig model_config, TrainConfig train_config)
    : model_config_(std::move(model_config)), train_config_(train_config) {
  model_config_.validate();
  train_config_.validate();
  torch::manual_seed(train_config_.seed);
  net_ = nn::PanoGan(model_config_.generator, model_config_.discriminator);
  auto betas = std::make_tuple(train_config_.beta1, train_config_.beta2);
  opt_g_ = std::make_unique<torch::optim::Adam>(
      net_->generator->parameters(), torch::optim::AdamOptions(train_config_.lr_g).betas(betas).weight_decay(0.0));
  auto d_params = net_->image_disc->parameters();
  for (auto& p : net_->seg_disc->parameters()) d_params.push_back(p);
  opt_d_ = std::make_unique<torch::optim::Adam>(
      d_params, torch::optim::AdamOptions(train_config_.lr_d).betas(betas).weight_decay(0.0));
}

namespace {

template <class Fn>
auto with_context(const std::string& context, Fn&& fn) {
  try {
    return fn();
  } catch (const NumericError& e) {
    throw NumericError(context + ": " + e.what());
  }
}

}  // namespace

loss::LossBreakdown Trainer::update_discriminator(const data::Batch& batch) {
  const std::string context = "discriminator update at step " + std::to_string(step_ + 1);
  net_->train();
  std::vector<nn::GeneratorOutput> fakes;
  {
    torch::NoGradGuard no_grad;
    fakes = net_->generate_iterative(batch.aerial, train_config_.feedback_loops);
  }
  {
    std::vector<std::pair<std::string, torch::Tensor>> named{{"aerial", batch.aerial}};
    for (std::size_t t = 0; t < fakes.size(); ++t) named.emplace_back("fake[" + std::to_string(t) + "]", fakes[t].raw);
    loss::require_finite(named, context);
  }
  opt_d_->zero_grad();
  auto d_obj = with_context(context, [&] { return discriminator_objective(net_, batch, fakes, train_config_); });
  loss::require_finite({{"discriminator objective", d_obj.total}}, context);
  d_obj.total.backward();
  opt_d_->step();
  opt_d_->zero_grad();
  return std::move(d_obj.breakdown);
}

loss::LossBreakdown Trainer::update_generator(const data::Batch& batch) {
  const std::string context = "generator update at step " + std::to_string(step_ + 1);
  net_->train();
  opt_g_->zero_grad();
  auto g_obj = with_context(context, [&] { return generator_objective(net_, batch, train_config_); });
  loss::require_finite({{"generator objective", g_obj.total}, {"aerial", batch.aerial}, {"panorama", batch.panorama}},
                       context);
  g_obj.total.backward();
  opt_g_->step();
  // The generator backward also deposits gradients on D; drop them.
  opt_d_->zero_grad();
  return std::move(g_obj.breakdown);
}

StepResult Trainer::train_step(const data::Batch& batch) {
  auto d = update_discriminator(batch);
  auto g = update_generator(batch);
  ++step_;
  return StepResult{step_, std::move(g), std::move(d)};
}

void Trainer::save(const fs::path& path, bool include_discriminators) const {
  torch::serialize::OutputArchive archive;
  archive.write("format", c10::IValue(std::string(kFormatTag)));
  archive.write("version", c10::IValue(static_cast<int64_t>(kCheckpointVersion)));
  nlohmann::json config{{"model", model_config_}, {"training", train_config_}};
  archive.write("config", c10::IValue(config.dump()));
  archive.write("step", c10::IValue(step_));
  archive.write("has_discriminators", c10::IValue(include_discriminators));

  torch::serialize::OutputArchive g;
  net_->generator->save(g);
  archive.write("G", g);
  torch::serialize::OutputArchive og;
  opt_g_->save(og);
  archive.write("optim_G", og);
  if (include_discriminators) {
    torch::serialize::OutputArchive dg, ds, od;
    net_->image_disc->save(dg);
    net_->seg_disc->save(ds);
    opt_d_->save(od);
    archive.write("D_g", dg);
    archive.write("D_s", ds);
    archive.write("optim_D", od);
  }
  {
    auto gen = at::detail::getDefaultCPUGenerator();
    std::lock_guard<std::mutex> lock(gen.mutex());
    archive.write("rng", gen.get_state());
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  try {
    archive.save_to(path.string());
  } catch (const c10::Error& e) {
    throw IoError("cannot write checkpoint " + path.string() + ": " + e.what_without_backtrace());
  }
}

namespace {

struct OpenedCheckpoint {
  torch::serialize::InputArchive archive;
  ModelConfig model;
  TrainConfig training;
  std::int64_t step = 0;
  bool has_discriminators = false;
};

void open_checkpoint(const fs::path& path, OpenedCheckpoint& out) {
  if (!fs::is_regular_file(path)) throw ConfigError("checkpoint not found: " + path.string());
  try {
    out.archive.load_from(path.string());
  } catch (const c10::Error& e) {
    throw IoError("cannot read checkpoint " + path.string() + ": " + e.what_without_backtrace());
  }
  c10::IValue value;
  if (!out.archive.try_read("format", value) || !value.isString() || value.toStringRef() != kFormatTag) {
    throw IoError(path.string() + " is not a panogan checkpoint");
  }
  out.archive.read("version", value);
  if (value.toInt() != kCheckpointVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(value.toInt()));
  }
  out.archive.read("config", value);
  const auto config = nlohmann::json::parse(value.toStringRef());
  out.model = config.at("model").get<ModelConfig>();
  out.training = config.at("training").get<TrainConfig>();
  out.archive.read("step", value);
  out.step = value.toInt();
  out.archive.read("has_discriminators", value);
  out.has_discriminators = value.toBool();
}

}  // namespace

Trainer Trainer::load(const fs::path& path, std::optional<TrainConfig> override_config) {
  OpenedCheckpoint ckpt;
  open_checkpoint(path, ckpt);
  if (!ckpt.has_discriminators) throw ConfigError("cannot resume training from a generator-only checkpoint");
  Trainer trainer(ckpt.model, override_config.value_or(ckpt.training));
  torch::serialize::InputArchive g, og, dg, ds, od;
  ckpt.archive.read("G", g);
  trainer.net_->generator->load(g);
  ckpt.archive.read("D_g", dg);
  trainer.net_->image_disc->load(dg);
  ckpt.archive.read("D_s", ds);
  trainer.net_->seg_disc->load(ds);
  ckpt.archive.read("optim_G", og);
  trainer.opt_g_->load(og);
  ckpt.archive.read("optim_D", od);
  trainer.opt_d_->load(od);
  for (auto& group : trainer.opt_g_->param_groups()) {
    static_cast<torch::optim::AdamOptions&>(group.options()).lr(trainer.train_config_.lr_g);
  }
  for (auto& group : trainer.opt_d_->param_groups()) {
    static_cast<torch::optim::AdamOptions&>(group.options()).lr(trainer.train_config_.lr_d);
  }
  trainer.step_ = ckpt.step;
  torch::Tensor rng;
  ckpt.archive.read("rng", rng);
  auto gen = at::detail::getDefaultCPUGenerator();
  std::lock_guard<std::mutex> lock(gen.mutex());
  gen.set_state(rng);
  return trainer;
}

// ---------------------------------------------------------------------------

FitResult fit(const data::Dataset& dataset, const ModelConfig& model_config, const TrainConfig& train_config,
              const FitOptions& options) {
  train_config.validate();
  if (dataset.size() == 0) throw IntegrityError("cannot train on an empty dataset");
  Trainer trainer = options.resume_from ? Trainer::load(*options.resume_from, train_config)
                                        : Trainer(model_config, train_config);
  const auto& model = trainer.model_config();
  data::BatchIterator batches(dataset.size(), static_cast<std::size_t>(train_config.batch_size), train_config.seed,
                              train_config.shuffle);
  const auto per_epoch = static_cast<std::int64_t>(batches.batches_per_epoch());
  std::int64_t last_step = static_cast<std::int64_t>(train_config.epochs) * per_epoch;
  if (options.max_steps >= 0) last_step = std::min(last_step, options.max_steps);

  FitResult result;
  std::ofstream log_file;
  if (options.out_dir) {
    fs::create_directories(*options.out_dir);
    const auto log_path = *options.out_dir / "train_log.jsonl";
    log_file.open(log_path, options.resume_from ? std::ios::app : std::ios::trunc);
    if (!log_file) throw IoError("cannot open " + log_path.string());
  }
  auto save = [&](const std::string& name) {
    if (!options.out_dir) return;
    const auto path = *options.out_dir / name;
    trainer.save(path);
    result.checkpoint = path;
  };

  std::int64_t cached_epoch = -1;
  std::vector<std::vector<std::size_t>> epoch_batches;
  double epoch_sum = 0.0;
  double epoch_re = 0.0;
  std::int64_t epoch_count = 0;
  while (trainer.step() < last_step) {
    const std::int64_t step = trainer.step();
    const std::int64_t epoch = step / per_epoch;
    if (epoch != cached_epoch) {
      epoch_batches = batches.epoch_batches(epoch);
      cached_epoch = epoch;
    }
    const auto batch = data::collate(dataset, epoch_batches[static_cast<std::size_t>(step % per_epoch)],
                                     model.input_format, model.image_height);
    const auto outcome = trainer.train_step(batch);
    auto line = outcome.to_json();
    line["epoch"] = epoch;
    if (log_file) log_file << line.dump() << '\n' << std::flush;
    result.log.push_back(std::move(line));

    epoch_sum += outcome.generator.L_total;
    epoch_re += outcome.generator.L_re;
    ++epoch_count;
    if (options.progress && (trainer.step() % per_epoch == 0 || trainer.step() == last_step)) {
      *options.progress << "epoch " << epoch << " step " << trainer.step() << " mean L_total "
                        << epoch_sum / static_cast<double>(epoch_count) << " mean L_re "
                        << epoch_re / static_cast<double>(epoch_count) << '\n';
      epoch_sum = epoch_re = 0.0;
      epoch_count = 0;
    }
    if (train_config.checkpoint_every > 0 && trainer.step() % train_config.checkpoint_every == 0) {
      save("checkpoint_step" + std::to_string(trainer.step()) + ".pt");
    }
  }
  save("final.pt");
  result.steps = trainer.step();
  return result;
}

LoadedModel load_model(const fs::path& checkpoint) {
  OpenedCheckpoint ckpt;
  open_checkpoint(checkpoint, ckpt);
  LoadedModel out;
  out.model_config = ckpt.model;
  out.train_config = ckpt.training;
  out.has_discriminators = ckpt.has_discriminators;
  out.step = ckpt.step;
  out.net = nn::PanoGan(ckpt.model.generator, ckpt.model.discriminator);
  torch::serialize::InputArchive g;
  ckpt.archive.read("G", g);
  out.net->generator->load(g);
  if (ckpt.has_discriminators) {
    torch::serialize::InputArchive dg, ds;
    ckpt.archive.read("D_g", dg);
    out.net->image_disc->load(dg);
    ckpt.archive.read("D_s", ds);
    out.net->seg_disc->load(ds);
  }
  return out;
}

nn::GeneratorOutput infer_preprocessed(LoadedModel& model, const torch::Tensor& aerial, std::optional<int> loops) {
  const int j = loops.value_or(model.train_config.feedback_loops);
  if (j < 0) throw ConfigError("feedback loop count must be >= 0");
  if (j > 0 && !model.has_discriminators) {
    throw ConfigError("feedback loops need discriminator weights, which this checkpoint does not contain");
  }
  torch::NoGradGuard no_grad;
  auto outputs = model.net->generate_iterative(aerial, j);
  return outputs.back();
}

nn::GeneratorOutput infer(LoadedModel& model, const std::vector<ImageTensor>& aerial_images, std::optional<int> loops) {
  if (aerial_images.empty()) throw ConfigError("infer needs at least one aerial image");
  std::vector<torch::Tensor> batch;
  for (const auto& image : aerial_images) {
    batch.push_back(data::preprocess(model.model_config.input_format, image, model.model_config.image_height).tensor());
  }
  return infer_preprocessed(model, torch::stack(batch), loops);
}

std::uint64_t parameter_hash(const std::vector<torch::Tensor>& params) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& p : params) {
    const auto t = p.detach().contiguous().cpu();
    const auto* bytes = static_cast<const unsigned char*>(t.data_ptr());
    const auto n = static_cast<std::size_t>(t.numel()) * t.element_size();
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  }
  return h;
}

}  // namespace panogan::train
