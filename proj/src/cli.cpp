#include "panogan/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <map>
#include <set>

#include <CLI11.hpp>

#include "panogan/errors.hpp"

namespace panogan::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void reject_unknown_keys(const json& j, const std::set<std::string>& keys, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!keys.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

std::optional<fs::path> optional_path(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return fs::path(j.at(key).get<std::string>());
}

json path_or_null(const std::optional<fs::path>& p) { return p ? json(p->string()) : json(nullptr); }

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return {};
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Returns true when the file was (re)written.
bool write_if_changed(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  std::error_code ec;
  if (fs::is_regular_file(path, ec) && read_bytes(path) == bytes) return false;
  fs::create_directories(path.parent_path(), ec);
  if (ec) throw IoError("cannot create " + path.parent_path().string() + ": " + ec.message());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
  return true;
}

bool write_text(const fs::path& path, const std::string& text) {
  return write_if_changed(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

void prepare_output_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
}

/// Image files in `dir` keyed by stem.
std::map<std::string, fs::path> list_images(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ConfigError("not a directory: " + dir.string());
  std::map<std::string, fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file() || !data::is_image_file(entry.path())) continue;
    const auto id = entry.path().stem().string();
    if (!out.emplace(id, entry.path()).second) throw IntegrityError("duplicate image id '" + id + "' in " + dir.string());
  }
  return out;
}

fs::path resolve_subdir(const fs::path& dir, const char* name) {
  const auto sub = dir / name;
  return fs::is_directory(sub) ? sub : dir;
}

fs::path require(const std::optional<fs::path>& p, const char* what) {
  if (!p) throw ConfigError(std::string("missing ") + what);
  return *p;
}

}  // namespace

json RunConfig::to_json() const {
  return json{{"dataset", {{"root", path_or_null(dataset_root)}, {"split", data::to_string(split)}}},
              {"model", model},
              {"training", training},
              {"inference",
               {{"checkpoint", path_or_null(checkpoint)},
                {"input_dir", path_or_null(input_dir)},
                {"loops", loops ? json(*loops) : json(nullptr)}}},
              {"evaluation",
               {{"fake_dir", path_or_null(fake_dir)}, {"real_dir", path_or_null(real_dir)}, {"oracle", oracle}}},
              {"out", path_or_null(out)}};
}

RunConfig RunConfig::from_json(const json& j) {
  reject_unknown_keys(j, {"dataset", "model", "training", "inference", "evaluation", "out"}, "run config");
  RunConfig c;
  try {
    if (j.contains("dataset")) {
      const auto& d = j.at("dataset");
      reject_unknown_keys(d, {"root", "split"}, "dataset");
      c.dataset_root = optional_path(d, "root");
      if (d.contains("split")) c.split = data::parse_split(d.at("split").get<std::string>());
    }
    if (j.contains("model")) c.model = j.at("model").get<train::ModelConfig>();
    if (j.contains("training")) c.training = j.at("training").get<train::TrainConfig>();
    if (j.contains("inference")) {
      const auto& i = j.at("inference");
      reject_unknown_keys(i, {"checkpoint", "input_dir", "loops"}, "inference");
      c.checkpoint = optional_path(i, "checkpoint");
      c.input_dir = optional_path(i, "input_dir");
      if (i.contains("loops") && !i.at("loops").is_null()) c.loops = i.at("loops").get<int>();
    }
    if (j.contains("evaluation")) {
      const auto& e = j.at("evaluation");
      reject_unknown_keys(e, {"fake_dir", "real_dir", "oracle"}, "evaluation");
      c.fake_dir = optional_path(e, "fake_dir");
      c.real_dir = optional_path(e, "real_dir");
      c.oracle = e.value("oracle", c.oracle);
    }
    c.out = optional_path(j, "out");
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed run config: ") + e.what());
  }
  return c;
}

RunConfig RunConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return from_json(j);
}

PreprocessReport cmd_preprocess(const RunConfig& config) {
  config.model.validate();
  const auto root = require(config.dataset_root, "dataset root");
  fs::path out;
  if (config.out) {
    out = *config.out;
  } else if (const char* cache = std::getenv("PANOGAN_CACHE"); cache && *cache) {
    out = fs::path(cache) / data::to_string(config.model.input_format);
  } else {
    throw ConfigError("no output directory: pass --out or set PANOGAN_CACHE");
  }
  const auto manifest = data::load_manifest(root, config.split, /*strict=*/true);
  const auto split_dir = out / data::to_string(config.split);

  // Encode everything before writing so that a bad record leaves outputs untouched.
  std::vector<std::pair<fs::path, std::vector<std::uint8_t>>> files;
  for (const auto& record : manifest.records) {
    const auto aerial = read_image(record.aerial);
    const auto input = data::preprocess(config.model.input_format, aerial, config.model.image_height);
    files.emplace_back(split_dir / "input" / (record.id + ".png"), encode_image(input, ".png"));
  }
  prepare_output_dir(split_dir);
  PreprocessReport report;
  report.out_dir = out;
  for (const auto& [path, bytes] : files) {
    (write_if_changed(path, bytes) ? report.written : report.unchanged)++;
  }
  write_text(split_dir / "manifest.json", manifest.to_json().dump(2) + "\n");
  write_text(out / "config.json", config.to_json().dump(2) + "\n");
  return report;
}

train::FitResult cmd_train(const RunConfig& config, std::ostream& progress) {
  config.model.validate();
  config.training.validate();
  const auto root = require(config.dataset_root, "dataset root");
  const auto out = require(config.out, "output directory");
  data::FolderDataset dataset(data::load_manifest(root, data::Split::kTrain, /*strict=*/true));
  prepare_output_dir(out);
  auto effective = config;
  effective.split = data::Split::kTrain;
  write_text(out / "config.json", effective.to_json().dump(2) + "\n");
  train::FitOptions options;
  options.out_dir = out;
  options.progress = &progress;
  return train::fit(dataset, config.model, config.training, options);
}

std::vector<std::string> cmd_infer(const RunConfig& config) {
  const auto checkpoint = require(config.checkpoint, "checkpoint");
  const auto input = require(config.input_dir, "input directory");
  const auto out = require(config.out, "output directory");
  if (!fs::is_regular_file(checkpoint)) throw IoError("checkpoint not found: " + checkpoint.string());
  if (config.loops && *config.loops < 0) throw ConfigError("--loops must be >= 0");
  auto model = train::load_model(checkpoint);
  const int loops = config.loops.value_or(model.train_config.feedback_loops);
  if (loops > 0 && !model.has_discriminators) {
    throw ConfigError("feedback loops need discriminator weights, which this checkpoint does not contain");
  }
  const auto images = list_images(resolve_subdir(input, "aerial"));
  if (images.empty()) throw IntegrityError("no input images in " + input.string());

  const auto height = model.model_config.image_height;
  std::vector<std::pair<fs::path, std::vector<std::uint8_t>>> files;
  std::vector<std::string> ids;
  for (const auto& [id, path] : images) {
    const auto image = read_image(path);
    // Square images are raw aerial views; H x 4H images were already preprocessed.
    torch::Tensor prepared;
    if (image.height() == image.width()) {
      prepared = data::preprocess(model.model_config.input_format, image, height).tensor();
    } else if (image.height() == height && image.width() == 4 * height) {
      prepared = image.tensor();
    } else {
      throw ShapeError("input " + path.string() + " is neither square nor " + std::to_string(height) + "x" +
                       std::to_string(4 * height));
    }
    const auto result = train::infer_preprocessed(model, prepared.unsqueeze(0), loops);
    files.emplace_back(out / "panorama" / (id + ".png"), encode_image(result.panorama_image(0), ".png"));
    files.emplace_back(out / "segmentation" / (id + ".png"), encode_image(result.segmentation_image(0), ".png"));
    ids.push_back(id);
  }
  prepare_output_dir(out);
  for (const auto& [path, bytes] : files) write_if_changed(path, bytes);
  auto effective = config;
  effective.loops = loops;
  write_text(out / "config.json", effective.to_json().dump(2) + "\n");
  return ids;
}

metrics::MetricsReport cmd_evaluate(const RunConfig& config) {
  const auto fake_dir = resolve_subdir(require(config.fake_dir, "fake directory"), "panorama");
  const auto real_dir = resolve_subdir(require(config.real_dir, "real directory"), "panorama");
  const auto out = require(config.out, "output directory");
  const auto oracle = metrics::make_oracle(config.oracle);
  const auto fake_files = list_images(fake_dir);
  const auto real_files = list_images(real_dir);
  if (fake_files.size() != real_files.size()) {
    throw IntegrityError("image count mismatch: " + std::to_string(fake_files.size()) + " generated vs " +
                         std::to_string(real_files.size()) + " real");
  }
  if (fake_files.empty()) throw IntegrityError("no images to evaluate in " + fake_dir.string());
  std::vector<ImageTensor> fake, real;
  for (const auto& [id, path] : fake_files) {
    const auto match = real_files.find(id);
    if (match == real_files.end()) throw IntegrityError("no real image for id '" + id + "'");
    fake.push_back(read_image(path));
    real.push_back(read_image(match->second));
  }
  const auto report = metrics::evaluate(fake, real, *oracle);
  prepare_output_dir(out);
  write_text(out / "metrics.json", report.to_json().dump(2) + "\n");
  write_text(out / "metrics.csv", metrics::MetricsReport::csv_header() + "\n" + report.csv_row() + "\n");
  write_text(out / "config.json", config.to_json().dump(2) + "\n");
  return report;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Cross-view aerial to panorama synthesis"};
  app.require_subcommand(1, 1);

  std::optional<std::string> config_path, root, split, checkpoint, input, fake, real, oracle, out_dir, format;
  std::optional<std::uint64_t> seed;
  std::optional<int> loops, epochs, batch_size;
  std::optional<std::int64_t> height;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON run config; flags override its values");
    sub->add_option("--seed", seed, "random seed");
    sub->add_option("--loops", loops, "feedback loops");
    sub->add_option("--input-format", format, "polar, duplicate or duplicate_rotate")
        ->check(CLI::IsMember({"polar", "duplicate", "duplicate_rotate"}));
    sub->add_option("--epochs", epochs, "training epochs");
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--height", height, "panorama height");
    sub->add_option("--batch-size", batch_size, "training batch size");
  };
  auto* preprocess = app.add_subcommand("preprocess", "write preprocessed generator inputs");
  auto* train_cmd = app.add_subcommand("train", "train a model");
  auto* infer_cmd = app.add_subcommand("infer", "generate panoramas and segmentation maps");
  auto* evaluate = app.add_subcommand("evaluate", "score generated panoramas");
  for (auto* sub : {preprocess, train_cmd, infer_cmd, evaluate}) add_common(sub);
  for (auto* sub : {preprocess, train_cmd}) {
    sub->add_option("--root", root, "dataset root");
  }
  preprocess->add_option("--split", split, "train or test");
  infer_cmd->add_option("--checkpoint", checkpoint, "checkpoint file");
  infer_cmd->add_option("--input", input, "directory of aerial images");
  evaluate->add_option("--fake", fake, "generated images");
  evaluate->add_option("--real", real, "ground-truth images");
  evaluate->add_option("--oracle", oracle, "classifier oracle spec");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    RunConfig config = config_path ? RunConfig::load(*config_path) : RunConfig{};
    if (seed) config.training.seed = *seed;
    if (loops) {
      if (infer_cmd->parsed()) {
        config.loops = *loops;
      } else {
        config.training.feedback_loops = *loops;
      }
    }
    if (format) config.model.input_format = data::parse_input_format(*format);
    if (epochs) config.training.epochs = *epochs;
    if (batch_size) config.training.batch_size = *batch_size;
    if (height) config.model.image_height = *height;
    if (out_dir) config.out = fs::path(*out_dir);
    if (root) config.dataset_root = fs::path(*root);
    if (split) config.split = data::parse_split(*split);
    if (checkpoint) config.checkpoint = fs::path(*checkpoint);
    if (input) config.input_dir = fs::path(*input);
    if (fake) config.fake_dir = fs::path(*fake);
    if (real) config.real_dir = fs::path(*real);
    if (oracle) config.oracle = *oracle;

    if (preprocess->parsed()) {
      const auto report = cmd_preprocess(config);
      out << "preprocessed into " << report.out_dir.string() << ": " << report.written << " written, "
          << report.unchanged << " unchanged\n";
    } else if (train_cmd->parsed()) {
      const auto result = cmd_train(config, out);
      out << "trained " << result.steps << " steps; checkpoint " << result.checkpoint->string() << '\n';
    } else if (infer_cmd->parsed()) {
      const auto ids = cmd_infer(config);
      out << "generated " << ids.size() << " panoramas into " << config.out->string() << '\n';
    } else if (evaluate->parsed()) {
      const auto report = cmd_evaluate(config);
      out << report.to_json().dump(2) << '\n';
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace panogan::cli
