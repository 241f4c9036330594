#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "panogan/image.hpp"

namespace panogan::data {

/// Pair counts of the CVUSA panorama benchmark split.
inline constexpr std::size_t kCvusaTrainPairs = 35532;
inline constexpr std::size_t kCvusaTestPairs = 8884;

enum class Split { kTrain, kTest };
enum class InputFormat { kPolar, kDuplicate, kDuplicateRotate };

std::string to_string(Split split);
Split parse_split(std::string_view text);
std::string to_string(InputFormat format);
InputFormat parse_input_format(std::string_view text);

struct SamplePair {
  std::string id;
  ImageTensor aerial;
  ImageTensor panorama;
  std::optional<ImageTensor> segmentation;  // absent for inference-only records
};

struct RecordPaths {
  std::string id;
  std::filesystem::path aerial;
  std::filesystem::path panorama;
  std::optional<std::filesystem::path> segmentation;
};

struct DatasetManifest {
  std::filesystem::path root;
  Split split = Split::kTrain;
  std::vector<RecordPaths> records;  // sorted by id
  std::vector<std::filesystem::path> orphans;

  /// ids and paths relative to `root`.
  nlohmann::json to_json() const;
};

/// Scans `<root>/<split>/{aerial,panorama,segmentation}` and matches files
/// by stem. A triple (a pair for the test split) becomes a record; every
/// other file is listed in `orphans`. With `strict`, orphans in the train
/// split raise IntegrityError. A split with no records always raises.
DatasetManifest load_manifest(const std::filesystem::path& root, Split split, bool strict = false);

/// True for extensions OpenCV can decode that we accept as dataset images.
bool is_image_file(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Input-format preprocessing. All three turn a square aerial image into a
// height x (4 * height) tensor matching the panorama size.

ImageTensor resize_bilinear(const ImageTensor& image, int64_t height, int64_t width);

/// k quarter turns counter-clockwise (k may be any integer).
ImageTensor rotate90_ccw(const ImageTensor& image, int k);

ImageTensor preprocess_duplicate_rotate(const ImageTensor& aerial, int64_t target_height);
ImageTensor preprocess_duplicate(const ImageTensor& aerial, int64_t target_height);

/// Unwraps the aerial image around its center: output column u is the
/// bearing 2*pi*u/W (0 = up, clockwise), output row v is the radius
/// v/H * S/2. Bilinear sampling; coordinates outside the image clamp to the
/// border.
ImageTensor preprocess_polar(const ImageTensor& aerial, int64_t target_height);

ImageTensor preprocess(InputFormat format, const ImageTensor& aerial, int64_t target_height);

// ---------------------------------------------------------------------------

class Dataset {
 public:
  virtual ~Dataset() = default;
  virtual std::size_t size() const = 0;
  virtual SamplePair get(std::size_t index) const = 0;
};

class InMemoryDataset : public Dataset {
 public:
  explicit InMemoryDataset(std::vector<SamplePair> pairs) : pairs_(std::move(pairs)) {}
  std::size_t size() const override { return pairs_.size(); }
  SamplePair get(std::size_t index) const override { return pairs_.at(index); }

 private:
  std::vector<SamplePair> pairs_;
};

/// Reads records from disk on first access and keeps them afterwards.
class FolderDataset : public Dataset {
 public:
  explicit FolderDataset(DatasetManifest manifest) : manifest_(std::move(manifest)) {}
  std::size_t size() const override { return manifest_.records.size(); }
  SamplePair get(std::size_t index) const override;
  const DatasetManifest& manifest() const { return manifest_; }

 private:
  DatasetManifest manifest_;
  mutable std::map<std::size_t, SamplePair> cache_;
};

/// Deterministic epoch-wise batching over record indices. The order of
/// epoch e depends only on (seed, e), so iteration can be resumed from any
/// (epoch, batch) position. The final partial batch is kept.
class BatchIterator {
 public:
  BatchIterator(std::size_t num_records, std::size_t batch_size, std::uint64_t seed, bool shuffle);

  std::size_t batches_per_epoch() const;
  std::vector<std::size_t> epoch_order(std::int64_t epoch) const;
  std::vector<std::vector<std::size_t>> epoch_batches(std::int64_t epoch) const;

  std::vector<std::size_t> next();
  std::int64_t epoch() const { return epoch_; }
  std::size_t batch_in_epoch() const { return cursor_; }
  void seek(std::int64_t epoch, std::size_t batch_in_epoch);

 private:
  std::size_t num_records_;
  std::size_t batch_size_;
  std::uint64_t seed_;
  bool shuffle_;
  std::int64_t epoch_ = 0;
  std::size_t cursor_ = 0;
  std::vector<std::vector<std::size_t>> current_;
};

/// Stacked, preprocessed tensors for one step. aerial is N x 3 x H x 4H.
struct Batch {
  std::vector<std::string> ids;
  torch::Tensor aerial;
  torch::Tensor panorama;
  torch::Tensor segmentation;  // undefined when any record lacks one
};

Batch collate(const Dataset& dataset, const std::vector<std::size_t>& indices, InputFormat format,
              int64_t target_height);

}  // namespace panogan::data
