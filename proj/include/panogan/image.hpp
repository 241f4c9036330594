#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace panogan {

/// Rank-3 float image (channels x height x width). Pixel intensities are
/// normalized to [-1, 1]; 8-bit code c maps to c / 127.5 - 1.
class ImageTensor {
 public:
  ImageTensor() = default;
  /// Takes a C x H x W tensor; converted to contiguous float32.
  explicit ImageTensor(torch::Tensor data);

  static ImageTensor filled(int64_t channels, int64_t height, int64_t width, float value);

  int64_t channels() const { return data_.size(0); }
  int64_t height() const { return data_.size(1); }
  int64_t width() const { return data_.size(2); }
  bool defined() const { return data_.defined(); }
  bool in_range() const;

  const torch::Tensor& tensor() const { return data_; }
  float at(int64_t c, int64_t y, int64_t x) const;

  bool bit_equal(const ImageTensor& other) const;

 private:
  torch::Tensor data_;
};

float normalize_code(std::uint8_t code);
std::uint8_t denormalize_code(float value);

/// [0,1] float -> [-1,1] and back.
torch::Tensor normalize_unit(const torch::Tensor& unit);
torch::Tensor denormalize_unit(const torch::Tensor& normalized);

/// Reads any OpenCV-decodable raster as a 3-channel RGB image.
ImageTensor read_image(const std::filesystem::path& path);
/// Writes an 8-bit RGB image; format picked from the extension.
void write_image(const std::filesystem::path& path, const ImageTensor& image);
/// Encoded file bytes for `extension` (e.g. ".png").
std::vector<std::uint8_t> encode_image(const ImageTensor& image, const std::string& extension);
/// Quantizes to 8-bit codes and back; what a write/read cycle through a
/// lossless format yields.
ImageTensor quantize(const ImageTensor& image);

}  // namespace panogan
