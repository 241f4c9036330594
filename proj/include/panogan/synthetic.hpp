#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "panogan/dataio.hpp"

namespace panogan::data {

/// Procedural aerial/panorama/segmentation triples. Each scene is a class
/// map (grass, road, buildings, trees) seen from above; the panorama is the
/// view from the scene center: sky above the horizon, objects rising above
/// it by inverse distance, and the ground below unwrapped radially.
struct SyntheticSpec {
  std::size_t count = 4;
  int64_t panorama_height = 64;  // panorama is height x 4*height
  int64_t aerial_side = 0;       // 0: same as panorama_height
  std::uint64_t seed = 0;
};

std::vector<SamplePair> make_synthetic_pairs(const SyntheticSpec& spec);

/// Writes pairs as PNGs under `<root>/<split>/{aerial,panorama,segmentation}`.
void write_dataset(const std::filesystem::path& root, Split split, std::span<const SamplePair> pairs);

}  // namespace panogan::data
