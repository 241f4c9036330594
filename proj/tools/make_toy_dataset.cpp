#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "panogan/synthetic.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Write a procedural aerial/panorama dataset"};
  std::string root;
  std::string split = "train";
  panogan::data::SyntheticSpec spec;
  app.add_option("--out", root, "dataset root")->required();
  app.add_option("--split", split, "train or test")->check(CLI::IsMember({"train", "test"}));
  app.add_option("--count", spec.count, "number of pairs");
  app.add_option("--height", spec.panorama_height, "panorama height");
  app.add_option("--aerial-side", spec.aerial_side, "aerial image side (0: panorama height)");
  app.add_option("--seed", spec.seed, "scene seed");
  CLI11_PARSE(app, argc, argv);

  try {
    const auto pairs = panogan::data::make_synthetic_pairs(spec);
    panogan::data::write_dataset(root, panogan::data::parse_split(split), pairs);
    std::cout << "wrote " << pairs.size() << " pairs to " << root << '/' << split << '\n';
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
