#pragma once

#include "fmdiff/forward_models.hpp"

#include <Eigen/Core>

#include <filesystem>

namespace fmdiff {

/// Interleaved row-major pixels in [0, 1]; 1 channel (gray) or 3 (RGB).
struct Image {
  Index width = 0;
  Index height = 0;
  int channels = 1;
  Eigen::ArrayXd values;

  double at(Index row, Index col, int c = 0) const { return values[(row * width + col) * channels + c]; }
};

/// Binary PGM (1 channel) or PPM (3 channels), maxval 255. Values are clamped to [0, 1].
void write_pnm(const std::filesystem::path& path, const Image& image);
Image read_pnm(const std::filesystem::path& path);

/// Scene cell colors, each cell drawn as a `zoom` x `zoom` block.
Image scene_image(const ToyScene& scene, Index zoom = 8);
/// Colors of rendered or warped 1D images, one row per image ([B, width * 3] rows).
Image strip_image(const Eigen::MatrixXd& rows, Index width, Index zoom = 8);

} // namespace fmdiff
