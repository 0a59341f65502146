#include "fmdiff/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace fmdiff {

void write_pnm(const std::filesystem::path& path, const Image& image) {
  if (image.channels != 1 && image.channels != 3) throw std::invalid_argument("write_pnm: 1 or 3 channels required");
  if (image.values.size() != image.width * image.height * image.channels)
    throw std::invalid_argument("write_pnm: pixel count does not match " + std::to_string(image.width) + "x" +
                                std::to_string(image.height));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out << (image.channels == 1 ? "P5" : "P6") << '\n' << image.width << ' ' << image.height << "\n255\n";
  std::vector<unsigned char> bytes(image.values.size());
  for (Index i = 0; i < image.values.size(); ++i)
    bytes[i] = static_cast<unsigned char>(std::lround(std::clamp(image.values[i], 0.0, 1.0) * 255.0));
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

namespace {

Index read_header_int(std::istream& in) {
  in >> std::ws;
  while (in.peek() == '#') {
    std::string comment;
    std::getline(in, comment);
    in >> std::ws;
  }
  Index v = -1;
  in >> v;
  if (!in || v < 0) throw std::runtime_error("malformed PNM header");
  return v;
}

} // namespace

Image read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string magic;
  in >> magic;
  if (magic != "P5" && magic != "P6") throw std::runtime_error(path.string() + ": not a binary PGM/PPM");
  Image img;
  img.channels = magic == "P5" ? 1 : 3;
  img.width = read_header_int(in);
  img.height = read_header_int(in);
  if (read_header_int(in) != 255) throw std::runtime_error(path.string() + ": only maxval 255 is supported");
  in.get(); // single whitespace before the raster
  std::vector<unsigned char> bytes(img.width * img.height * img.channels);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) throw std::runtime_error(path.string() + ": truncated raster");
  img.values.resize(static_cast<Index>(bytes.size()));
  for (std::size_t i = 0; i < bytes.size(); ++i) img.values[static_cast<Index>(i)] = bytes[i] / 255.0;
  return img;
}

Image scene_image(const ToyScene& scene, Index zoom) {
  Image img{scene.w * zoom, scene.h * zoom, 3, Eigen::ArrayXd(scene.w * zoom * scene.h * zoom * 3)};
  for (Index r = 0; r < img.height; ++r)
    for (Index c = 0; c < img.width; ++c) {
      const Eigen::Array3d col = scene.color(r / zoom, c / zoom);
      for (int k = 0; k < 3; ++k) img.values[(r * img.width + c) * 3 + k] = col[k];
    }
  return img;
}

Image strip_image(const Eigen::MatrixXd& rows, Index width, Index zoom) {
  if (rows.cols() != width * 3) throw std::invalid_argument("strip_image: rows must hold width * 3 colors");
  Image img{width * zoom, rows.rows() * zoom, 3, Eigen::ArrayXd(width * zoom * rows.rows() * zoom * 3)};
  for (Index r = 0; r < img.height; ++r)
    for (Index c = 0; c < img.width; ++c)
      for (int k = 0; k < 3; ++k) img.values[(r * img.width + c) * 3 + k] = rows(r / zoom, (c / zoom) * 3 + k);
  return img;
}

} // namespace fmdiff
