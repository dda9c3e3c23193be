#include "pnda/core.hpp"

#include <cmath>

namespace pnda {

Rotation rotation_from_degrees(int deg) {
  int d = ((deg % 360) + 360) % 360;
  switch (d) {
    case 0: return Rotation::R0;
    case 90: return Rotation::R90;
    case 180: return Rotation::R180;
    case 270: return Rotation::R270;
    default:
      throw std::invalid_argument("rotation must be a multiple of 90 degrees, got " +
                                  std::to_string(deg));
  }
}

Rotation compose(Rotation a, Rotation b) {
  return rotation_from_degrees(degrees(a) + degrees(b));
}

void ImageSample::validate() const {
  if (size <= 0 || channels <= 0) throw std::invalid_argument("image has empty shape");
  if (pixels.size() != static_cast<std::size_t>(channels) * size * size)
    throw std::invalid_argument("pixel buffer does not match square " +
                                std::to_string(size) + "x" + std::to_string(size) +
                                " shape for image '" + id + "'");
  for (double v : pixels)
    if (!std::isfinite(v) || v < 0.0 || v > 1.0)
      throw std::invalid_argument("pixel value out of [0,1] in image '" + id + "'");
}

void ProbVector::validate() const {
  double sum = 0.0;
  for (double v : p) {
    if (!std::isfinite(v) || v < 0.0)
      throw std::invalid_argument("probability vector has a negative or non-finite entry");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-6)
    throw std::invalid_argument("probability vector does not sum to 1");
}

ImageSample rotate(const ImageSample& img, Rotation r) {
  img.validate();
  const int n = img.size;
  ImageSample out = img;
  if (r == Rotation::R0) return out;
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        // counter-clockwise: dst(y,x) <- src(x, n-1-y)
        double v;
        switch (r) {
          case Rotation::R90: v = img.at(c, x, n - 1 - y); break;
          case Rotation::R180: v = img.at(c, n - 1 - y, n - 1 - x); break;
          default: v = img.at(c, n - 1 - x, y); break;  // R270
        }
        out.at(c, y, x) = v;
      }
  return out;
}

std::vector<std::pair<ImageSample, Rotation>> expand_with_rotations(
    const std::vector<ImageSample>& batch) {
  if (batch.empty()) throw std::invalid_argument("cannot rotation-expand an empty batch");
  std::vector<std::pair<ImageSample, Rotation>> out;
  out.reserve(batch.size() * 4);
  for (const auto& img : batch)
    for (Rotation r : kRotations) out.emplace_back(rotate(img, r), r);
  return out;
}

double entropy(const ProbVector& p) {
  p.validate();
  double h = 0.0;
  for (double v : p.p) {
    double q = std::max(v, 1e-12);
    h -= q * std::log(q);
  }
  return std::max(h, 0.0);
}

}  // namespace pnda
