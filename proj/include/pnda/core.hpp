#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace pnda {

// 90-degree rotation group, counter-clockwise.
enum class Rotation : int { R0 = 0, R90 = 90, R180 = 180, R270 = 270 };

inline constexpr std::array<Rotation, 4> kRotations = {
    Rotation::R0, Rotation::R90, Rotation::R180, Rotation::R270};

inline int degrees(Rotation r) { return static_cast<int>(r); }

Rotation rotation_from_degrees(int deg);
Rotation compose(Rotation a, Rotation b);

// Rotation class index used for predictor labels: 0,90,180,270 -> 0..3.
inline int rotation_class(Rotation r) { return degrees(r) / 90; }

enum class RaiVerdict { RAI, NON_RAI };

// Square image, channel-major storage: pixels[c*H*W + y*W + x], values in [0,1].
struct ImageSample {
  std::string id;
  int size = 0;      // H == W
  int channels = 1;
  std::vector<double> pixels;
  std::optional<RaiVerdict> truth;  // synthetic corpora only

  double at(int c, int y, int x) const { return pixels[(c * size + y) * size + x]; }
  double& at(int c, int y, int x) { return pixels[(c * size + y) * size + x]; }
  std::size_t pixel_count() const { return pixels.size(); }
  void validate() const;
};

// Softmax output over the four rotation classes.
struct ProbVector {
  std::array<double, 4> p{};

  double operator[](int i) const { return p[i]; }
  void validate() const;  // non-negative, sums to 1 within 1e-6
};

// Lossless 90-degree-multiple rotation (pure index permutation).
ImageSample rotate(const ImageSample& img, Rotation r);

// Expands a batch to 4B labeled samples, sample-major, rotation-minor
// (0, 90, 180, 270 for each input in order).
std::vector<std::pair<ImageSample, Rotation>> expand_with_rotations(
    const std::vector<ImageSample>& batch);

// Shannon entropy, natural log, with the 0*ln(0) = 0 convention
// (probabilities clamped at 1e-12). Range [0, ln 4].
double entropy(const ProbVector& p);

inline constexpr double kMaxEntropy = 1.3862943611198906;  // ln 4
inline constexpr double kDefaultRho = kMaxEntropy / 2.0;

}  // namespace pnda
