#pragma once

#include <cstdint>
#include <vector>

#include "pnda/core.hpp"
#include "pnda/nn.hpp"

namespace pnda::lineval {

struct LinearProbeConfig {
  int epochs = 20;
  int batch_size = 64;
  double lr = 0.1;
  std::vector<double> milestones = {0.6, 0.75, 0.9};  // lr drops x0.1
  double momentum = 0.9;
  double holdout_fraction = 0.2;  // stratified split when no test set exists
  std::uint64_t seed = 0;

  void validate() const;
};

// One pooled feature column per image; the encoder is never updated.
nn::Matrix extract_features(nn::Sequential& encoder, const std::vector<ImageSample>& corpus);

// Softmax linear classifier on frozen features; returns held-out top-1.
double linear_probe(const nn::Matrix& features, const std::vector<int>& labels,
                    const LinearProbeConfig& cfg);

}  // namespace pnda::lineval
