#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pnda/core.hpp"
#include "pnda/losses.hpp"
#include "pnda/nn.hpp"
#include "pnda/sampler.hpp"

namespace pnda::harness {

enum class Framework { SIMCLR, MOCO_V2, BYOL };

Framework framework_from_string(const std::string& s);
std::string to_string(Framework f);

struct AugmentationRecipe {
  bool crop = true;          // inception-style random resized crop
  double crop_min_scale = 0.6;
  bool horizontal_flip = true;
  bool color_jitter = true;  // brightness/contrast jitter
  double jitter_strength = 0.4;
  bool grayscale = true;     // channel-mean collapse with probability 0.2
  double grayscale_prob = 0.2;
};

struct ExperimentConfig {
  Framework framework = Framework::SIMCLR;
  losses::AugMode mode = losses::AugMode::NONE;
  nn::EncoderSpec encoder;
  int projection_dim = 32;
  double tau = losses::kDefaultTauSimclr;
  double alpha = losses::kDefaultAlphaByol;
  int batch_size = 8;         // M
  int epochs = 5;
  nn::OptimizerSpec opt{.algo = "sgd", .lr = 0.05, .momentum = 0.9, .weight_decay = 1e-4};
  double ema_momentum = 0.999;
  int queue_size = 256;
  AugmentationRecipe aug;
  std::uint64_t seed = 0;
  bool record_debug = false;  // keep per-step pools/specs for inspection

  void validate() const;
};

struct SyntheticCorpusSpec {
  int n_rai = 1000;
  int n_nonrai = 1000;
  int image_size = 32;
  int channels = 1;
  double noise_sigma = 0.02;
  std::uint64_t seed = 0;
};

// Deterministic labeled corpus: rotation-symmetric patterns (RAI) plus
// oriented vertical-gradient patterns (non-RAI), both with additive noise.
std::vector<ImageSample> generate_synthetic_corpus(const SyntheticCorpusSpec& spec);

ImageSample augment(const ImageSample& img, const AugmentationRecipe& recipe,
                    std::mt19937_64& rng);

// target <- momentum * target + (1 - momentum) * online
void momentum_update(nn::Sequential& target, const nn::Sequential& online, double momentum);

struct StepDebug {
  nn::Matrix pool;                      // normalized embeddings used by the loss
  std::vector<losses::PairSpec> specs;  // one per anchor
};

struct StepRecord {
  int epoch = 0;
  int step = 0;
  double loss = 0.0;
  double lr = 0.0;
};

struct PretrainResult {
  nn::Sequential encoder;
  std::vector<double> epoch_losses;
  std::vector<StepRecord> steps;
  std::vector<StepDebug> debug;  // populated only with record_debug
};

// Runs the configured framework loop over the corpus. The partition is
// required for mode PNDA and ignored otherwise.
PretrainResult pretrain(const ExperimentConfig& config, const std::vector<ImageSample>& corpus,
                        const sampler::RaiPartition* partition);

// Fixed-capacity FIFO of embedding columns (MoCo memory bank).
class EmbeddingQueue {
 public:
  EmbeddingQueue(int dim, int capacity) : dim_(dim), capacity_(capacity) {}
  void push(const nn::Matrix& cols);
  nn::Matrix as_matrix() const;
  int size() const { return static_cast<int>(entries_.size()); }
  int capacity() const { return capacity_; }

 private:
  int dim_, capacity_;
  std::deque<nn::Vector> entries_;
};

}  // namespace pnda::harness
