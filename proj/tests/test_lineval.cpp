#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "pnda/lineval.hpp"

using namespace pnda;
using namespace pnda::lineval;

namespace {

// Well-separated gaussian blobs in feature space: linearly separable by a
// wide margin, so a working probe must be near-perfect.
void make_blobs(int n_per_class, int n_classes, int dim, std::uint64_t seed,
                nn::Matrix& features, std::vector<int>& labels) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.05);
  features.resize(dim, n_per_class * n_classes);
  labels.clear();
  for (int c = 0; c < n_classes; ++c)
    for (int i = 0; i < n_per_class; ++i) {
      long col = static_cast<long>(c) * n_per_class + i;
      for (int d = 0; d < dim; ++d) features(d, col) = noise(rng) + (d == c ? 1.0 : 0.0);
      labels.push_back(c);
    }
}

}  // namespace

TEST_CASE("linear probe separates well-separated blobs") {
  nn::Matrix features;
  std::vector<int> labels;
  make_blobs(60, 4, 8, 11, features, labels);
  LinearProbeConfig cfg;
  cfg.seed = 1;
  double acc = linear_probe(features, labels, cfg);
  CHECK(acc >= 0.99);
}

TEST_CASE("linear probe on shuffled labels sits near chance") {
  nn::Matrix features;
  std::vector<int> labels;
  make_blobs(100, 4, 8, 13, features, labels);
  std::mt19937_64 rng(5);
  std::shuffle(labels.begin(), labels.end(), rng);
  LinearProbeConfig cfg;
  cfg.seed = 2;
  double acc = linear_probe(features, labels, cfg);
  // chance is 0.25; the 80-image holdout has std ~ sqrt(.25*.75/80) ~ 0.048
  CHECK(acc < 0.25 + 3 * 0.05);
}

TEST_CASE("feature extraction leaves the encoder untouched") {
  std::mt19937_64 rng(3);
  nn::EncoderSpec spec;
  spec.image_size = 8;
  spec.channels = {4, 8};
  nn::Sequential encoder = nn::make_conv_encoder(spec, rng);
  std::uint64_t before = encoder.param_hash();

  std::vector<ImageSample> corpus;
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (int i = 0; i < 10; ++i) {
    ImageSample img;
    img.id = "f" + std::to_string(i);
    img.size = 8;
    img.channels = 1;
    img.pixels.resize(64);
    for (auto& v : img.pixels) v = uni(rng);
    corpus.push_back(std::move(img));
  }
  nn::Matrix feats = extract_features(encoder, corpus);
  CHECK(feats.rows() == spec.feature_dim());
  CHECK(feats.cols() == 10);
  CHECK(encoder.param_hash() == before);

  // same input, same features
  nn::Matrix again = extract_features(encoder, corpus);
  CHECK((feats.array() == again.array()).all());
}

TEST_CASE("probe rejects degenerate inputs") {
  nn::Matrix features = nn::Matrix::Random(4, 20);
  std::vector<int> one_class(20, 0);
  LinearProbeConfig cfg;
  CHECK_THROWS_AS(linear_probe(features, one_class, cfg), std::invalid_argument);

  std::vector<int> labels(20);
  for (int i = 0; i < 20; ++i) labels[i] = i % 2;
  std::vector<int> short_labels(labels.begin(), labels.end() - 1);
  CHECK_THROWS_AS(linear_probe(features, short_labels, cfg), std::invalid_argument);

  LinearProbeConfig bad = cfg;
  bad.holdout_fraction = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.milestones = {0.9, 0.6};  // must be increasing in (0,1)
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("probe is deterministic for a fixed seed") {
  nn::Matrix features;
  std::vector<int> labels;
  make_blobs(30, 3, 6, 17, features, labels);
  LinearProbeConfig cfg;
  cfg.seed = 9;
  CHECK(linear_probe(features, labels, cfg) == linear_probe(features, labels, cfg));
}
