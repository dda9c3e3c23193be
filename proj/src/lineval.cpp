#include "pnda/lineval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <stdexcept>

namespace pnda::lineval {

void LinearProbeConfig::validate() const {
  if (epochs < 1 || batch_size < 1) throw std::invalid_argument("bad probe schedule");
  double prev = 0.0;
  for (double m : milestones) {
    if (!(m > prev && m < 1.0))
      throw std::invalid_argument("milestones must be strictly increasing fractions in (0,1)");
    prev = m;
  }
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0))
    throw std::invalid_argument("holdout fraction must lie in (0,1)");
}

nn::Matrix extract_features(nn::Sequential& encoder, const std::vector<ImageSample>& corpus) {
  if (corpus.empty()) throw std::invalid_argument("extract_features: empty corpus");
  const long rows = static_cast<long>(corpus.front().pixels.size());
  const int chunk = 128;
  nn::Matrix features;
  for (std::size_t start = 0; start < corpus.size(); start += chunk) {
    const std::size_t end = std::min(corpus.size(), start + chunk);
    nn::Matrix x(rows, end - start);
    for (std::size_t b = start; b < end; ++b)
      for (long i = 0; i < rows; ++i) x(i, b - start) = corpus[b].pixels[i];
    nn::Matrix f = encoder.forward(x, false);
    if (features.size() == 0) features.resize(f.rows(), corpus.size());
    features.middleCols(start, end - start) = f;
  }
  return features;
}

double linear_probe(const nn::Matrix& features, const std::vector<int>& labels,
                    const LinearProbeConfig& cfg) {
  cfg.validate();
  if (features.cols() != static_cast<long>(labels.size()))
    throw std::invalid_argument("linear_probe: features/labels length mismatch");

  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  if (by_class.size() < 2)
    throw std::invalid_argument("linear_probe: need at least two classes");
  const int n_classes =
      1 + *std::max_element(labels.begin(), labels.end());

  // stratified holdout split
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> train_idx, test_idx;
  for (auto& [cls, idx] : by_class) {
    std::shuffle(idx.begin(), idx.end(), rng);
    const std::size_t n_test =
        std::max<std::size_t>(1, static_cast<std::size_t>(idx.size() * cfg.holdout_fraction));
    for (std::size_t k = 0; k < idx.size(); ++k)
      (k < n_test ? test_idx : train_idx).push_back(idx[k]);
  }

  const long d = features.rows();
  std::mt19937_64 wrng(cfg.seed + 1);
  nn::Matrix W = nn::Matrix::Zero(n_classes, d);
  nn::Vector b = nn::Vector::Zero(n_classes);
  nn::Matrix Wm = nn::Matrix::Zero(n_classes, d);
  nn::Vector bm = nn::Vector::Zero(n_classes);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double lr = cfg.lr;
    for (double m : cfg.milestones)
      if (epoch >= m * cfg.epochs) lr *= 0.1;

    std::shuffle(train_idx.begin(), train_idx.end(), rng);
    for (std::size_t start = 0; start < train_idx.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(train_idx.size(), start + cfg.batch_size);
      const long B = static_cast<long>(end - start);
      nn::Matrix X(d, B);
      std::vector<int> y(B);
      for (long k = 0; k < B; ++k) {
        X.col(k) = features.col(train_idx[start + k]);
        y[k] = labels[train_idx[start + k]];
      }
      nn::Matrix logits = W * X;
      logits.colwise() += b;
      nn::Matrix G(n_classes, B);
      for (long k = 0; k < B; ++k) {
        nn::Vector l = logits.col(k);
        l.array() -= l.maxCoeff();
        nn::Vector p = l.array().exp();
        p /= p.sum();
        p(y[k]) -= 1.0;
        G.col(k) = p / B;
      }
      Wm = cfg.momentum * Wm + G * X.transpose();
      bm = cfg.momentum * bm + G.rowwise().sum();
      W -= lr * Wm;
      b -= lr * bm;
    }
  }

  std::size_t correct = 0;
  for (std::size_t i : test_idx) {
    nn::Vector l = W * features.col(i) + b;
    int argmax = 0;
    l.maxCoeff(&argmax);
    if (argmax == labels[i]) ++correct;
  }
  return test_idx.empty() ? 0.0 : static_cast<double>(correct) / test_idx.size();
}

}  // namespace pnda::lineval
