#include "pnda/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace pnda::sampler {

namespace {

nn::Matrix batch_to_matrix(const std::vector<ImageSample>& batch) {
  const long rows = static_cast<long>(batch.front().pixels.size());
  nn::Matrix x(rows, batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    if (static_cast<long>(batch[b].pixels.size()) != rows)
      throw std::invalid_argument("inconsistent image shapes in batch");
    for (long i = 0; i < rows; ++i) x(i, b) = batch[b].pixels[i];
  }
  return x;
}

// Stable softmax + log-probs for one 4-logit column.
void softmax_col(const Eigen::Vector4d& l, Eigen::Vector4d& p, Eigen::Vector4d& logp) {
  const double mx = l.maxCoeff();
  Eigen::Vector4d e = (l.array() - mx).exp();
  const double s = e.sum();
  p = e / s;
  logp = (l.array() - mx) - std::log(s);
}

double entropy_of(const Eigen::Vector4d& p, const Eigen::Vector4d& logp) {
  double h = 0.0;
  for (int k = 0; k < 4; ++k) h -= p(k) * logp(k);
  return std::max(h, 0.0);
}

Eigen::Vector4d entropy_grad_logits(const Eigen::Vector4d& p, const Eigen::Vector4d& logp,
                                    double h) {
  Eigen::Vector4d g;
  for (int k = 0; k < 4; ++k) g(k) = -p(k) * (logp(k) + h);
  return g;
}

struct ExpandedEpochData {
  nn::Matrix images;             // pixels x 4N
  std::vector<Rotation> labels;  // 4N
};

}  // namespace

void SamplerConfig::validate() const {
  if (beta1 < 1 || beta2 < 1) throw std::invalid_argument("beta1 and beta2 must be >= 1");
  if (!(margin > 0.0 && margin < rho))
    throw std::invalid_argument("margin must lie in (0, rho)");
  if (lambda_prime <= 0.0) throw std::invalid_argument("lambda' must be positive");
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
}

std::size_t RaiPartition::rai_count() const {
  return std::count_if(records.begin(), records.end(),
                       [](const ScoreRecord& r) { return r.verdict == RaiVerdict::RAI; });
}

const ScoreRecord* RaiPartition::find(const std::string& id) const {
  for (const auto& r : records)
    if (r.id == id) return &r;
  return nullptr;
}

nn::Matrix RotationPredictor::logits(const nn::Matrix& batch, bool train) {
  return head.forward(encoder.forward(batch, train), train);
}

ProbVector RotationPredictor::predict(const ImageSample& img) {
  nn::Matrix x(img.pixels.size(), 1);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) x(i, 0) = img.pixels[i];
  nn::Matrix l = logits(x, false);
  return softmax_logits(l.col(0));
}

std::vector<nn::Param*> RotationPredictor::params() {
  auto out = encoder.params();
  for (auto* p : head.params()) out.push_back(p);
  return out;
}

void RotationPredictor::zero_grad() {
  encoder.zero_grad();
  head.zero_grad();
}

void RotationPredictor::backward(const nn::Matrix& grad_logits) {
  encoder.backward(head.backward(grad_logits));
}

RotationPredictor make_rotation_predictor(const nn::EncoderSpec& spec, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  RotationPredictor model;
  model.encoder = nn::make_conv_encoder(spec, rng);
  nn::Sequential head;
  head.add(std::make_unique<nn::Linear>(spec.feature_dim(), 4, rng));
  model.head = std::move(head);
  return model;
}

ProbVector softmax_logits(const Eigen::Vector4d& logits) {
  Eigen::Vector4d p, logp;
  softmax_col(logits, p, logp);
  ProbVector out;
  for (int k = 0; k < 4; ++k) out.p[k] = p(k);
  return out;
}

double loss_crs(const std::vector<ProbVector>& preds, const std::vector<Rotation>& labels) {
  if (preds.size() != labels.size())
    throw std::invalid_argument("loss_crs: preds/labels length mismatch");
  if (preds.empty()) throw std::invalid_argument("loss_crs: empty batch");
  if (preds.size() % 4 != 0)
    throw std::invalid_argument("loss_crs: expanded batch size must be a multiple of 4");
  const double B = preds.size() / 4.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    preds[i].validate();
    sum -= std::log(std::max(preds[i][rotation_class(labels[i])], 1e-12));
  }
  return sum / B;
}

double loss_es(const ProbVector& p, double rho, double m) {
  if (!(m > 0.0 && m < rho)) throw std::invalid_argument("loss_es: need 0 < m < rho");
  const double d = entropy(p) - rho;
  return std::abs(d) > m ? -std::abs(d) : 0.0;
}

double loss_crs_filtered(const ProbVector& p, Rotation label, double rho, double m) {
  if (entropy(p) - rho < -m)
    return -std::log(std::max(p[rotation_class(label)], 1e-12));
  return 0.0;
}

LossGrad loss_crs_batch(const nn::Matrix& logits, const std::vector<Rotation>& labels,
                        int pre_expansion_batch) {
  if (logits.cols() != static_cast<long>(labels.size()))
    throw std::invalid_argument("loss_crs_batch: logits/labels length mismatch");
  if (pre_expansion_batch < 1) throw std::invalid_argument("loss_crs_batch: B must be >= 1");
  LossGrad out;
  out.grad_logits = nn::Matrix::Zero(4, logits.cols());
  const double inv_b = 1.0 / pre_expansion_batch;
  for (long i = 0; i < logits.cols(); ++i) {
    Eigen::Vector4d p, logp;
    softmax_col(logits.col(i), p, logp);
    const int y = rotation_class(labels[i]);
    out.value -= logp(y) * inv_b;
    Eigen::Vector4d g = p;
    g(y) -= 1.0;
    out.grad_logits.col(i) = g * inv_b;
  }
  return out;
}

LossGrad loss_es_batch(const nn::Matrix& logits, int pre_expansion_batch, double rho,
                       double m) {
  LossGrad out;
  out.grad_logits = nn::Matrix::Zero(4, logits.cols());
  const double inv_b = 1.0 / pre_expansion_batch;
  for (long i = 0; i < logits.cols(); ++i) {
    Eigen::Vector4d p, logp;
    softmax_col(logits.col(i), p, logp);
    const double h = entropy_of(p, logp);
    const double d = h - rho;
    if (std::abs(d) > m) {
      out.value += -std::abs(d) * inv_b;
      // gate is a hard branch: no gradient through the condition itself
      const double sign = d > 0.0 ? 1.0 : -1.0;
      out.grad_logits.col(i) = -sign * entropy_grad_logits(p, logp, h) * inv_b;
    }
  }
  return out;
}

LossGrad loss_crs_filtered_batch(const nn::Matrix& logits, const std::vector<Rotation>& labels,
                                 int pre_expansion_batch, double rho, double m) {
  if (logits.cols() != static_cast<long>(labels.size()))
    throw std::invalid_argument("loss_crs_filtered_batch: length mismatch");
  LossGrad out;
  out.grad_logits = nn::Matrix::Zero(4, logits.cols());
  const double inv_b = 1.0 / pre_expansion_batch;
  for (long i = 0; i < logits.cols(); ++i) {
    Eigen::Vector4d p, logp;
    softmax_col(logits.col(i), p, logp);
    const double h = entropy_of(p, logp);
    if (h - rho < -m) {
      const int y = rotation_class(labels[i]);
      out.value -= logp(y) * inv_b;
      Eigen::Vector4d g = p;
      g(y) -= 1.0;
      out.grad_logits.col(i) = g * inv_b;
    }
  }
  return out;
}

double step2_lambda(int epoch, const SamplerConfig& cfg) {
  if (epoch < 1 || epoch > cfg.beta2)
    throw std::invalid_argument("step2 epoch out of range [1, beta2]");
  return cfg.lambda_prime * static_cast<double>(epoch) / cfg.beta2;
}

LossGrad step2_objective(const nn::Matrix& logits, const std::vector<Rotation>& labels,
                         int pre_expansion_batch, int epoch, const SamplerConfig& cfg) {
  const double lambda = step2_lambda(epoch, cfg);
  LossGrad ce = loss_crs_filtered_batch(logits, labels, pre_expansion_batch, cfg.rho, cfg.margin);
  LossGrad es = loss_es_batch(logits, pre_expansion_batch, cfg.rho, cfg.margin);
  LossGrad out;
  out.value = ce.value + lambda * es.value;
  out.grad_logits = ce.grad_logits + lambda * es.grad_logits;
  return out;
}

namespace {

// One pass over the corpus: shuffle, expand each minibatch with rotations,
// apply `loss_fn` and take an optimizer step.
template <typename LossFn>
double run_epoch(const std::vector<ImageSample>& corpus, RotationPredictor& model,
                 nn::Optimizer& opt, int batch_size, std::mt19937_64& rng, double lr_scale,
                 LossFn&& loss_fn) {
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  double epoch_loss = 0.0;
  int steps = 0;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    std::vector<ImageSample> batch;
    batch.reserve(end - start);
    for (std::size_t i = start; i < end; ++i) batch.push_back(corpus[order[i]]);

    auto expanded = expand_with_rotations(batch);
    std::vector<ImageSample> images;
    std::vector<Rotation> labels;
    images.reserve(expanded.size());
    for (auto& [img, rot] : expanded) {
      images.push_back(std::move(img));
      labels.push_back(rot);
    }

    nn::Matrix x = batch_to_matrix(images);
    model.zero_grad();
    nn::Matrix logit = model.logits(x, true);
    LossGrad lg = loss_fn(logit, labels, static_cast<int>(batch.size()));
    if (!std::isfinite(lg.value))
      throw std::runtime_error("rotation training diverged: non-finite loss at step " +
                               std::to_string(steps));
    model.backward(lg.grad_logits);
    opt.step(lr_scale);
    epoch_loss += lg.value;
    ++steps;
  }
  return steps > 0 ? epoch_loss / steps : 0.0;
}

}  // namespace

double rotation_accuracy(RotationPredictor& model, const std::vector<ImageSample>& corpus,
                         int batch_size) {
  std::size_t correct = 0, total = 0;
  for (std::size_t start = 0; start < corpus.size(); start += batch_size) {
    const std::size_t end = std::min(corpus.size(), start + batch_size);
    std::vector<ImageSample> chunk(corpus.begin() + start, corpus.begin() + end);
    auto expanded = expand_with_rotations(chunk);
    std::vector<ImageSample> images;
    std::vector<Rotation> labels;
    for (auto& [img, rot] : expanded) {
      images.push_back(std::move(img));
      labels.push_back(rot);
    }
    nn::Matrix logit = model.logits(batch_to_matrix(images), false);
    for (long i = 0; i < logit.cols(); ++i) {
      int argmax = 0;
      logit.col(i).maxCoeff(&argmax);
      if (argmax == rotation_class(labels[i])) ++correct;
      ++total;
    }
  }
  return total > 0 ? static_cast<double>(correct) / total : 0.0;
}

TrainReport train_step1(const std::vector<ImageSample>& corpus, RotationPredictor& model,
                        const SamplerConfig& cfg) {
  cfg.validate();
  if (corpus.empty()) throw std::invalid_argument("train_step1: empty corpus");
  std::mt19937_64 rng(cfg.seed + 1);
  nn::Optimizer opt(model.params(), cfg.opt);
  TrainReport report;
  for (int epoch = 1; epoch <= cfg.beta1; ++epoch) {
    const double scale = cfg.opt.cosine_decay ? nn::cosine_scale(epoch - 1, cfg.beta1) : 1.0;
    double loss = run_epoch(corpus, model, opt, cfg.batch_size, rng, scale,
                            [](const nn::Matrix& l, const std::vector<Rotation>& y, int b) {
                              return loss_crs_batch(l, y, b);
                            });
    report.epoch_losses.push_back(loss);
  }
  report.final_accuracy = rotation_accuracy(model, corpus);
  return report;
}

TrainReport train_step2(const std::vector<ImageSample>& corpus, RotationPredictor& model,
                        const SamplerConfig& cfg) {
  cfg.validate();
  if (corpus.empty()) throw std::invalid_argument("train_step2: empty corpus");
  std::mt19937_64 rng(cfg.seed + 2);
  nn::Optimizer opt(model.params(), cfg.opt);
  TrainReport report;
  for (int epoch = 1; epoch <= cfg.beta2; ++epoch) {
    const double scale = cfg.opt.cosine_decay ? nn::cosine_scale(epoch - 1, cfg.beta2) : 1.0;
    double loss = run_epoch(corpus, model, opt, cfg.batch_size, rng, scale,
                            [&](const nn::Matrix& l, const std::vector<Rotation>& y, int b) {
                              return step2_objective(l, y, b, epoch, cfg);
                            });
    report.epoch_losses.push_back(loss);
  }
  report.final_accuracy = rotation_accuracy(model, corpus);
  return report;
}

double score(RotationPredictor& model, const ImageSample& img) {
  double sum = 0.0;
  for (Rotation r : kRotations) sum += entropy(model.predict(rotate(img, r)));
  return sum / 4.0;
}

std::vector<ScoreRecord> score_corpus(RotationPredictor& model,
                                      const std::vector<ImageSample>& corpus) {
  std::vector<ScoreRecord> out;
  out.reserve(corpus.size());
  const int chunk = 64;
  for (std::size_t start = 0; start < corpus.size(); start += chunk) {
    const std::size_t end = std::min(corpus.size(), start + chunk);
    std::vector<ImageSample> images;
    for (std::size_t i = start; i < end; ++i)
      for (Rotation r : kRotations) images.push_back(rotate(corpus[i], r));
    nn::Matrix logit = model.logits(batch_to_matrix(images), false);
    for (std::size_t i = start; i < end; ++i) {
      double sum = 0.0;
      for (int r = 0; r < 4; ++r) {
        long col = static_cast<long>(i - start) * 4 + r;
        sum += entropy(softmax_logits(logit.col(col)));
      }
      out.push_back({corpus[i].id, sum / 4.0, RaiVerdict::NON_RAI});
    }
  }
  return out;
}

RaiPartition partition(const std::vector<std::pair<std::string, double>>& scores,
                       double rho, double m) {
  RaiPartition part;
  part.rho = rho;
  part.margin = m;
  const double threshold = rho + m;
  for (const auto& [id, s] : scores) {
    if (!std::isfinite(s)) throw std::invalid_argument("partition: non-finite score for " + id);
    ScoreRecord rec;
    rec.id = id;
    rec.score = s;
    rec.verdict = s > threshold ? RaiVerdict::RAI : RaiVerdict::NON_RAI;  // strict
    part.records.push_back(std::move(rec));
  }
  return part;
}

RaiPartition partition_by_ratio(const std::vector<ScoreRecord>& scores, double ratio) {
  if (!(ratio >= 0.0 && ratio <= 1.0))
    throw std::invalid_argument("partition_by_ratio: ratio must lie in [0, 1]");
  RaiPartition part;
  part.records = scores;
  // stable order: descending score, id as tiebreak so reruns agree
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a].score != scores[b].score) return scores[a].score > scores[b].score;
    return scores[a].id < scores[b].id;
  });
  const std::size_t n_rai = static_cast<std::size_t>(std::lround(ratio * scores.size()));
  for (std::size_t k = 0; k < order.size(); ++k)
    part.records[order[k]].verdict = k < n_rai ? RaiVerdict::RAI : RaiVerdict::NON_RAI;
  return part;
}

ProbeResult overfit_probe(const std::vector<ImageSample>& corpus, const SamplerConfig& cfg,
                          int max_epochs) {
  if (max_epochs < 2) throw std::invalid_argument("overfit_probe: max_epochs must be >= 2");
  std::mt19937_64 rng(cfg.seed + 3);
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  const std::size_t n_train = (corpus.size() * 4) / 5;
  std::vector<ImageSample> train, val;
  for (std::size_t i = 0; i < order.size(); ++i)
    (i < n_train ? train : val).push_back(corpus[order[i]]);

  RotationPredictor model = make_rotation_predictor(cfg.encoder, cfg.seed + 4);
  nn::Optimizer opt(model.params(), cfg.opt);
  ProbeResult res;
  for (int epoch = 1; epoch <= max_epochs; ++epoch) {
    const double scale = cfg.opt.cosine_decay ? nn::cosine_scale(epoch - 1, max_epochs) : 1.0;
    run_epoch(train, model, opt, cfg.batch_size, rng, scale,
              [](const nn::Matrix& l, const std::vector<Rotation>& y, int b) {
                return loss_crs_batch(l, y, b);
              });
    res.train_acc.push_back(rotation_accuracy(model, train));
    res.val_acc.push_back(rotation_accuracy(model, val));
  }

  // Trailing 3-epoch moving average, then the first epoch whose successor
  // shows lower smoothed validation accuracy.
  std::vector<double> smooth(res.val_acc.size());
  for (std::size_t e = 0; e < res.val_acc.size(); ++e) {
    std::size_t lo = e >= 2 ? e - 2 : 0;
    double s = 0.0;
    for (std::size_t i = lo; i <= e; ++i) s += res.val_acc[i];
    smooth[e] = s / (e - lo + 1);
  }
  for (std::size_t e = 0; e + 1 < smooth.size(); ++e) {
    if (smooth[e + 1] < smooth[e]) {
      res.best_epoch = static_cast<int>(e) + 1;
      res.degraded = true;
      return res;
    }
  }
  res.best_epoch = max_epochs;
  res.degraded = false;
  return res;
}

bool tune_check(double acc1, double acc2, double tol) {
  if (acc1 < 0.0 || acc1 > 1.0 || acc2 < 0.0 || acc2 > 1.0)
    throw std::invalid_argument("tune_check: accuracies must lie in [0,1]");
  return std::abs(acc2 - acc1) <= tol;
}

}  // namespace pnda::sampler
