#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pnda/core.hpp"
#include "pnda/nn.hpp"

namespace pnda::sampler {

struct SamplerConfig {
  int beta1 = 10;               // Step-1 epochs
  int beta2 = 200;              // Step-2 epochs
  double lambda_prime = 0.20;   // separation weight cap
  double margin = 0.20;         // m
  double rho = kDefaultRho;     // entropy center, ln(4)/2
  nn::OptimizerSpec opt;        // Adam lr 1e-3 by default
  int batch_size = 64;
  std::uint64_t seed = 0;
  nn::EncoderSpec encoder;
  double tune_tolerance = 0.01;

  void validate() const;
};

struct ScoreRecord {
  std::string id;
  double score = 0.0;  // mean rotation-prediction entropy, [0, ln 4]
  RaiVerdict verdict = RaiVerdict::NON_RAI;
};

struct RaiPartition {
  std::vector<ScoreRecord> records;
  double rho = kDefaultRho;
  double margin = 0.20;
  double step1_accuracy = 0.0;
  double step2_accuracy = 0.0;

  std::size_t rai_count() const;
  const ScoreRecord* find(const std::string& id) const;
};

// Feature extractor G plus 4-way rotation head F; p(x) = softmax(F(G(x))).
struct RotationPredictor {
  nn::Sequential encoder;
  nn::Sequential head;

  // logits: 4 x B for a batch of flattened images (pixels x B).
  nn::Matrix logits(const nn::Matrix& batch, bool train = false);
  ProbVector predict(const ImageSample& img);

  std::vector<nn::Param*> params();
  void zero_grad();
  void backward(const nn::Matrix& grad_logits);
};

RotationPredictor make_rotation_predictor(const nn::EncoderSpec& spec, std::uint64_t seed);

// ---- Losses over probability vectors (value-level contracts) ----

// Rotation cross-entropy, summed over all 4B expanded samples and divided
// by B (the pre-expansion batch size), i.e. 4x the per-sample mean.
double loss_crs(const std::vector<ProbVector>& preds, const std::vector<Rotation>& labels);

// Entropy separation: -|H(p) - rho| outside the margin band, else 0.
double loss_es(const ProbVector& p, double rho, double m);

// Filtered cross-entropy: -ln p[label] when H(p) - rho < -m, else 0.
double loss_crs_filtered(const ProbVector& p, Rotation label, double rho, double m);

// ---- Logit-level batch losses with analytic gradients (training path) ----

struct LossGrad {
  double value = 0.0;
  nn::Matrix grad_logits;  // 4 x N
};

ProbVector softmax_logits(const Eigen::Vector4d& logits);

// Normalization: sum over the N = 4B expanded samples divided by B.
LossGrad loss_crs_batch(const nn::Matrix& logits, const std::vector<Rotation>& labels,
                        int pre_expansion_batch);
LossGrad loss_es_batch(const nn::Matrix& logits, int pre_expansion_batch, double rho, double m);
LossGrad loss_crs_filtered_batch(const nn::Matrix& logits, const std::vector<Rotation>& labels,
                                 int pre_expansion_batch, double rho, double m);

// Step-2 objective: filtered CE + lambda * entropy separation, with
// lambda = lambda' * epoch / beta2 (1-based epoch).
LossGrad step2_objective(const nn::Matrix& logits, const std::vector<Rotation>& labels,
                         int pre_expansion_batch, int epoch, const SamplerConfig& cfg);

double step2_lambda(int epoch, const SamplerConfig& cfg);

// ---- Training pipeline ----

struct TrainReport {
  std::vector<double> epoch_losses;
  double final_accuracy = 0.0;  // rotation accuracy over the expanded corpus
};

// Step 1: train on all samples for beta1 epochs minimizing rotation CE.
TrainReport train_step1(const std::vector<ImageSample>& corpus, RotationPredictor& model,
                        const SamplerConfig& cfg);
// Step 2: warm-started model, beta2 epochs of the combined objective.
TrainReport train_step2(const std::vector<ImageSample>& corpus, RotationPredictor& model,
                        const SamplerConfig& cfg);

// Mean entropy of the predictor outputs over the 4-rotation orbit.
double score(RotationPredictor& model, const ImageSample& img);

std::vector<ScoreRecord> score_corpus(RotationPredictor& model,
                                      const std::vector<ImageSample>& corpus);

// Verdict RAI iff score > rho + m (strict).
RaiPartition partition(const std::vector<std::pair<std::string, double>>& scores,
                       double rho, double m);

// Ratio-sweep variant: the top `ratio` fraction by descending score is
// marked RAI regardless of the threshold. ratio outside [0,1] is an error.
RaiPartition partition_by_ratio(const std::vector<ScoreRecord>& scores, double ratio);

// Rotation accuracy over the rotation-expanded corpus.
double rotation_accuracy(RotationPredictor& model, const std::vector<ImageSample>& corpus,
                         int batch_size = 256);

// 80/20 split probe: returns the epoch just before smoothed validation
// accuracy starts to degrade, or max_epochs if it never does.
struct ProbeResult {
  int best_epoch = 0;
  bool degraded = false;  // false => never degraded within max_epochs
  std::vector<double> train_acc;
  std::vector<double> val_acc;
};
ProbeResult overfit_probe(const std::vector<ImageSample>& corpus, const SamplerConfig& cfg,
                          int max_epochs);

// Accept a (lambda', m) pair when step accuracies agree within tol.
bool tune_check(double acc1, double acc2, double tol = 0.01);

}  // namespace pnda::sampler
