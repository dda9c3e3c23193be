#include "pnda/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace pnda::losses {

AugMode aug_mode_from_string(const std::string& s) {
  if (s == "none") return AugMode::NONE;
  if (s == "pda") return AugMode::PDA;
  if (s == "nda") return AugMode::NDA;
  if (s == "pnda") return AugMode::PNDA;
  throw std::invalid_argument("unknown augmentation mode '" + s +
                              "' (expected none|pda|nda|pnda)");
}

std::string to_string(AugMode m) {
  switch (m) {
    case AugMode::NONE: return "none";
    case AugMode::PDA: return "pda";
    case AugMode::NDA: return "nda";
    case AugMode::PNDA: return "pnda";
  }
  return "?";
}

void PairSpec::validate(long pool_size) const {
  if (anchor_index < 0 || anchor_index >= pool_size)
    throw std::invalid_argument("PairSpec: anchor index out of pool");
  if (positives.empty()) throw std::invalid_argument("PairSpec: at least one positive required");
  std::unordered_set<int> seen;
  for (int i : positives) {
    if (i < 0 || i >= pool_size) throw std::invalid_argument("PairSpec: positive out of pool");
    if (i == anchor_index) throw std::invalid_argument("PairSpec: anchor cannot be a positive");
    if (!seen.insert(i).second) throw std::invalid_argument("PairSpec: duplicate index");
  }
  for (int i : negatives) {
    if (i < 0 || i >= pool_size) throw std::invalid_argument("PairSpec: negative out of pool");
    if (i == anchor_index) throw std::invalid_argument("PairSpec: anchor cannot be a negative");
    if (!seen.insert(i).second)
      throw std::invalid_argument("PairSpec: positive/negative sets overlap");
  }
}

double info_nce(const nn::Vector& z_i, const nn::Vector& z_p, const nn::Matrix& negatives,
                double tau) {
  if (tau <= 0.0) throw std::invalid_argument("info_nce: tau must be positive");
  if (negatives.cols() < 1) throw std::invalid_argument("info_nce: need at least one negative");
  // With |P| = 1 the general multi-positive formula reduces to this one,
  // so both share a single code path.
  nn::Matrix pool(z_i.size(), 2 + negatives.cols());
  pool.col(0) = z_i;
  pool.col(1) = z_p;
  pool.rightCols(negatives.cols()) = negatives;
  PairSpec spec;
  spec.anchor_index = 0;
  spec.positives = {1};
  for (int n = 0; n < negatives.cols(); ++n) spec.negatives.push_back(2 + n);
  return pnda_info_nce(pool, spec, tau);
}

double pnda_info_nce(const nn::Matrix& pool, const PairSpec& spec, double tau) {
  return pnda_info_nce_grad(pool, spec, tau).value;
}

PoolLossGrad pnda_info_nce_grad(const nn::Matrix& pool, const PairSpec& spec, double tau) {
  if (tau <= 0.0) throw std::invalid_argument("pnda_info_nce: tau must be positive");
  spec.validate(pool.cols());

  const nn::Vector z_i = pool.col(spec.anchor_index);
  std::vector<int> domain = spec.positives;
  domain.insert(domain.end(), spec.negatives.begin(), spec.negatives.end());

  // log-sum-exp over P union N with max subtraction
  std::vector<double> logit(domain.size());
  double mx = -1e300;
  for (std::size_t k = 0; k < domain.size(); ++k) {
    logit[k] = z_i.dot(pool.col(domain[k])) / tau;
    mx = std::max(mx, logit[k]);
  }
  double sum = 0.0;
  for (double l : logit) sum += std::exp(l - mx);
  const double lse = mx + std::log(sum);

  PoolLossGrad out;
  out.grad_pool = nn::Matrix::Zero(pool.rows(), pool.cols());
  const double inv_p = 1.0 / spec.positives.size();

  // loss = -(1/|P|) sum_p (logit_p - lse)
  for (std::size_t k = 0; k < spec.positives.size(); ++k)
    out.value -= (logit[k] - lse) * inv_p;

  // d loss / d logit_k = q_k - [k in P]/|P|, with q the softmax over the domain
  nn::Vector d_anchor = nn::Vector::Zero(pool.rows());
  for (std::size_t k = 0; k < domain.size(); ++k) {
    double dk = std::exp(logit[k] - lse);
    if (k < spec.positives.size()) dk -= inv_p;
    dk /= tau;
    d_anchor += dk * pool.col(domain[k]);
    out.grad_pool.col(domain[k]) += dk * z_i;
  }
  out.grad_pool.col(spec.anchor_index) += d_anchor;
  return out;
}

double byol_loss(const nn::Vector& z_i, const nn::Vector& z_p) {
  return (z_i - z_p).squaredNorm();
}

double pnda_byol_loss(const nn::Vector& z_i, const nn::Vector& z_p,
                      const nn::Matrix& rotated_pos, const nn::Matrix& rotated_neg,
                      double alpha) {
  return pnda_byol_loss_grad(z_i, z_p, rotated_pos, rotated_neg, alpha).value;
}

ByolLossGrad pnda_byol_loss_grad(const nn::Vector& z_i, const nn::Vector& z_p,
                                 const nn::Matrix& rotated_pos, const nn::Matrix& rotated_neg,
                                 double alpha) {
  if (rotated_pos.cols() > 0 && rotated_neg.cols() > 0)
    throw std::invalid_argument("pnda_byol_loss: rotated positive and negative sets are "
                                "mutually exclusive");
  if (alpha < 0.0) throw std::invalid_argument("pnda_byol_loss: alpha must be >= 0");

  ByolLossGrad out;
  out.value = (z_i - z_p).squaredNorm();
  out.grad_anchor = 2.0 * (z_i - z_p);
  if (rotated_pos.cols() > 0) {
    const double w = 1.0 / rotated_pos.cols();
    for (long k = 0; k < rotated_pos.cols(); ++k) {
      out.value += w * (z_i - rotated_pos.col(k)).squaredNorm();
      out.grad_anchor += 2.0 * w * (z_i - rotated_pos.col(k));
    }
  }
  if (rotated_neg.cols() > 0) {
    const double w = alpha / rotated_neg.cols();
    for (long k = 0; k < rotated_neg.cols(); ++k) {
      out.value -= w * (z_i - rotated_neg.col(k)).squaredNorm();
      out.grad_anchor -= 2.0 * w * (z_i - rotated_neg.col(k));
    }
  }
  return out;
}

PairSpec build_sets_moco(int queue_size, bool is_rai) {
  if (queue_size < 1) throw std::invalid_argument("build_sets_moco: queue must be non-empty");
  // pool: [0]=anchor, [1..4]=key views (0/90/180/270), [5..]=queue
  PairSpec spec;
  spec.anchor_index = 0;
  if (is_rai) {
    spec.positives = {1, 2, 3, 4};
  } else {
    spec.positives = {1};
    spec.negatives = {2, 3, 4};
  }
  for (int q = 0; q < queue_size; ++q) spec.negatives.push_back(5 + q);
  return spec;
}

PairSpec build_sets_moco_vanilla(int queue_size) {
  if (queue_size < 1) throw std::invalid_argument("build_sets_moco: queue must be non-empty");
  PairSpec spec;
  spec.anchor_index = 0;
  spec.positives = {1};
  for (int q = 0; q < queue_size; ++q) spec.negatives.push_back(2 + q);
  return spec;
}

PairSpec build_sets_simclr(int M, int anchor_view, bool is_rai) {
  if (M < 2) throw std::invalid_argument("build_sets_simclr: M must be >= 2");
  if (anchor_view < 0 || anchor_view >= 2 * M)
    throw std::invalid_argument("build_sets_simclr: anchor must come from X-hat or X-hat+");
  const int i = anchor_view % M;
  const int partner = anchor_view < M ? anchor_view + M : anchor_view - M;

  PairSpec spec;
  spec.anchor_index = anchor_view;
  std::unordered_set<int> excluded{anchor_view};
  if (is_rai) {
    spec.positives = {partner, 2 * M + i, 3 * M + i};
    for (int p : spec.positives) excluded.insert(p);
  } else {
    spec.positives = {partner};
    excluded.insert(partner);
  }
  for (int j = 0; j < 4 * M; ++j)
    if (!excluded.count(j)) spec.negatives.push_back(j);
  return spec;
}

PairSpec build_sets_simclr_vanilla(int M, int anchor_view) {
  if (M < 2) throw std::invalid_argument("build_sets_simclr: M must be >= 2");
  if (anchor_view < 0 || anchor_view >= 2 * M)
    throw std::invalid_argument("build_sets_simclr: anchor out of range");
  const int partner = anchor_view < M ? anchor_view + M : anchor_view - M;
  PairSpec spec;
  spec.anchor_index = anchor_view;
  spec.positives = {partner};
  for (int j = 0; j < 2 * M; ++j)
    if (j != anchor_view && j != partner) spec.negatives.push_back(j);
  return spec;
}

PairSpec simclr_spec_for_mode(AugMode mode, int M, int anchor_view, bool verdict_rai) {
  switch (mode) {
    case AugMode::PDA: return build_sets_simclr(M, anchor_view, true);
    case AugMode::NDA: return build_sets_simclr(M, anchor_view, false);
    case AugMode::PNDA: return build_sets_simclr(M, anchor_view, verdict_rai);
    case AugMode::NONE:
      throw std::invalid_argument("mode none has no rotated pool; use the vanilla builder");
  }
  throw std::logic_error("unreachable");
}

PairSpec moco_spec_for_mode(AugMode mode, int queue_size, bool verdict_rai) {
  switch (mode) {
    case AugMode::PDA: return build_sets_moco(queue_size, true);
    case AugMode::NDA: return build_sets_moco(queue_size, false);
    case AugMode::PNDA: return build_sets_moco(queue_size, verdict_rai);
    case AugMode::NONE:
      throw std::invalid_argument("mode none has no rotated pool; use the vanilla builder");
  }
  throw std::logic_error("unreachable");
}

}  // namespace pnda::losses
