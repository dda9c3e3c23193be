#pragma once

#include <string>
#include <vector>

#include "pnda/core.hpp"
#include "pnda/nn.hpp"

namespace pnda::losses {

enum class AugMode { NONE, PDA, NDA, PNDA };

AugMode aug_mode_from_string(const std::string& s);
std::string to_string(AugMode m);

// Index sets over a shared embedding pool (columns of a d x N matrix).
// anchor_index points into the pool; it never appears in P or N.
struct PairSpec {
  int anchor_index = 0;
  std::vector<int> positives;
  std::vector<int> negatives;

  bool operator==(const PairSpec&) const = default;
  void validate(long pool_size) const;
};

// ---- Loss values ----

// Plain InfoNCE: anchor vs one positive against a set of negatives.
double info_nce(const nn::Vector& z_i, const nn::Vector& z_p, const nn::Matrix& negatives,
                double tau);

// Extended InfoNCE (supervised-contrastive form): mean over positives of
// -ln softmax over P union N.
double pnda_info_nce(const nn::Matrix& pool, const PairSpec& spec, double tau);

// Squared distance of unit vectors: ||z_i - z_p||^2 = 2 - 2 cos.
double byol_loss(const nn::Vector& z_i, const nn::Vector& z_p);

// Extended BYOL loss; exactly one of rotated_pos / rotated_neg may be
// non-empty (empty matrices have 0 columns).
double pnda_byol_loss(const nn::Vector& z_i, const nn::Vector& z_p,
                      const nn::Matrix& rotated_pos, const nn::Matrix& rotated_neg,
                      double alpha);

// ---- Gradients (w.r.t. the normalized embeddings) ----

struct PoolLossGrad {
  double value = 0.0;
  nn::Matrix grad_pool;  // d x N, gradient for every pool column (anchor included)
};

PoolLossGrad pnda_info_nce_grad(const nn::Matrix& pool, const PairSpec& spec, double tau);

struct ByolLossGrad {
  double value = 0.0;
  nn::Vector grad_anchor;  // only the online-branch embedding receives gradient
};

ByolLossGrad pnda_byol_loss_grad(const nn::Vector& z_i, const nn::Vector& z_p,
                                 const nn::Matrix& rotated_pos, const nn::Matrix& rotated_neg,
                                 double alpha);

// ---- Positive/negative set construction (pool index layouts) ----

// MoCo pool layout: [anchor query | key | key@90 | key@180 | key@270 | queue...].
// RAI: P = all four key views; non-RAI: P = {key}, rotated keys join N.
PairSpec build_sets_moco(int queue_size, bool is_rai);
// Vanilla MoCo (mode NONE): pool = [anchor | key | queue...].
PairSpec build_sets_moco_vanilla(int queue_size);

// SimCLR pool layout with batch size M (4M rows):
// rows [0,M) = X-hat, [M,2M) = X-hat+, [2M,3M) = Rot(X-hat, theta1),
// [3M,4M) = Rot(X-hat+, theta2). Anchor view index in [0, 2M).
PairSpec build_sets_simclr(int M, int anchor_view, bool is_rai);
// Vanilla SimCLR (mode NONE): pool is the 2M un-rotated views only.
PairSpec build_sets_simclr_vanilla(int M, int anchor_view);

// Mode dispatch: PDA forces RAI, NDA forces non-RAI, PNDA uses the verdict.
// Mode NONE must use the *_vanilla builders (smaller pools); calling these
// with NONE is an error.
PairSpec simclr_spec_for_mode(AugMode mode, int M, int anchor_view, bool verdict_rai);
PairSpec moco_spec_for_mode(AugMode mode, int queue_size, bool verdict_rai);

inline constexpr double kDefaultTauSimclr = 0.5;
inline constexpr double kDefaultTauMoco = 0.2;
inline constexpr double kDefaultAlphaByol = 0.05;

}  // namespace pnda::losses
