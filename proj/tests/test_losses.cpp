#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "pnda/losses.hpp"

using namespace pnda;
using namespace pnda::losses;

namespace {

std::mt19937_64 g_rng(2024);

nn::Vector random_unit(int d) {
  std::normal_distribution<double> n(0.0, 1.0);
  nn::Vector v(d);
  for (int i = 0; i < d; ++i) v(i) = n(g_rng);
  return v / v.norm();
}

nn::Matrix random_unit_cols(int d, int k) {
  nn::Matrix m(d, k);
  for (int j = 0; j < k; ++j) m.col(j) = random_unit(d);
  return m;
}

// Brute-force oracle: direct naive evaluation of the extended InfoNCE,
// independent of the library's log-sum-exp code path.
double oracle_extended_info_nce(const nn::Matrix& pool, const PairSpec& spec, double tau) {
  const nn::Vector zi = pool.col(spec.anchor_index);
  double denom = 0.0;
  for (int j : spec.positives) denom += std::exp(zi.dot(pool.col(j)) / tau);
  for (int j : spec.negatives) denom += std::exp(zi.dot(pool.col(j)) / tau);
  double total = 0.0;
  for (int p : spec.positives)
    total += std::log(std::exp(zi.dot(pool.col(p)) / tau) / denom);
  return -total / spec.positives.size();
}

PairSpec random_spec(int pool_size, std::mt19937_64& rng) {
  std::vector<int> idx(pool_size);
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  PairSpec spec;
  spec.anchor_index = idx[0];
  std::uniform_int_distribution<int> np(1, pool_size - 2);
  int n_pos = np(rng);
  for (int k = 1; k <= n_pos; ++k) spec.positives.push_back(idx[k]);
  for (int k = n_pos + 1; k < pool_size; ++k) spec.negatives.push_back(idx[k]);
  return spec;
}

}  // namespace

TEST_CASE("info_nce: spec examples") {
  nn::Vector zi(3), zp(3);
  zi << 1, 0, 0;
  zp << 1, 0, 0;
  nn::Matrix neg(3, 1);
  neg.col(0) << 0, 1, 0;

  // identical positive, one orthogonal negative, tau=1 -> ln(1 + e^-1)
  CHECK(info_nce(zi, zp, neg, 1.0) ==
        doctest::Approx(std::log(1.0 + std::exp(-1.0))).epsilon(1e-9));

  // all similarities equal, K negatives -> ln(1+K)
  for (int K = 1; K <= 5; ++K) {
    nn::Matrix negs(3, K);
    for (int k = 0; k < K; ++k) negs.col(k) = zp;
    CHECK(info_nce(zi, zp, negs, 1.0) == doctest::Approx(std::log(1.0 + K)).epsilon(1e-9));
  }

  // tau -> small with positive similarity strictly largest -> loss -> 0
  nn::Matrix far(3, 1);
  far.col(0) << 0, 0.6, 0.8;
  CHECK(info_nce(zi, zp, far, 0.02) < 1e-6);

  CHECK_THROWS_AS(info_nce(zi, zp, neg, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(info_nce(zi, zp, nn::Matrix(3, 0), 1.0), std::invalid_argument);
}

TEST_CASE("pnda_info_nce with |P|=1 equals info_nce to 1e-12") {
  for (int trial = 0; trial < 1000; ++trial) {
    const int d = 8, K = 1 + trial % 6;
    nn::Vector zi = random_unit(d), zp = random_unit(d);
    nn::Matrix negs = random_unit_cols(d, K);

    nn::Matrix pool(d, 2 + K);
    pool.col(0) = zi;
    pool.col(1) = zp;
    pool.rightCols(K) = negs;
    PairSpec spec{0, {1}, {}};
    for (int k = 0; k < K; ++k) spec.negatives.push_back(2 + k);

    double a = pnda_info_nce(pool, spec, 0.5);
    double b = info_nce(zi, zp, negs, 0.5);
    CHECK(std::abs(a - b) < 1e-12);
  }
}

TEST_CASE("pnda_info_nce matches the brute-force oracle on small pools") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 500; ++trial) {
    const int pool_size = 4 + trial % 5;  // up to 8 embeddings
    nn::Matrix pool = random_unit_cols(6, pool_size);
    PairSpec spec = random_spec(pool_size, rng);
    std::uniform_real_distribution<double> taud(0.1, 1.0);
    double tau = taud(rng);
    CHECK(std::abs(pnda_info_nce(pool, spec, tau) -
                   oracle_extended_info_nce(pool, spec, tau)) < 1e-10);
  }
}

TEST_CASE("pnda_info_nce: |P|=2 identical-to-anchor positives against orthogonal negatives") {
  nn::Matrix pool(4, 5);
  pool.col(0) << 1, 0, 0, 0;  // anchor
  pool.col(1) << 1, 0, 0, 0;  // positives identical to anchor
  pool.col(2) << 1, 0, 0, 0;
  pool.col(3) << 0, 1, 0, 0;  // orthogonal negatives
  pool.col(4) << 0, 0, 1, 0;
  PairSpec spec{0, {1, 2}, {3, 4}};
  CHECK(pnda_info_nce(pool, spec, 1.0) ==
        doctest::Approx(oracle_extended_info_nce(pool, spec, 1.0)).epsilon(1e-12));
}

TEST_CASE("adding a negative strictly increases the loss") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    nn::Matrix pool = random_unit_cols(8, 7);
    PairSpec spec{0, {1, 2}, {3, 4, 5}};
    PairSpec more = spec;
    more.negatives.push_back(6);
    CHECK(pnda_info_nce(pool, more, 0.5) > pnda_info_nce(pool, spec, 0.5));
  }
}

TEST_CASE("pnda_info_nce is invariant under permutations of P and N") {
  std::mt19937_64 rng(19);
  nn::Matrix pool = random_unit_cols(8, 8);
  PairSpec spec{0, {1, 2, 3}, {4, 5, 6, 7}};
  double base = pnda_info_nce(pool, spec, 0.3);
  for (int trial = 0; trial < 20; ++trial) {
    PairSpec perm = spec;
    std::shuffle(perm.positives.begin(), perm.positives.end(), rng);
    std::shuffle(perm.negatives.begin(), perm.negatives.end(), rng);
    CHECK(std::abs(pnda_info_nce(pool, perm, 0.3) - base) < 1e-12);
  }
}

TEST_CASE("contrastive losses stay finite for any unit inputs and tau in [0.05, 1]") {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> taud(0.05, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    nn::Matrix pool = random_unit_cols(16, 6);
    PairSpec spec = random_spec(6, rng);
    CHECK(std::isfinite(pnda_info_nce(pool, spec, taud(rng))));
  }
}

TEST_CASE("pnda_info_nce gradient matches finite differences") {
  std::mt19937_64 rng(29);
  const double eps = 1e-6;
  for (int trial = 0; trial < 25; ++trial) {
    nn::Matrix pool = random_unit_cols(6, 6);
    PairSpec spec = random_spec(6, rng);
    double tau = 0.2 + 0.6 * (trial % 5) / 4.0;

    auto lg = pnda_info_nce_grad(pool, spec, tau);
    for (long j = 0; j < pool.cols(); ++j)
      for (long i = 0; i < pool.rows(); ++i) {
        double orig = pool(i, j);
        pool(i, j) = orig + eps;
        double lp = pnda_info_nce(pool, spec, tau);
        pool(i, j) = orig - eps;
        double lm = pnda_info_nce(pool, spec, tau);
        pool(i, j) = orig;
        double fd = (lp - lm) / (2 * eps);
        double denom = std::max({std::abs(fd), std::abs(lg.grad_pool(i, j)), 1e-6});
        CHECK(std::abs(lg.grad_pool(i, j) - fd) / denom < 1e-4);
      }
  }
}

TEST_CASE("byol_loss: spec examples") {
  nn::Vector a(3), b(3);
  a << 1, 0, 0;
  b << 1, 0, 0;
  CHECK(byol_loss(a, b) == doctest::Approx(0.0));
  b << 0, 1, 0;
  CHECK(byol_loss(a, b) == doctest::Approx(2.0));  // orthogonal
  b << -1, 0, 0;
  CHECK(byol_loss(a, b) == doctest::Approx(4.0));  // antipodal
}

TEST_CASE("pnda_byol_loss: spec examples and exclusivity") {
  nn::Vector zi(3);
  zi << 1, 0, 0;
  nn::Matrix empty(3, 0);

  // RAI with all rotated views equal to z_p = z_i -> 0
  nn::Matrix same(3, 3);
  for (int k = 0; k < 3; ++k) same.col(k) = zi;
  CHECK(pnda_byol_loss(zi, zi, same, empty, 0.05) == doctest::Approx(0.0));

  // non-RAI, z_p = z_i, three orthogonal rotated negatives, alpha = 0.05
  nn::Matrix orth(3, 3);
  orth.col(0) << 0, 1, 0;
  orth.col(1) << 0, 0, 1;
  orth.col(2) << 0, 1, 0;
  CHECK(pnda_byol_loss(zi, zi, empty, orth, 0.05) == doctest::Approx(-0.1).epsilon(1e-12));

  CHECK_THROWS_AS(pnda_byol_loss(zi, zi, same, orth, 0.05), std::invalid_argument);
  CHECK_THROWS_AS(pnda_byol_loss(zi, zi, empty, orth, -1.0), std::invalid_argument);
}

TEST_CASE("byol gradient matches finite differences") {
  std::mt19937_64 rng(31);
  const double eps = 1e-6;
  for (int trial = 0; trial < 25; ++trial) {
    nn::Vector zi = random_unit(5), zp = random_unit(5);
    bool rai = trial % 2 == 0;
    nn::Matrix rot = random_unit_cols(5, 3);
    nn::Matrix empty(5, 0);
    const nn::Matrix& pos = rai ? rot : empty;
    const nn::Matrix& neg = rai ? empty : rot;

    auto lg = pnda_byol_loss_grad(zi, zp, pos, neg, 0.05);
    for (int i = 0; i < 5; ++i) {
      double orig = zi(i);
      zi(i) = orig + eps;
      double lp = pnda_byol_loss(zi, zp, pos, neg, 0.05);
      zi(i) = orig - eps;
      double lm = pnda_byol_loss(zi, zp, pos, neg, 0.05);
      zi(i) = orig;
      double fd = (lp - lm) / (2 * eps);
      double denom = std::max({std::abs(fd), std::abs(lg.grad_anchor(i)), 1e-6});
      CHECK(std::abs(lg.grad_anchor(i) - fd) / denom < 1e-4);
    }
  }
}
