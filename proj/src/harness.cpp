#include "pnda/harness.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace pnda::harness {

namespace {

nn::Matrix images_to_matrix(const std::vector<ImageSample>& batch) {
  const long rows = static_cast<long>(batch.front().pixels.size());
  nn::Matrix x(rows, batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b)
    for (long i = 0; i < rows; ++i) x(i, b) = batch[b].pixels[i];
  return x;
}

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

// 3x3 box blur, edge-clamped.
void box_blur(std::vector<double>& px, int n) {
  std::vector<double> out(px.size());
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      double s = 0.0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          int yy = std::clamp(y + dy, 0, n - 1);
          int xx = std::clamp(x + dx, 0, n - 1);
          s += px[yy * n + xx];
        }
      out[y * n + x] = s / 9.0;
    }
  px = out;
}

struct ContrastiveModel {
  nn::Sequential encoder;
  nn::Sequential proj;

  nn::Matrix raw_embed(const nn::Matrix& x, bool train) {
    return proj.forward(encoder.forward(x, train), train);
  }
  void backward(const nn::Matrix& grad_raw) { encoder.backward(proj.backward(grad_raw)); }
  std::vector<nn::Param*> params() {
    auto v = encoder.params();
    for (auto* p : proj.params()) v.push_back(p);
    return v;
  }
  void zero_grad() {
    encoder.zero_grad();
    proj.zero_grad();
  }
};

ContrastiveModel make_model(const ExperimentConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ContrastiveModel m;
  m.encoder = nn::make_conv_encoder(cfg.encoder, rng);
  nn::Sequential proj;
  proj.add(std::make_unique<nn::Linear>(cfg.encoder.feature_dim(), cfg.projection_dim, rng));
  proj.add(std::make_unique<nn::ReLU>());
  proj.add(std::make_unique<nn::Linear>(cfg.projection_dim, cfg.projection_dim, rng));
  m.proj = std::move(proj);
  return m;
}

nn::Sequential make_predictor(const ExperimentConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  nn::Sequential pred;
  pred.add(std::make_unique<nn::Linear>(cfg.projection_dim, cfg.projection_dim, rng));
  pred.add(std::make_unique<nn::ReLU>());
  pred.add(std::make_unique<nn::Linear>(cfg.projection_dim, cfg.projection_dim, rng));
  return pred;
}

bool verdict_rai_for(const ExperimentConfig& cfg, const sampler::RaiPartition* partition,
                     const std::string& id) {
  switch (cfg.mode) {
    case losses::AugMode::PDA: return true;
    case losses::AugMode::NDA: return false;
    case losses::AugMode::PNDA: {
      const sampler::ScoreRecord* rec = partition->find(id);
      if (!rec)
        throw std::invalid_argument("PNDA partition does not cover image '" + id + "'");
      return rec->verdict == RaiVerdict::RAI;
    }
    case losses::AugMode::NONE:
      throw std::logic_error("mode none has no verdicts");
  }
  throw std::logic_error("unreachable");
}

std::array<Rotation, 2> draw_thetas(std::mt19937_64& rng) {
  // two different degrees from {90, 180, 270}, without replacement
  std::array<Rotation, 3> opts = {Rotation::R90, Rotation::R180, Rotation::R270};
  std::uniform_int_distribution<int> d1(0, 2);
  int a = d1(rng);
  std::uniform_int_distribution<int> d2(0, 1);
  int b = d2(rng);
  if (b >= a) ++b;
  return {opts[a], opts[b]};
}

}  // namespace

Framework framework_from_string(const std::string& s) {
  if (s == "simclr") return Framework::SIMCLR;
  if (s == "mocov2" || s == "moco_v2" || s == "moco") return Framework::MOCO_V2;
  if (s == "byol") return Framework::BYOL;
  throw std::invalid_argument("unknown framework '" + s + "' (expected simclr|mocov2|byol)");
}

std::string to_string(Framework f) {
  switch (f) {
    case Framework::SIMCLR: return "simclr";
    case Framework::MOCO_V2: return "mocov2";
    case Framework::BYOL: return "byol";
  }
  return "?";
}

void ExperimentConfig::validate() const {
  if (batch_size < 2) throw std::invalid_argument("batch size M must be >= 2");
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (framework != Framework::BYOL && tau <= 0.0)
    throw std::invalid_argument("tau must be positive");
  if (framework == Framework::MOCO_V2 && queue_size < batch_size)
    throw std::invalid_argument("MoCo queue size must be >= batch size");
  if (!(ema_momentum >= 0.0 && ema_momentum < 1.0))
    throw std::invalid_argument("EMA momentum must lie in [0, 1)");
}

std::vector<ImageSample> generate_synthetic_corpus(const SyntheticCorpusSpec& spec) {
  if (spec.n_rai < 0 || spec.n_nonrai < 0)
    throw std::invalid_argument("synthetic corpus counts must be >= 0");
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, spec.noise_sigma);
  const int n = spec.image_size;

  std::vector<ImageSample> corpus;
  corpus.reserve(spec.n_rai + spec.n_nonrai);

  for (int k = 0; k < spec.n_rai; ++k) {
    // smooth random texture, then C4-symmetrized so the clean pattern is
    // exactly invariant under 90-degree rotation
    std::vector<double> base(n * n);
    for (auto& v : base) v = uni(rng);
    box_blur(base, n);
    box_blur(base, n);
    std::vector<double> sym(n * n);
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        double s = base[y * n + x];
        s += base[x * n + (n - 1 - y)];
        s += base[(n - 1 - y) * n + (n - 1 - x)];
        s += base[(n - 1 - x) * n + y];
        sym[y * n + x] = 0.2 + 0.6 * (s / 4.0);
      }
    ImageSample img;
    img.id = "rai_" + std::to_string(k);
    img.size = n;
    img.channels = spec.channels;
    img.truth = RaiVerdict::RAI;
    img.pixels.resize(static_cast<std::size_t>(spec.channels) * n * n);
    for (int c = 0; c < spec.channels; ++c)
      for (int i = 0; i < n * n; ++i)
        img.pixels[c * n * n + i] = clamp01(sym[i] + noise(rng));
    corpus.push_back(std::move(img));
  }

  for (int k = 0; k < spec.n_nonrai; ++k) {
    // vertical luminance gradient: bright top, dark bottom
    const double top = 0.6 + 0.25 * uni(rng);
    const double bottom = 0.1 + 0.2 * uni(rng);
    const double wobble = 0.05 * uni(rng);
    ImageSample img;
    img.id = "ori_" + std::to_string(k);
    img.size = n;
    img.channels = spec.channels;
    img.truth = RaiVerdict::NON_RAI;
    img.pixels.resize(static_cast<std::size_t>(spec.channels) * n * n);
    for (int c = 0; c < spec.channels; ++c)
      for (int y = 0; y < n; ++y) {
        const double t = static_cast<double>(y) / (n - 1);
        const double row = top + (bottom - top) * t;
        for (int x = 0; x < n; ++x) {
          const double v = row + wobble * std::sin(2.0 * M_PI * x / n);
          img.pixels[(c * n + y) * n + x] = clamp01(v + noise(rng));
        }
      }
    corpus.push_back(std::move(img));
  }

  std::shuffle(corpus.begin(), corpus.end(), rng);
  return corpus;
}

ImageSample augment(const ImageSample& img, const AugmentationRecipe& recipe,
                    std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const int n = img.size;
  ImageSample out = img;

  if (recipe.crop) {
    const double area = recipe.crop_min_scale + (1.0 - recipe.crop_min_scale) * uni(rng);
    const int cs = std::clamp(static_cast<int>(std::lround(n * std::sqrt(area))), 1, n);
    std::uniform_int_distribution<int> off(0, n - cs);
    const int oy = off(rng), ox = off(rng);
    ImageSample cropped = img;
    for (int c = 0; c < img.channels; ++c)
      for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
          // nearest-neighbor resize of the crop window back to n x n
          const int sy = oy + std::min(cs - 1, y * cs / n);
          const int sx = ox + std::min(cs - 1, x * cs / n);
          cropped.at(c, y, x) = img.at(c, sy, sx);
        }
    out = std::move(cropped);
  }

  if (recipe.horizontal_flip && uni(rng) < 0.5) {
    ImageSample flipped = out;
    for (int c = 0; c < out.channels; ++c)
      for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) flipped.at(c, y, x) = out.at(c, y, n - 1 - x);
    out = std::move(flipped);
  }

  if (recipe.color_jitter) {
    const double b = (uni(rng) * 2.0 - 1.0) * 0.5 * recipe.jitter_strength;
    const double cscale = 1.0 + (uni(rng) * 2.0 - 1.0) * recipe.jitter_strength;
    double mean = std::accumulate(out.pixels.begin(), out.pixels.end(), 0.0) / out.pixels.size();
    for (auto& v : out.pixels) v = clamp01((v - mean) * cscale + mean + b);
  }

  if (recipe.grayscale && out.channels > 1 && uni(rng) < recipe.grayscale_prob) {
    const int hw = n * n;
    for (int i = 0; i < hw; ++i) {
      double m = 0.0;
      for (int c = 0; c < out.channels; ++c) m += out.pixels[c * hw + i];
      m /= out.channels;
      for (int c = 0; c < out.channels; ++c) out.pixels[c * hw + i] = m;
    }
  }

  return out;
}

void momentum_update(nn::Sequential& target, const nn::Sequential& online, double momentum) {
  if (!(momentum >= 0.0 && momentum < 1.0))
    throw std::invalid_argument("momentum must lie in [0, 1)");
  auto& on = const_cast<nn::Sequential&>(online);
  auto tp = target.params();
  auto op = on.params();
  if (tp.size() != op.size()) throw std::invalid_argument("momentum_update: structure mismatch");
  for (std::size_t i = 0; i < tp.size(); ++i) {
    if (tp[i]->value.rows() != op[i]->value.rows() ||
        tp[i]->value.cols() != op[i]->value.cols())
      throw std::invalid_argument("momentum_update: shape mismatch at param " +
                                  std::to_string(i));
    tp[i]->value = momentum * tp[i]->value + (1.0 - momentum) * op[i]->value;
  }
}

void EmbeddingQueue::push(const nn::Matrix& cols) {
  if (cols.rows() != dim_) throw std::invalid_argument("queue dim mismatch");
  for (long j = 0; j < cols.cols(); ++j) {
    entries_.push_back(cols.col(j));
    if (static_cast<int>(entries_.size()) > capacity_) entries_.pop_front();
  }
}

nn::Matrix EmbeddingQueue::as_matrix() const {
  nn::Matrix m(dim_, entries_.size());
  for (std::size_t j = 0; j < entries_.size(); ++j) m.col(j) = entries_[j];
  return m;
}

namespace {

struct LoopState {
  ContrastiveModel online;
  ContrastiveModel target;           // MoCo / BYOL
  nn::Sequential byol_predictor;     // BYOL only
  std::unique_ptr<EmbeddingQueue> queue;
};

double simclr_step(const ExperimentConfig& cfg, LoopState& st,
                   const std::vector<ImageSample>& batch,
                   const std::vector<bool>& rai, std::mt19937_64& rng,
                   std::vector<StepDebug>* debug) {
  const int M = static_cast<int>(batch.size());
  const bool rotated = cfg.mode != losses::AugMode::NONE;

  std::vector<ImageSample> views;
  views.reserve(rotated ? 4 * M : 2 * M);
  std::vector<ImageSample> v1, v2;
  for (const auto& img : batch) v1.push_back(augment(img, cfg.aug, rng));
  for (const auto& img : batch) v2.push_back(augment(img, cfg.aug, rng));
  for (auto& v : v1) views.push_back(v);
  for (auto& v : v2) views.push_back(v);
  if (rotated) {
    auto [t1, t2] = draw_thetas(rng);
    for (auto& v : v1) views.push_back(rotate(v, t1));
    for (auto& v : v2) views.push_back(rotate(v, t2));
  }

  nn::Matrix x = images_to_matrix(views);
  st.online.zero_grad();
  nn::Matrix u = st.online.raw_embed(x, true);
  nn::Matrix z = nn::normalize_columns(u);

  nn::Matrix dz = nn::Matrix::Zero(z.rows(), z.cols());
  double loss = 0.0;
  StepDebug dbg;
  for (int a = 0; a < 2 * M; ++a) {
    losses::PairSpec spec =
        rotated ? losses::simclr_spec_for_mode(cfg.mode, M, a, rai[a % M])
                : losses::build_sets_simclr_vanilla(M, a);
    auto lg = losses::pnda_info_nce_grad(z, spec, cfg.tau);
    loss += lg.value;
    dz += lg.grad_pool;
    if (debug) dbg.specs.push_back(std::move(spec));
  }
  loss /= 2 * M;
  dz /= 2 * M;
  if (debug) {
    dbg.pool = z;
    debug->push_back(std::move(dbg));
  }

  st.online.backward(nn::normalize_columns_backward(u, dz));
  return loss;
}

double moco_step(const ExperimentConfig& cfg, LoopState& st,
                 const std::vector<ImageSample>& batch,
                 const std::vector<bool>& rai, std::mt19937_64& rng,
                 std::vector<StepDebug>* debug) {
  const int M = static_cast<int>(batch.size());
  const bool rotated = cfg.mode != losses::AugMode::NONE;

  std::vector<ImageSample> q_views, k_views;
  for (const auto& img : batch) q_views.push_back(augment(img, cfg.aug, rng));
  for (const auto& img : batch) k_views.push_back(augment(img, cfg.aug, rng));

  st.online.zero_grad();
  nn::Matrix uq = st.online.raw_embed(images_to_matrix(q_views), true);
  nn::Matrix zq = nn::normalize_columns(uq);

  nn::Matrix zk = nn::normalize_columns(st.target.raw_embed(images_to_matrix(k_views), false));
  nn::Matrix zk_rot;  // 3M columns, anchor-major
  if (rotated) {
    std::vector<ImageSample> rot_views;
    for (const auto& v : k_views)
      for (Rotation r : {Rotation::R90, Rotation::R180, Rotation::R270})
        rot_views.push_back(rotate(v, r));
    zk_rot = nn::normalize_columns(st.target.raw_embed(images_to_matrix(rot_views), false));
  }

  nn::Matrix queue_m = st.queue->as_matrix();
  const int Q = static_cast<int>(queue_m.cols());

  nn::Matrix dzq = nn::Matrix::Zero(zq.rows(), zq.cols());
  double loss = 0.0;
  StepDebug dbg;
  for (int i = 0; i < M; ++i) {
    nn::Matrix pool;
    losses::PairSpec spec;
    if (rotated) {
      pool.resize(zq.rows(), 5 + Q);
      pool.col(0) = zq.col(i);
      pool.col(1) = zk.col(i);
      for (int r = 0; r < 3; ++r) pool.col(2 + r) = zk_rot.col(3 * i + r);
      pool.rightCols(Q) = queue_m;
      spec = losses::moco_spec_for_mode(cfg.mode, Q, rai[i]);
    } else {
      pool.resize(zq.rows(), 2 + Q);
      pool.col(0) = zq.col(i);
      pool.col(1) = zk.col(i);
      pool.rightCols(Q) = queue_m;
      spec = losses::build_sets_moco_vanilla(Q);
    }
    auto lg = losses::pnda_info_nce_grad(pool, spec, cfg.tau);
    loss += lg.value;
    dzq.col(i) = lg.grad_pool.col(0);  // keys and queue carry no gradient
    if (debug) dbg.specs.push_back(std::move(spec));
  }
  loss /= M;
  dzq /= M;
  if (debug) {
    dbg.pool = zq;
    debug->push_back(std::move(dbg));
  }

  st.online.backward(nn::normalize_columns_backward(uq, dzq));
  st.queue->push(zk);  // rotated keys are per-anchor extras, never enqueued
  return loss;
}

double byol_step(const ExperimentConfig& cfg, LoopState& st,
                 const std::vector<ImageSample>& batch,
                 const std::vector<bool>& rai, std::mt19937_64& rng,
                 std::vector<StepDebug>* debug) {
  const int M = static_cast<int>(batch.size());
  const bool rotated = cfg.mode != losses::AugMode::NONE;

  std::vector<ImageSample> v1, v2;
  for (const auto& img : batch) v1.push_back(augment(img, cfg.aug, rng));
  for (const auto& img : batch) v2.push_back(augment(img, cfg.aug, rng));

  st.online.zero_grad();
  st.byol_predictor.zero_grad();
  nn::Matrix proj_out = st.online.raw_embed(images_to_matrix(v1), true);
  nn::Matrix pred_out = st.byol_predictor.forward(proj_out, true);
  nn::Matrix zi = nn::normalize_columns(pred_out);

  nn::Matrix zp = nn::normalize_columns(st.target.raw_embed(images_to_matrix(v2), false));
  nn::Matrix z_rot;
  if (rotated) {
    std::vector<ImageSample> rot_views;
    for (const auto& v : v2)
      for (Rotation r : {Rotation::R90, Rotation::R180, Rotation::R270})
        rot_views.push_back(rotate(v, r));
    z_rot = nn::normalize_columns(st.target.raw_embed(images_to_matrix(rot_views), false));
  }

  nn::Matrix dzi = nn::Matrix::Zero(zi.rows(), zi.cols());
  double loss = 0.0;
  const nn::Matrix empty(zi.rows(), 0);
  for (int i = 0; i < M; ++i) {
    losses::ByolLossGrad lg;
    if (!rotated) {
      lg.value = losses::byol_loss(zi.col(i), zp.col(i));
      lg.grad_anchor = 2.0 * (zi.col(i) - zp.col(i));
    } else {
      nn::Matrix rot = z_rot.middleCols(3 * i, 3);
      const bool r = cfg.mode == losses::AugMode::PDA   ? true
                     : cfg.mode == losses::AugMode::NDA ? false
                                                        : rai[i];
      lg = r ? losses::pnda_byol_loss_grad(zi.col(i), zp.col(i), rot, empty, cfg.alpha)
             : losses::pnda_byol_loss_grad(zi.col(i), zp.col(i), empty, rot, cfg.alpha);
    }
    loss += lg.value;
    dzi.col(i) = lg.grad_anchor;
  }
  loss /= M;
  dzi /= M;
  if (debug) debug->push_back(StepDebug{zi, {}});

  nn::Matrix d_pred_in = st.byol_predictor.backward(nn::normalize_columns_backward(pred_out, dzi));
  st.online.backward(d_pred_in);
  return loss;
}

}  // namespace

PretrainResult pretrain(const ExperimentConfig& config, const std::vector<ImageSample>& corpus,
                        const sampler::RaiPartition* partition) {
  config.validate();
  if (corpus.size() < static_cast<std::size_t>(config.batch_size))
    throw std::invalid_argument("corpus smaller than one batch");
  if (config.mode == losses::AugMode::PNDA && partition == nullptr)
    throw std::invalid_argument("mode pnda requires a partition");

  std::mt19937_64 rng(config.seed);
  LoopState st;
  st.online = make_model(config, config.seed + 11);
  const bool needs_target =
      config.framework == Framework::MOCO_V2 || config.framework == Framework::BYOL;
  if (needs_target) {
    st.target = make_model(config, config.seed + 11);
    st.target.encoder.copy_params_from(st.online.encoder);
    st.target.proj.copy_params_from(st.online.proj);
  }
  if (config.framework == Framework::BYOL)
    st.byol_predictor = make_predictor(config, config.seed + 13);

  std::vector<nn::Param*> opt_params = st.online.params();
  if (config.framework == Framework::BYOL)
    for (auto* p : st.byol_predictor.params()) opt_params.push_back(p);
  nn::Optimizer opt(opt_params, config.opt);

  if (config.framework == Framework::MOCO_V2) {
    st.queue = std::make_unique<EmbeddingQueue>(config.projection_dim, config.queue_size);
    // warm-fill before any loss is recorded
    std::vector<std::size_t> order(corpus.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::size_t idx = 0;
    while (st.queue->size() < config.queue_size) {
      std::vector<ImageSample> chunk;
      for (int b = 0; b < config.batch_size; ++b) {
        chunk.push_back(augment(corpus[order[idx % corpus.size()]], config.aug, rng));
        ++idx;
      }
      st.queue->push(
          nn::normalize_columns(st.target.raw_embed(images_to_matrix(chunk), false)));
    }
  }

  PretrainResult result;
  std::vector<StepDebug>* dbg = config.record_debug ? &result.debug : nullptr;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const double scale =
        config.opt.cosine_decay ? nn::cosine_scale(epoch - 1, config.epochs) : 1.0;
    std::vector<std::size_t> order(corpus.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);

    double epoch_loss = 0.0;
    int steps = 0;
    for (std::size_t start = 0; start + config.batch_size <= order.size();
         start += config.batch_size) {
      std::vector<ImageSample> batch;
      std::vector<bool> rai;
      for (int b = 0; b < config.batch_size; ++b) {
        const ImageSample& img = corpus[order[start + b]];
        batch.push_back(img);
        rai.push_back(config.mode == losses::AugMode::NONE
                          ? false
                          : verdict_rai_for(config, partition, img.id));
      }

      double loss = 0.0;
      switch (config.framework) {
        case Framework::SIMCLR: loss = simclr_step(config, st, batch, rai, rng, dbg); break;
        case Framework::MOCO_V2: loss = moco_step(config, st, batch, rai, rng, dbg); break;
        case Framework::BYOL: loss = byol_step(config, st, batch, rai, rng, dbg); break;
      }
      if (!std::isfinite(loss))
        throw std::runtime_error("pretraining diverged: non-finite loss at epoch " +
                                 std::to_string(epoch));
      opt.step(scale);
      if (needs_target) {
        momentum_update(st.target.encoder, st.online.encoder, config.ema_momentum);
        momentum_update(st.target.proj, st.online.proj, config.ema_momentum);
      }
      result.steps.push_back({epoch, steps, loss, config.opt.lr * scale});
      epoch_loss += loss;
      ++steps;
    }
    result.epoch_losses.push_back(steps > 0 ? epoch_loss / steps : 0.0);
  }

  result.encoder = std::move(st.online.encoder);
  return result;
}

}  // namespace pnda::harness
