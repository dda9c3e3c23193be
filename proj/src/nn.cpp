#include "pnda/nn.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace pnda::nn {

namespace {

constexpr int kKernel = 3;
constexpr int kPad = 1;

Matrix he_init(int rows, int cols, int fan_in, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
  Matrix m(rows, cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i) m(i, j) = dist(rng);
  return m;
}

}  // namespace

Conv2d::Conv2d(int in_ch, int out_ch, int in_size, int stride, std::mt19937_64& rng)
    : in_ch_(in_ch),
      out_ch_(out_ch),
      in_size_(in_size),
      stride_(stride),
      out_size_((in_size + 2 * kPad - kKernel) / stride + 1),
      weight_("conv_w", out_ch, in_ch * kKernel * kKernel),
      bias_("conv_b", out_ch, 1) {
  weight_.value = he_init(out_ch, in_ch * kKernel * kKernel, in_ch * kKernel * kKernel, rng);
}

Matrix Conv2d::forward(const Matrix& x, bool /*train*/) {
  const int B = static_cast<int>(x.cols());
  const int hw_out = out_size_ * out_size_;
  if (x.rows() != static_cast<long>(in_ch_) * in_size_ * in_size_)
    throw std::invalid_argument("conv2d input shape mismatch");

  // col: (in_ch*9) x (B*hw_out), columns batch-major then spatial.
  col_.resize(in_ch_ * kKernel * kKernel, static_cast<long>(B) * hw_out);
  col_.setZero();
  for (int b = 0; b < B; ++b) {
    for (int oy = 0; oy < out_size_; ++oy)
      for (int ox = 0; ox < out_size_; ++ox) {
        const long col_idx = static_cast<long>(b) * hw_out + oy * out_size_ + ox;
        for (int c = 0; c < in_ch_; ++c)
          for (int ky = 0; ky < kKernel; ++ky) {
            const int iy = oy * stride_ - kPad + ky;
            if (iy < 0 || iy >= in_size_) continue;
            for (int kx = 0; kx < kKernel; ++kx) {
              const int ix = ox * stride_ - kPad + kx;
              if (ix < 0 || ix >= in_size_) continue;
              col_((c * kKernel + ky) * kKernel + kx, col_idx) =
                  x((c * in_size_ + iy) * in_size_ + ix, b);
            }
          }
      }
  }

  Matrix out_flat = weight_.value * col_;            // out_ch x (B*hw_out)
  out_flat.colwise() += bias_.value.col(0);

  Matrix y(static_cast<long>(out_ch_) * hw_out, B);
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < out_ch_; ++c)
      for (int s = 0; s < hw_out; ++s)
        y(c * hw_out + s, b) = out_flat(c, static_cast<long>(b) * hw_out + s);
  return y;
}

Matrix Conv2d::backward(const Matrix& grad_out) {
  const int hw_out = out_size_ * out_size_;
  const int B = static_cast<int>(grad_out.cols());

  Matrix g_flat(out_ch_, static_cast<long>(B) * hw_out);
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < out_ch_; ++c)
      for (int s = 0; s < hw_out; ++s)
        g_flat(c, static_cast<long>(b) * hw_out + s) = grad_out(c * hw_out + s, b);

  weight_.grad.noalias() += g_flat * col_.transpose();
  bias_.grad.col(0) += g_flat.rowwise().sum();

  Matrix dcol = weight_.value.transpose() * g_flat;  // (in_ch*9) x (B*hw_out)

  Matrix dx = Matrix::Zero(static_cast<long>(in_ch_) * in_size_ * in_size_, B);
  for (int b = 0; b < B; ++b) {
    for (int oy = 0; oy < out_size_; ++oy)
      for (int ox = 0; ox < out_size_; ++ox) {
        const long col_idx = static_cast<long>(b) * hw_out + oy * out_size_ + ox;
        for (int c = 0; c < in_ch_; ++c)
          for (int ky = 0; ky < kKernel; ++ky) {
            const int iy = oy * stride_ - kPad + ky;
            if (iy < 0 || iy >= in_size_) continue;
            for (int kx = 0; kx < kKernel; ++kx) {
              const int ix = ox * stride_ - kPad + kx;
              if (ix < 0 || ix >= in_size_) continue;
              dx((c * in_size_ + iy) * in_size_ + ix, b) +=
                  dcol((c * kKernel + ky) * kKernel + kx, col_idx);
            }
          }
      }
  }
  return dx;
}

Matrix ReLU::forward(const Matrix& x, bool /*train*/) {
  mask_ = (x.array() > 0.0).cast<double>();
  return x.cwiseMax(0.0);
}

Matrix ReLU::backward(const Matrix& grad_out) {
  return grad_out.cwiseProduct(mask_);
}

Matrix GlobalAvgPool::forward(const Matrix& x, bool /*train*/) {
  const int B = static_cast<int>(x.cols());
  Matrix y(channels_, B);
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < channels_; ++c)
      y(c, b) = x.col(b).segment(static_cast<long>(c) * spatial_, spatial_).mean();
  return y;
}

Matrix GlobalAvgPool::backward(const Matrix& grad_out) {
  const int B = static_cast<int>(grad_out.cols());
  Matrix dx(static_cast<long>(channels_) * spatial_, B);
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < channels_; ++c)
      dx.col(b).segment(static_cast<long>(c) * spatial_, spatial_)
          .setConstant(grad_out(c, b) / spatial_);
  return dx;
}

Linear::Linear(int in_dim, int out_dim, std::mt19937_64& rng)
    : weight_("lin_w", out_dim, in_dim), bias_("lin_b", out_dim, 1) {
  weight_.value = he_init(out_dim, in_dim, in_dim, rng);
}

Matrix Linear::forward(const Matrix& x, bool /*train*/) {
  x_ = x;
  Matrix y = weight_.value * x;
  y.colwise() += bias_.value.col(0);
  return y;
}

Matrix Linear::backward(const Matrix& grad_out) {
  weight_.grad.noalias() += grad_out * x_.transpose();
  bias_.grad.col(0) += grad_out.rowwise().sum();
  return weight_.value.transpose() * grad_out;
}

Matrix Sequential::forward(const Matrix& x, bool train) {
  Matrix h = x;
  for (auto& l : layers_) h = l->forward(h, train);
  return h;
}

Matrix Sequential::backward(const Matrix& grad_out) {
  Matrix g = grad_out;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
  return g;
}

std::vector<Param*> Sequential::params() {
  std::vector<Param*> out;
  for (auto& l : layers_)
    for (Param* p : l->params()) out.push_back(p);
  return out;
}

void Sequential::zero_grad() {
  for (Param* p : params()) p->grad.setZero();
}

void Sequential::copy_params_from(const Sequential& other) {
  auto& o = const_cast<Sequential&>(other);
  auto mine = params();
  auto theirs = o.params();
  if (mine.size() != theirs.size())
    throw std::invalid_argument("copy_params_from: structure mismatch");
  for (std::size_t i = 0; i < mine.size(); ++i) {
    if (mine[i]->value.rows() != theirs[i]->value.rows() ||
        mine[i]->value.cols() != theirs[i]->value.cols())
      throw std::invalid_argument("copy_params_from: shape mismatch");
    mine[i]->value = theirs[i]->value;
  }
}

std::uint64_t Sequential::param_hash() const {
  auto& self = const_cast<Sequential&>(*this);
  std::uint64_t h = 1469598103934665603ull;
  for (Param* p : self.params())
    for (long j = 0; j < p->value.cols(); ++j)
      for (long i = 0; i < p->value.rows(); ++i) {
        double v = p->value(i, j);
        std::uint64_t bits;
        static_assert(sizeof(bits) == sizeof(v));
        std::memcpy(&bits, &v, sizeof(bits));
        h ^= bits;
        h *= 1099511628211ull;
      }
  return h;
}

void Optimizer::step(double lr_scale) {
  ++t_;
  const double lr = spec_.lr * lr_scale;
  if (spec_.algo == "sgd") {
    for (Param* p : params_) {
      Matrix g = p->grad;
      if (spec_.weight_decay > 0.0) g += spec_.weight_decay * p->value;
      p->mom = spec_.momentum * p->mom + g;
      p->value -= lr * p->mom;
    }
  } else if (spec_.algo == "adam") {
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const double bc1 = 1.0 - std::pow(b1, t_);
    const double bc2 = 1.0 - std::pow(b2, t_);
    for (Param* p : params_) {
      Matrix g = p->grad;
      if (spec_.weight_decay > 0.0) g += spec_.weight_decay * p->value;
      p->adam_m = b1 * p->adam_m + (1.0 - b1) * g;
      p->adam_v = b2 * p->adam_v.array().matrix() +
                  (1.0 - b2) * g.array().square().matrix();
      Matrix mhat = p->adam_m / bc1;
      Matrix vhat = p->adam_v / bc2;
      p->value.array() -= lr * mhat.array() / (vhat.array().sqrt() + eps);
    }
  } else {
    throw std::invalid_argument("unknown optimizer algo: " + spec_.algo);
  }
}

double cosine_scale(int epoch, int total_epochs) {
  if (total_epochs <= 0) return 1.0;
  double t = static_cast<double>(epoch) / total_epochs;
  return 0.5 * (1.0 + std::cos(M_PI * std::min(t, 1.0)));
}

Sequential make_conv_encoder(const EncoderSpec& spec, std::mt19937_64& rng) {
  Sequential net;
  int size = spec.image_size;
  int ch = spec.in_channels;
  for (int out_ch : spec.channels) {
    auto conv = std::make_unique<Conv2d>(ch, out_ch, size, /*stride=*/2, rng);
    size = conv->out_size();
    ch = out_ch;
    net.add(std::move(conv));
    net.add(std::make_unique<ReLU>());
  }
  net.add(std::make_unique<GlobalAvgPool>(ch, size));
  return net;
}

Matrix normalize_columns(const Matrix& x, Vector* norms) {
  Matrix z = x;
  if (norms) norms->resize(x.cols());
  for (long j = 0; j < x.cols(); ++j) {
    double n = x.col(j).norm();
    if (n < 1e-12) n = 1e-12;
    z.col(j) /= n;
    if (norms) (*norms)(j) = n;
  }
  return z;
}

Matrix normalize_columns_backward(const Matrix& x_raw, const Matrix& grad_z) {
  Matrix dx(x_raw.rows(), x_raw.cols());
  for (long j = 0; j < x_raw.cols(); ++j) {
    double n = x_raw.col(j).norm();
    if (n < 1e-12) n = 1e-12;
    Vector z = x_raw.col(j) / n;
    Vector g = grad_z.col(j);
    dx.col(j) = (g - z * z.dot(g)) / n;
  }
  return dx;
}

}  // namespace pnda::nn
