#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace pnda::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// One learnable tensor, stored flat as a matrix, with its gradient and
// optimizer state.
struct Param {
  std::string name;
  Matrix value;
  Matrix grad;
  Matrix mom;     // SGD momentum buffer
  Matrix adam_m;  // Adam first moment
  Matrix adam_v;  // Adam second moment

  explicit Param(std::string n, int rows, int cols)
      : name(std::move(n)),
        value(Matrix::Zero(rows, cols)),
        grad(Matrix::Zero(rows, cols)),
        mom(Matrix::Zero(rows, cols)),
        adam_m(Matrix::Zero(rows, cols)),
        adam_v(Matrix::Zero(rows, cols)) {}
};

// Batches are column-major: one flattened sample per column.
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Matrix forward(const Matrix& x, bool train) = 0;
  virtual Matrix backward(const Matrix& grad_out) = 0;
  virtual std::vector<Param*> params() { return {}; }
  virtual std::string kind() const = 0;
};

// 3x3 convolution via im2col + GEMM. Input layout per column:
// channel-major [c][y][x] over a fixed square spatial size.
class Conv2d final : public Layer {
 public:
  Conv2d(int in_ch, int out_ch, int in_size, int stride, std::mt19937_64& rng);

  Matrix forward(const Matrix& x, bool train) override;
  Matrix backward(const Matrix& grad_out) override;
  std::vector<Param*> params() override { return {&weight_, &bias_}; }
  std::string kind() const override { return "conv2d"; }

  int out_size() const { return out_size_; }
  int out_channels() const { return out_ch_; }

 private:
  int in_ch_, out_ch_, in_size_, stride_, out_size_;
  Param weight_;  // out_ch x (in_ch*9)
  Param bias_;    // out_ch x 1
  Matrix col_;    // cached im2col of the last forward batch
};

class ReLU final : public Layer {
 public:
  Matrix forward(const Matrix& x, bool train) override;
  Matrix backward(const Matrix& grad_out) override;
  std::string kind() const override { return "relu"; }

 private:
  Matrix mask_;
};

// Global average pooling over the spatial grid, (C*S*S) x B -> C x B.
class GlobalAvgPool final : public Layer {
 public:
  GlobalAvgPool(int channels, int spatial_size)
      : channels_(channels), spatial_(spatial_size * spatial_size) {}
  Matrix forward(const Matrix& x, bool train) override;
  Matrix backward(const Matrix& grad_out) override;
  std::string kind() const override { return "gap"; }

 private:
  int channels_, spatial_;
};

class Linear final : public Layer {
 public:
  Linear(int in_dim, int out_dim, std::mt19937_64& rng);
  Matrix forward(const Matrix& x, bool train) override;
  Matrix backward(const Matrix& grad_out) override;
  std::vector<Param*> params() override { return {&weight_, &bias_}; }
  std::string kind() const override { return "linear"; }

 private:
  Param weight_;  // out x in
  Param bias_;    // out x 1
  Matrix x_;
};

class Sequential {
 public:
  Sequential() = default;

  void add(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }
  Matrix forward(const Matrix& x, bool train = false);
  // Propagates grad_out back through every layer, accumulating param grads.
  Matrix backward(const Matrix& grad_out);
  std::vector<Param*> params();
  void zero_grad();
  std::size_t size() const { return layers_.size(); }

  // Deep copy of parameter values into a structurally identical net.
  void copy_params_from(const Sequential& other);
  // Stable digest of all parameter values (freeze checks).
  std::uint64_t param_hash() const;

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

struct OptimizerSpec {
  std::string algo = "adam";  // "adam" | "sgd"
  double lr = 1e-3;
  double momentum = 0.9;
  double weight_decay = 0.0;
  bool cosine_decay = true;
};

class Optimizer {
 public:
  Optimizer(std::vector<Param*> params, OptimizerSpec spec)
      : params_(std::move(params)), spec_(std::move(spec)) {}

  // lr_scale multiplies the base rate (cosine schedule hook).
  void step(double lr_scale = 1.0);

 private:
  std::vector<Param*> params_;
  OptimizerSpec spec_;
  long t_ = 0;
};

// Cosine decay from 1 at epoch 0 to ~0 at total_epochs, no restarts.
double cosine_scale(int epoch, int total_epochs);

// Encoder description shared by the sampler and the contrastive harness.
struct EncoderSpec {
  int image_size = 32;
  int in_channels = 1;
  std::vector<int> channels = {32, 64, 128, 128};  // one stride-2 conv block each
  int feature_dim() const { return channels.back(); }
};

// Stride-2 conv blocks (conv + relu) followed by global average pooling.
Sequential make_conv_encoder(const EncoderSpec& spec, std::mt19937_64& rng);

// L2-normalize columns. Returns the normalized matrix; `norms` gets each
// column's pre-normalization length.
Matrix normalize_columns(const Matrix& x, Vector* norms = nullptr);
// Backward of normalize_columns: maps dL/dz to dL/dx.
Matrix normalize_columns_backward(const Matrix& x_raw, const Matrix& grad_z);

}  // namespace pnda::nn
