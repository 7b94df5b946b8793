#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "rmipn/errors.hpp"

namespace rmipn::autodiff {

class Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

/// Dense float32 tensor with a row-major buffer and an optional gradient of
/// the same shape. Tensors are shared between the graph records that produced
/// and consume them; the data buffer of a recorded tensor is never mutated.
class Tensor {
 public:
  Tensor(std::vector<int> shape, bool requires_grad);

  static TensorPtr zeros(std::vector<int> shape, bool requires_grad = false);
  static TensorPtr full(std::vector<int> shape, float value, bool requires_grad = false);
  static TensorPtr from_data(std::vector<int> shape, std::vector<float> data,
                             bool requires_grad = false);

  std::vector<int> shape;
  std::vector<float> data;
  std::vector<float> grad;  // empty until materialized
  bool requires_grad = false;

  int64_t numel() const;
  int ndim() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
  bool same_shape(const Tensor& other) const { return shape == other.shape; }
  std::string shape_str() const;

  void ensure_grad();
  void zero_grad();
};

enum class OpKind {
  conv2d,
  conv_transpose2d,
  relu,
  sigmoid,
  tanh,
  add,
  mul,
  scale,
  concat_channels,
  batch_norm2d,
  bce_loss,
  masked_l1_loss,
};

const char* op_name(OpKind kind);

/// Reverse-mode tape. Each op appends one record; backward() replays the
/// records in exact reverse order. A graph runs backward once; reset() clears
/// the tape for reuse. Graphs are single-threaded.
class Graph {
 public:
  TensorPtr conv2d(const TensorPtr& x, const TensorPtr& weight, const TensorPtr& bias, int stride,
                   int padding);
  TensorPtr conv_transpose2d(const TensorPtr& x, const TensorPtr& weight, const TensorPtr& bias,
                             int stride, int padding, int output_padding);
  TensorPtr relu(const TensorPtr& x);
  TensorPtr sigmoid(const TensorPtr& x);
  TensorPtr tanh(const TensorPtr& x);
  TensorPtr add(const TensorPtr& a, const TensorPtr& b);
  TensorPtr mul(const TensorPtr& a, const TensorPtr& b);
  TensorPtr scale(const TensorPtr& x, float factor);
  TensorPtr concat_channels(const std::vector<TensorPtr>& xs);

  /// Training mode normalizes with batch statistics (eps 1e-5) and updates
  /// the running_mean/running_var buffers in place (momentum 0.1); eval mode
  /// reads them. The buffers stay outside the differentiated graph.
  TensorPtr batch_norm2d(const TensorPtr& x, const TensorPtr& gamma, const TensorPtr& beta,
                         const TensorPtr& running_mean, const TensorPtr& running_var,
                         bool training);

  /// Mean binary cross entropy over mask-selected elements (all elements when
  /// mask is null). Predictions are clamped to [1e-7, 1-1e-7]. A mask shaped
  /// {N,1,H,W} broadcasts across the channels of the prediction.
  TensorPtr bce_loss(const TensorPtr& pred, const TensorPtr& target,
                     const TensorPtr& mask = nullptr);
  /// Mean absolute error with the same masking rules. Zero-mask gives loss 0
  /// with zero gradient.
  TensorPtr masked_l1_loss(const TensorPtr& pred, const TensorPtr& target,
                           const TensorPtr& mask = nullptr);

  /// Seeds root->grad with ones (or `seed`) and replays the tape backward.
  void backward(const TensorPtr& root);
  void backward(const TensorPtr& root, const std::vector<float>& seed);
  void reset();

  std::size_t op_count() const { return tape_.size(); }

  // Non-finite outputs raise NumericError as soon as an op produces them.
  bool finite_checks = true;

 private:
  struct OpRecord {
    OpKind kind;
    std::function<void()> backward_fn;
  };
  std::vector<OpRecord> tape_;
  bool backward_done_ = false;

  TensorPtr record(OpKind kind, TensorPtr out, std::function<void()> backward_fn);
  void check_finite(const Tensor& t, OpKind kind) const;
};

/// One SGD update: v <- momentum*v + (g + weight_decay*w); w <- w - lr*v.
/// Throws NumericError when a gradient is non-finite.
void sgd_step(std::span<float> weights, std::span<const float> grads, std::span<float> velocity,
              float lr, float momentum, float weight_decay);

}  // namespace rmipn::autodiff
