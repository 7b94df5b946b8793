#include "rmipn/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "rmipn/autodiff_kernels.hpp"

namespace rmipn::autodiff {

namespace {

void require(bool ok, const std::string& message) {
  if (!ok) throw ShapeError(message);
}

std::string shapes(const Tensor& a, const Tensor& b) {
  return a.shape_str() + " vs " + b.shape_str();
}

kernels::MaskIndexer make_mask_indexer(const Tensor& pred, const Tensor* mask) {
  kernels::MaskIndexer idx;
  if (mask && !mask->same_shape(pred)) {
    idx.broadcast = true;
    idx.channels = static_cast<std::size_t>(pred.dim(1));
    idx.plane = static_cast<std::size_t>(pred.dim(2)) * pred.dim(3);
  }
  return idx;
}

void check_mask_shape(const Tensor& pred, const Tensor& target, const TensorPtr& mask,
                      const char* op) {
  require(pred.same_shape(target),
          std::string(op) + ": pred/target shape mismatch " + shapes(pred, target));
  if (!mask) return;
  if (mask->same_shape(pred)) return;
  bool broadcastable = pred.ndim() == 4 && mask->ndim() == 4 && mask->dim(0) == pred.dim(0) &&
                       mask->dim(1) == 1 && mask->dim(2) == pred.dim(2) &&
                       mask->dim(3) == pred.dim(3);
  require(broadcastable, std::string(op) + ": mask shape mismatch " + shapes(pred, *mask));
}

}  // namespace

Tensor::Tensor(std::vector<int> shape_in, bool requires_grad_in)
    : shape(std::move(shape_in)), requires_grad(requires_grad_in) {
  data.assign(static_cast<std::size_t>(numel()), 0.f);
  if (requires_grad) grad.assign(data.size(), 0.f);
}

TensorPtr Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  return std::make_shared<Tensor>(std::move(shape), requires_grad);
}

TensorPtr Tensor::full(std::vector<int> shape, float value, bool requires_grad) {
  auto t = std::make_shared<Tensor>(std::move(shape), requires_grad);
  std::fill(t->data.begin(), t->data.end(), value);
  return t;
}

TensorPtr Tensor::from_data(std::vector<int> shape, std::vector<float> data, bool requires_grad) {
  auto t = std::make_shared<Tensor>(std::move(shape), requires_grad);
  if (data.size() != t->data.size()) {
    throw ShapeError("from_data: buffer of " + std::to_string(data.size()) +
                     " does not fill shape " + t->shape_str());
  }
  t->data = std::move(data);
  return t;
}

int64_t Tensor::numel() const {
  int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << '{';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << '}';
  return os.str();
}

void Tensor::ensure_grad() {
  if (grad.empty()) grad.assign(data.size(), 0.f);
}

void Tensor::zero_grad() { std::fill(grad.begin(), grad.end(), 0.f); }

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::conv2d: return "conv2d";
    case OpKind::conv_transpose2d: return "conv_transpose2d";
    case OpKind::relu: return "relu";
    case OpKind::sigmoid: return "sigmoid";
    case OpKind::tanh: return "tanh";
    case OpKind::add: return "add";
    case OpKind::mul: return "mul";
    case OpKind::scale: return "scale";
    case OpKind::concat_channels: return "concat_channels";
    case OpKind::batch_norm2d: return "batch_norm2d";
    case OpKind::bce_loss: return "bce_loss";
    case OpKind::masked_l1_loss: return "masked_l1_loss";
  }
  return "?";
}

void Graph::check_finite(const Tensor& t, OpKind kind) const {
  if (!finite_checks) return;
  for (float v : t.data) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string(op_name(kind)) + " produced a non-finite value");
    }
  }
}

TensorPtr Graph::record(OpKind kind, TensorPtr out, std::function<void()> backward_fn) {
  check_finite(*out, kind);
  tape_.push_back({kind, std::move(backward_fn)});
  return out;
}

void Graph::reset() {
  tape_.clear();
  backward_done_ = false;
}

void Graph::backward(const TensorPtr& root) {
  backward(root, std::vector<float>(static_cast<std::size_t>(root->numel()), 1.f));
}

void Graph::backward(const TensorPtr& root, const std::vector<float>& seed) {
  if (backward_done_) {
    throw Error("backward already ran on this graph; call reset() first");
  }
  if (seed.size() != root->data.size()) {
    throw ShapeError("backward seed size " + std::to_string(seed.size()) +
                     " does not match root " + root->shape_str());
  }
  root->ensure_grad();
  for (std::size_t i = 0; i < seed.size(); ++i) root->grad[i] += seed[i];
  for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) it->backward_fn();
  backward_done_ = true;
}

TensorPtr Graph::conv2d(const TensorPtr& x, const TensorPtr& weight, const TensorPtr& bias,
                        int stride, int padding) {
  require(x->ndim() == 4, "conv2d: input must be NCHW, got " + x->shape_str());
  require(weight->ndim() == 4 && weight->dim(2) == weight->dim(3),
          "conv2d: weight must be OIKK, got " + weight->shape_str());
  require(weight->dim(1) == x->dim(1), "conv2d: channel mismatch " + shapes(*x, *weight));
  const int n = x->dim(0), c = x->dim(1), h = x->dim(2), w = x->dim(3);
  const int out_c = weight->dim(0), k = weight->dim(2);
  if (bias) require(bias->ndim() == 1 && bias->dim(0) == out_c,
                    "conv2d: bias shape " + bias->shape_str() + " does not match " +
                        std::to_string(out_c) + " output channels");
  require(h + 2 * padding >= k && w + 2 * padding >= k,
          "conv2d: kernel larger than padded input " + shapes(*x, *weight));
  const int out_h = (h + 2 * padding - k) / stride + 1;
  const int out_w = (w + 2 * padding - k) / stride + 1;
  require(out_h >= 1 && out_w >= 1,
          "conv2d: output extents are not positive for input " + x->shape_str() + ", kernel " +
              std::to_string(k) + ", stride " + std::to_string(stride) + ", padding " +
              std::to_string(padding));

  bool needs_grad = x->requires_grad || weight->requires_grad || (bias && bias->requires_grad);
  auto out = Tensor::zeros({n, out_c, out_h, out_w}, needs_grad);
  kernels::conv2d_forward(x->data.data(), n, c, h, w, weight->data.data(), out_c, k,
                          bias ? bias->data.data() : nullptr, stride, padding, out->data.data(),
                          out_h, out_w);

  auto backward_fn = [=]() {
    if (out->grad.empty()) return;
    const float* gy = out->grad.data();
    if (bias && bias->requires_grad) {
      bias->ensure_grad();
      for (int oc = 0; oc < out_c; ++oc) {
        double acc = 0.0;
        for (int ni = 0; ni < n; ++ni) {
          const float* g = gy + (static_cast<std::size_t>(ni) * out_c + oc) * out_h * out_w;
          for (int i = 0; i < out_h * out_w; ++i) acc += g[i];
        }
        bias->grad[oc] += static_cast<float>(acc);
      }
    }
    if (weight->requires_grad) {
      weight->ensure_grad();
      for (int oc = 0; oc < out_c; ++oc) {
        for (int ci = 0; ci < c; ++ci) {
          for (int kh = 0; kh < k; ++kh) {
            for (int kw = 0; kw < k; ++kw) {
              double acc = 0.0;
              for (int ni = 0; ni < n; ++ni) {
                const float* g = gy + (static_cast<std::size_t>(ni) * out_c + oc) * out_h * out_w;
                const float* xp = x->data.data() + (static_cast<std::size_t>(ni) * c + ci) * h * w;
                for (int oh = 0; oh < out_h; ++oh) {
                  int ih = oh * stride - padding + kh;
                  if (ih < 0 || ih >= h) continue;
                  for (int ow = 0; ow < out_w; ++ow) {
                    int iw = ow * stride - padding + kw;
                    if (iw < 0 || iw >= w) continue;
                    acc += static_cast<double>(g[oh * out_w + ow]) * xp[ih * w + iw];
                  }
                }
              }
              weight->grad[((static_cast<std::size_t>(oc) * c + ci) * k + kh) * k + kw] +=
                  static_cast<float>(acc);
            }
          }
        }
      }
    }
    if (x->requires_grad) {
      x->ensure_grad();
      std::vector<double> plane(static_cast<std::size_t>(h) * w);
      for (int ni = 0; ni < n; ++ni) {
        for (int ci = 0; ci < c; ++ci) {
          std::fill(plane.begin(), plane.end(), 0.0);
          for (int oc = 0; oc < out_c; ++oc) {
            const float* g = gy + (static_cast<std::size_t>(ni) * out_c + oc) * out_h * out_w;
            const float* wp =
                weight->data.data() + (static_cast<std::size_t>(oc) * c + ci) * k * k;
            for (int kh = 0; kh < k; ++kh) {
              for (int kw = 0; kw < k; ++kw) {
                double wv = wp[kh * k + kw];
                for (int oh = 0; oh < out_h; ++oh) {
                  int ih = oh * stride - padding + kh;
                  if (ih < 0 || ih >= h) continue;
                  for (int ow = 0; ow < out_w; ++ow) {
                    int iw = ow * stride - padding + kw;
                    if (iw < 0 || iw >= w) continue;
                    plane[static_cast<std::size_t>(ih) * w + iw] += wv * g[oh * out_w + ow];
                  }
                }
              }
            }
          }
          float* gx = x->grad.data() + (static_cast<std::size_t>(ni) * c + ci) * h * w;
          for (std::size_t i = 0; i < plane.size(); ++i) gx[i] += static_cast<float>(plane[i]);
        }
      }
    }
  };
  return record(OpKind::conv2d, out, backward_fn);
}

TensorPtr Graph::conv_transpose2d(const TensorPtr& x, const TensorPtr& weight,
                                  const TensorPtr& bias, int stride, int padding,
                                  int output_padding) {
  require(x->ndim() == 4, "conv_transpose2d: input must be NCHW, got " + x->shape_str());
  require(weight->ndim() == 4 && weight->dim(2) == weight->dim(3),
          "conv_transpose2d: weight must be IOKK, got " + weight->shape_str());
  require(weight->dim(0) == x->dim(1),
          "conv_transpose2d: channel mismatch " + shapes(*x, *weight));
  require(output_padding >= 0 && output_padding < stride,
          "conv_transpose2d: output_padding " + std::to_string(output_padding) +
              " must be below stride " + std::to_string(stride));
  const int n = x->dim(0), c = x->dim(1), h = x->dim(2), w = x->dim(3);
  const int out_c = weight->dim(1), k = weight->dim(2);
  if (bias) require(bias->ndim() == 1 && bias->dim(0) == out_c,
                    "conv_transpose2d: bias shape " + bias->shape_str() + " does not match " +
                        std::to_string(out_c) + " output channels");
  const int out_h = (h - 1) * stride - 2 * padding + k + output_padding;
  const int out_w = (w - 1) * stride - 2 * padding + k + output_padding;
  require(out_h >= 1 && out_w >= 1,
          "conv_transpose2d: inconsistent output geometry for input " + x->shape_str());

  bool needs_grad = x->requires_grad || weight->requires_grad || (bias && bias->requires_grad);
  auto out = Tensor::zeros({n, out_c, out_h, out_w}, needs_grad);
  kernels::conv_transpose2d_forward(x->data.data(), n, c, h, w, weight->data.data(), out_c, k,
                                    bias ? bias->data.data() : nullptr, stride, padding,
                                    out->data.data(), out_h, out_w);

  auto backward_fn = [=]() {
    if (out->grad.empty()) return;
    const float* gy = out->grad.data();
    if (bias && bias->requires_grad) {
      bias->ensure_grad();
      for (int oc = 0; oc < out_c; ++oc) {
        double acc = 0.0;
        for (int ni = 0; ni < n; ++ni) {
          const float* g = gy + (static_cast<std::size_t>(ni) * out_c + oc) * out_h * out_w;
          for (int i = 0; i < out_h * out_w; ++i) acc += g[i];
        }
        bias->grad[oc] += static_cast<float>(acc);
      }
    }
    if (weight->requires_grad) {
      weight->ensure_grad();
      for (int ci = 0; ci < c; ++ci) {
        for (int oc = 0; oc < out_c; ++oc) {
          for (int kh = 0; kh < k; ++kh) {
            for (int kw = 0; kw < k; ++kw) {
              double acc = 0.0;
              for (int ni = 0; ni < n; ++ni) {
                const float* g = gy + (static_cast<std::size_t>(ni) * out_c + oc) * out_h * out_w;
                const float* xp = x->data.data() + (static_cast<std::size_t>(ni) * c + ci) * h * w;
                for (int ih = 0; ih < h; ++ih) {
                  int oh = ih * stride - padding + kh;
                  if (oh < 0 || oh >= out_h) continue;
                  for (int iw = 0; iw < w; ++iw) {
                    int ow = iw * stride - padding + kw;
                    if (ow < 0 || ow >= out_w) continue;
                    acc += static_cast<double>(xp[ih * w + iw]) * g[oh * out_w + ow];
                  }
                }
              }
              weight->grad[((static_cast<std::size_t>(ci) * out_c + oc) * k + kh) * k + kw] +=
                  static_cast<float>(acc);
            }
          }
        }
      }
    }
    if (x->requires_grad) {
      x->ensure_grad();
      for (int ni = 0; ni < n; ++ni) {
        for (int ci = 0; ci < c; ++ci) {
          float* gx = x->grad.data() + (static_cast<std::size_t>(ni) * c + ci) * h * w;
          for (int ih = 0; ih < h; ++ih) {
            for (int iw = 0; iw < w; ++iw) {
              double acc = 0.0;
              for (int oc = 0; oc < out_c; ++oc) {
                const float* g = gy + (static_cast<std::size_t>(ni) * out_c + oc) * out_h * out_w;
                const float* wp =
                    weight->data.data() + (static_cast<std::size_t>(ci) * out_c + oc) * k * k;
                for (int kh = 0; kh < k; ++kh) {
                  int oh = ih * stride - padding + kh;
                  if (oh < 0 || oh >= out_h) continue;
                  for (int kw = 0; kw < k; ++kw) {
                    int ow = iw * stride - padding + kw;
                    if (ow < 0 || ow >= out_w) continue;
                    acc += static_cast<double>(wp[kh * k + kw]) * g[oh * out_w + ow];
                  }
                }
              }
              gx[ih * w + iw] += static_cast<float>(acc);
            }
          }
        }
      }
    }
  };
  return record(OpKind::conv_transpose2d, out, backward_fn);
}

TensorPtr Graph::relu(const TensorPtr& x) {
  auto out = Tensor::zeros(x->shape, x->requires_grad);
  for (std::size_t i = 0; i < x->data.size(); ++i) {
    out->data[i] = x->data[i] > 0.f ? x->data[i] : 0.f;
  }
  auto backward_fn = [=]() {
    if (out->grad.empty() || !x->requires_grad) return;
    x->ensure_grad();
    // subgradient at exactly 0 is 0
    for (std::size_t i = 0; i < x->data.size(); ++i) {
      if (x->data[i] > 0.f) x->grad[i] += out->grad[i];
    }
  };
  return record(OpKind::relu, out, backward_fn);
}

TensorPtr Graph::sigmoid(const TensorPtr& x) {
  auto out = Tensor::zeros(x->shape, x->requires_grad);
  for (std::size_t i = 0; i < x->data.size(); ++i) {
    out->data[i] = kernels::sigmoid_value(x->data[i]);
  }
  auto backward_fn = [=]() {
    if (out->grad.empty() || !x->requires_grad) return;
    x->ensure_grad();
    for (std::size_t i = 0; i < x->data.size(); ++i) {
      float s = out->data[i];
      x->grad[i] += out->grad[i] * s * (1.f - s);
    }
  };
  return record(OpKind::sigmoid, out, backward_fn);
}

TensorPtr Graph::tanh(const TensorPtr& x) {
  auto out = Tensor::zeros(x->shape, x->requires_grad);
  for (std::size_t i = 0; i < x->data.size(); ++i) {
    out->data[i] = std::tanh(x->data[i]);
  }
  auto backward_fn = [=]() {
    if (out->grad.empty() || !x->requires_grad) return;
    x->ensure_grad();
    for (std::size_t i = 0; i < x->data.size(); ++i) {
      float t = out->data[i];
      x->grad[i] += out->grad[i] * (1.f - t * t);
    }
  };
  return record(OpKind::tanh, out, backward_fn);
}

TensorPtr Graph::add(const TensorPtr& a, const TensorPtr& b) {
  require(a->same_shape(*b), "add: extent mismatch " + shapes(*a, *b));
  auto out = Tensor::zeros(a->shape, a->requires_grad || b->requires_grad);
  for (std::size_t i = 0; i < a->data.size(); ++i) out->data[i] = a->data[i] + b->data[i];
  auto backward_fn = [=]() {
    if (out->grad.empty()) return;
    if (a->requires_grad) {
      a->ensure_grad();
      for (std::size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += out->grad[i];
    }
    if (b->requires_grad) {
      b->ensure_grad();
      for (std::size_t i = 0; i < b->grad.size(); ++i) b->grad[i] += out->grad[i];
    }
  };
  return record(OpKind::add, out, backward_fn);
}

TensorPtr Graph::mul(const TensorPtr& a, const TensorPtr& b) {
  require(a->same_shape(*b), "mul: extent mismatch " + shapes(*a, *b));
  auto out = Tensor::zeros(a->shape, a->requires_grad || b->requires_grad);
  for (std::size_t i = 0; i < a->data.size(); ++i) out->data[i] = a->data[i] * b->data[i];
  auto backward_fn = [=]() {
    if (out->grad.empty()) return;
    if (a->requires_grad) {
      a->ensure_grad();
      for (std::size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += out->grad[i] * b->data[i];
    }
    if (b->requires_grad) {
      b->ensure_grad();
      for (std::size_t i = 0; i < b->grad.size(); ++i) b->grad[i] += out->grad[i] * a->data[i];
    }
  };
  return record(OpKind::mul, out, backward_fn);
}

TensorPtr Graph::scale(const TensorPtr& x, float factor) {
  auto out = Tensor::zeros(x->shape, x->requires_grad);
  for (std::size_t i = 0; i < x->data.size(); ++i) out->data[i] = x->data[i] * factor;
  auto backward_fn = [=]() {
    if (out->grad.empty() || !x->requires_grad) return;
    x->ensure_grad();
    for (std::size_t i = 0; i < x->grad.size(); ++i) x->grad[i] += out->grad[i] * factor;
  };
  return record(OpKind::scale, out, backward_fn);
}

TensorPtr Graph::concat_channels(const std::vector<TensorPtr>& xs) {
  require(!xs.empty(), "concat_channels: empty input list");
  const Tensor& first = *xs.front();
  require(first.ndim() == 4, "concat_channels: inputs must be NCHW, got " + first.shape_str());
  int total_c = 0;
  bool needs_grad = false;
  for (const auto& t : xs) {
    require(t->ndim() == 4 && t->dim(0) == first.dim(0) && t->dim(2) == first.dim(2) &&
                t->dim(3) == first.dim(3),
            "concat_channels: extent mismatch " + shapes(first, *t));
    total_c += t->dim(1);
    needs_grad = needs_grad || t->requires_grad;
  }
  const int n = first.dim(0), h = first.dim(2), w = first.dim(3);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  auto out = Tensor::zeros({n, total_c, h, w}, needs_grad);
  for (int ni = 0; ni < n; ++ni) {
    std::size_t c_off = 0;
    for (const auto& t : xs) {
      const std::size_t chunk = static_cast<std::size_t>(t->dim(1)) * plane;
      std::copy_n(t->data.data() + static_cast<std::size_t>(ni) * chunk, chunk,
                  out->data.data() + (static_cast<std::size_t>(ni) * total_c) * plane + c_off);
      c_off += chunk;
    }
  }
  auto inputs = xs;  // keep alive
  auto backward_fn = [=]() {
    if (out->grad.empty()) return;
    for (int ni = 0; ni < n; ++ni) {
      std::size_t c_off = 0;
      for (const auto& t : inputs) {
        const std::size_t chunk = static_cast<std::size_t>(t->dim(1)) * plane;
        if (t->requires_grad) {
          t->ensure_grad();
          const float* src =
              out->grad.data() + (static_cast<std::size_t>(ni) * total_c) * plane + c_off;
          float* dst = t->grad.data() + static_cast<std::size_t>(ni) * chunk;
          for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
        }
        c_off += chunk;
      }
    }
  };
  return record(OpKind::concat_channels, out, backward_fn);
}

TensorPtr Graph::batch_norm2d(const TensorPtr& x, const TensorPtr& gamma, const TensorPtr& beta,
                              const TensorPtr& running_mean, const TensorPtr& running_var,
                              bool training) {
  require(x->ndim() == 4, "batch_norm2d: input must be NCHW, got " + x->shape_str());
  const int n = x->dim(0), c = x->dim(1), h = x->dim(2), w = x->dim(3);
  for (const TensorPtr& t : {gamma, beta, running_mean, running_var}) {
    require(t->ndim() == 1 && t->dim(0) == c,
            "batch_norm2d: per-channel parameter " + t->shape_str() + " does not match " +
                std::to_string(c) + " channels");
  }
  constexpr double kEps = 1e-5;
  constexpr double kMomentum = 0.1;
  const int hw = h * w;
  const std::size_t plane = static_cast<std::size_t>(hw);
  bool needs_grad = x->requires_grad || gamma->requires_grad || beta->requires_grad;
  auto out = Tensor::zeros(x->shape, needs_grad);

  auto saved_mean = std::make_shared<std::vector<double>>(c);
  auto saved_invstd = std::make_shared<std::vector<double>>(c);
  if (training) {
    kernels::batch_norm2d_forward_train(x->data.data(), n, c, hw, gamma->data.data(),
                                        beta->data.data(), kEps, out->data.data(),
                                        saved_mean->data(), saved_invstd->data());
    const double count = static_cast<double>(n) * hw;
    for (int ci = 0; ci < c; ++ci) {
      double var_biased = 1.0 / ((*saved_invstd)[ci] * (*saved_invstd)[ci]) - kEps;
      double var_unbiased = count > 1.0 ? var_biased * count / (count - 1.0) : var_biased;
      running_mean->data[ci] = static_cast<float>((1.0 - kMomentum) * running_mean->data[ci] +
                                                  kMomentum * (*saved_mean)[ci]);
      running_var->data[ci] = static_cast<float>((1.0 - kMomentum) * running_var->data[ci] +
                                                 kMomentum * var_unbiased);
    }
  } else {
    for (int ci = 0; ci < c; ++ci) {
      (*saved_mean)[ci] = running_mean->data[ci];
      (*saved_invstd)[ci] = 1.0 / std::sqrt(static_cast<double>(running_var->data[ci]) + kEps);
    }
    for (int ni = 0; ni < n; ++ni) {
      for (int ci = 0; ci < c; ++ci) {
        const float* p = x->data.data() + (static_cast<std::size_t>(ni) * c + ci) * plane;
        float* q = out->data.data() + (static_cast<std::size_t>(ni) * c + ci) * plane;
        double m = (*saved_mean)[ci], s = (*saved_invstd)[ci];
        double g = gamma->data[ci], b = beta->data[ci];
        for (std::size_t i = 0; i < plane; ++i) {
          q[i] = static_cast<float>((p[i] - m) * s * g + b);
        }
      }
    }
  }

  auto backward_fn = [=]() {
    if (out->grad.empty()) return;
    const float* gy = out->grad.data();
    const double count = static_cast<double>(n) * hw;
    for (int ci = 0; ci < c; ++ci) {
      double mean = (*saved_mean)[ci];
      double inv_std = (*saved_invstd)[ci];
      double sum_gy = 0.0, sum_gy_xhat = 0.0;
      for (int ni = 0; ni < n; ++ni) {
        const float* g = gy + (static_cast<std::size_t>(ni) * c + ci) * plane;
        const float* p = x->data.data() + (static_cast<std::size_t>(ni) * c + ci) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          double xhat = (p[i] - mean) * inv_std;
          sum_gy += g[i];
          sum_gy_xhat += g[i] * xhat;
        }
      }
      if (gamma->requires_grad) {
        gamma->ensure_grad();
        gamma->grad[ci] += static_cast<float>(sum_gy_xhat);
      }
      if (beta->requires_grad) {
        beta->ensure_grad();
        beta->grad[ci] += static_cast<float>(sum_gy);
      }
      if (x->requires_grad) {
        x->ensure_grad();
        double g_scale = static_cast<double>(gamma->data[ci]) * inv_std;
        double mean_gy = sum_gy / count;
        double mean_gy_xhat = sum_gy_xhat / count;
        for (int ni = 0; ni < n; ++ni) {
          const float* g = gy + (static_cast<std::size_t>(ni) * c + ci) * plane;
          const float* p = x->data.data() + (static_cast<std::size_t>(ni) * c + ci) * plane;
          float* gx = x->grad.data() + (static_cast<std::size_t>(ni) * c + ci) * plane;
          if (training) {
            for (std::size_t i = 0; i < plane; ++i) {
              double xhat = (p[i] - mean) * inv_std;
              gx[i] += static_cast<float>(g_scale * (g[i] - mean_gy - xhat * mean_gy_xhat));
            }
          } else {
            for (std::size_t i = 0; i < plane; ++i) {
              gx[i] += static_cast<float>(g_scale * g[i]);
            }
          }
        }
      }
    }
  };
  return record(OpKind::batch_norm2d, out, backward_fn);
}

TensorPtr Graph::bce_loss(const TensorPtr& pred, const TensorPtr& target, const TensorPtr& mask) {
  check_mask_shape(*pred, *target, mask, "bce_loss");
  auto mask_index = make_mask_indexer(*pred, mask.get());
  const std::size_t count = pred->data.size();

  auto out = Tensor::zeros({1}, pred->requires_grad);
  out->data[0] = static_cast<float>(kernels::bce_value(
      pred->data.data(), target->data.data(), mask ? mask->data.data() : nullptr, mask_index,
      count));

  std::size_t selected = count;
  if (mask) {
    selected = 0;
    for (std::size_t i = 0; i < count; ++i) {
      if (mask->data[mask_index(i)] != 0.f) ++selected;
    }
  }

  auto backward_fn = [=]() {
    if (out->grad.empty() || !pred->requires_grad || selected == 0) return;
    pred->ensure_grad();
    const double go = out->grad[0];
    const double inv_m = 1.0 / static_cast<double>(selected);
    for (std::size_t i = 0; i < count; ++i) {
      if (mask && mask->data[mask_index(i)] == 0.f) continue;
      double p = pred->data[i];
      if (p < 1e-7 || p > 1.0 - 1e-7) continue;  // clamped region has zero slope
      double t = target->data[i];
      pred->grad[i] += static_cast<float>(go * inv_m * (-t / p + (1.0 - t) / (1.0 - p)));
    }
  };
  return record(OpKind::bce_loss, out, backward_fn);
}

TensorPtr Graph::masked_l1_loss(const TensorPtr& pred, const TensorPtr& target,
                                const TensorPtr& mask) {
  check_mask_shape(*pred, *target, mask, "masked_l1_loss");
  auto mask_index = make_mask_indexer(*pred, mask.get());
  const std::size_t count = pred->data.size();

  auto out = Tensor::zeros({1}, pred->requires_grad);
  out->data[0] = static_cast<float>(kernels::l1_value(
      pred->data.data(), target->data.data(), mask ? mask->data.data() : nullptr, mask_index,
      count));

  std::size_t selected = count;
  if (mask) {
    selected = 0;
    for (std::size_t i = 0; i < count; ++i) {
      if (mask->data[mask_index(i)] != 0.f) ++selected;
    }
  }

  auto backward_fn = [=]() {
    if (out->grad.empty() || !pred->requires_grad || selected == 0) return;
    pred->ensure_grad();
    const double go = out->grad[0];
    const double inv_m = 1.0 / static_cast<double>(selected);
    for (std::size_t i = 0; i < count; ++i) {
      if (mask && mask->data[mask_index(i)] == 0.f) continue;
      float diff = pred->data[i] - target->data[i];
      float sgn = diff > 0.f ? 1.f : (diff < 0.f ? -1.f : 0.f);
      pred->grad[i] += static_cast<float>(go * inv_m * sgn);
    }
  };
  return record(OpKind::masked_l1_loss, out, backward_fn);
}

void sgd_step(std::span<float> weights, std::span<const float> grads, std::span<float> velocity,
              float lr, float momentum, float weight_decay) {
  if (weights.size() != grads.size() || weights.size() != velocity.size()) {
    throw ShapeError("sgd_step: weights/grads/velocity sizes differ");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      throw NumericError("sgd_step: non-finite gradient at element " + std::to_string(i));
    }
  }
  for (std::size_t i = 0; i < weights.size(); ++i) {
    float v = momentum * velocity[i] + (grads[i] + weight_decay * weights[i]);
    velocity[i] = v;
    weights[i] -= lr * v;
  }
}

}  // namespace rmipn::autodiff
