#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

namespace rmipn::autodiff::kernels {

// Dense NCHW compute kernels templated on the storage scalar. The graph uses
// T = float; accumulation is always double so the float path stays close to
// the double path used by the finite-difference checks.

template <typename T>
void conv2d_forward(const T* x, int n, int c, int h, int w, const T* weight, int out_c, int k,
                    const T* bias, int stride, int pad, T* y, int out_h, int out_w) {
  std::vector<double> acc(static_cast<std::size_t>(out_h) * out_w);
  for (int ni = 0; ni < n; ++ni) {
    for (int oc = 0; oc < out_c; ++oc) {
      std::fill(acc.begin(), acc.end(), bias ? static_cast<double>(bias[oc]) : 0.0);
      for (int ci = 0; ci < c; ++ci) {
        const T* x_plane = x + (static_cast<std::size_t>(ni) * c + ci) * h * w;
        const T* w_base = weight + ((static_cast<std::size_t>(oc) * c + ci) * k) * k;
        for (int kh = 0; kh < k; ++kh) {
          for (int kw = 0; kw < k; ++kw) {
            double wv = static_cast<double>(w_base[kh * k + kw]);
            for (int oh = 0; oh < out_h; ++oh) {
              int ih = oh * stride - pad + kh;
              if (ih < 0 || ih >= h) continue;
              double* acc_row = acc.data() + static_cast<std::size_t>(oh) * out_w;
              const T* x_row = x_plane + static_cast<std::size_t>(ih) * w;
              for (int ow = 0; ow < out_w; ++ow) {
                int iw = ow * stride - pad + kw;
                if (iw < 0 || iw >= w) continue;
                acc_row[ow] += wv * static_cast<double>(x_row[iw]);
              }
            }
          }
        }
      }
      T* y_plane = y + (static_cast<std::size_t>(ni) * out_c + oc) * out_h * out_w;
      for (std::size_t i = 0; i < acc.size(); ++i) y_plane[i] = static_cast<T>(acc[i]);
    }
  }
}

// Transposed convolution; weight layout is (in_channels, out_channels, k, k).
template <typename T>
void conv_transpose2d_forward(const T* x, int n, int c, int h, int w, const T* weight, int out_c,
                              int k, const T* bias, int stride, int pad, T* y, int out_h,
                              int out_w) {
  std::vector<double> acc(static_cast<std::size_t>(out_h) * out_w);
  for (int ni = 0; ni < n; ++ni) {
    for (int oc = 0; oc < out_c; ++oc) {
      std::fill(acc.begin(), acc.end(), bias ? static_cast<double>(bias[oc]) : 0.0);
      for (int ci = 0; ci < c; ++ci) {
        const T* x_plane = x + (static_cast<std::size_t>(ni) * c + ci) * h * w;
        const T* w_base = weight + ((static_cast<std::size_t>(ci) * out_c + oc) * k) * k;
        for (int kh = 0; kh < k; ++kh) {
          for (int kw = 0; kw < k; ++kw) {
            double wv = static_cast<double>(w_base[kh * k + kw]);
            for (int ih = 0; ih < h; ++ih) {
              int oh = ih * stride - pad + kh;
              if (oh < 0 || oh >= out_h) continue;
              double* acc_row = acc.data() + static_cast<std::size_t>(oh) * out_w;
              const T* x_row = x_plane + static_cast<std::size_t>(ih) * w;
              for (int iw = 0; iw < w; ++iw) {
                int ow = iw * stride - pad + kw;
                if (ow < 0 || ow >= out_w) continue;
                acc_row[ow] += wv * static_cast<double>(x_row[iw]);
              }
            }
          }
        }
      }
      T* y_plane = y + (static_cast<std::size_t>(ni) * out_c + oc) * out_h * out_w;
      for (std::size_t i = 0; i < acc.size(); ++i) y_plane[i] = static_cast<T>(acc[i]);
    }
  }
}

template <typename T>
T sigmoid_value(T v) {
  double z = static_cast<double>(v);
  z = z < -30.0 ? -30.0 : (z > 30.0 ? 30.0 : z);
  return static_cast<T>(1.0 / (1.0 + std::exp(-z)));
}

// Training-mode batch normalization over (N, H*W) per channel, eps outside.
// save_mean / save_invstd receive the per-channel statistics for backward.
template <typename T>
void batch_norm2d_forward_train(const T* x, int n, int c, int hw, const T* gamma, const T* beta,
                                double eps, T* y, double* save_mean, double* save_invstd) {
  const std::size_t plane = static_cast<std::size_t>(hw);
  const double count = static_cast<double>(n) * hw;
  for (int ci = 0; ci < c; ++ci) {
    double sum = 0.0, sum_sq = 0.0;
    for (int ni = 0; ni < n; ++ni) {
      const T* p = x + (static_cast<std::size_t>(ni) * c + ci) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        double v = static_cast<double>(p[i]);
        sum += v;
        sum_sq += v * v;
      }
    }
    double mean = sum / count;
    double var = sum_sq / count - mean * mean;
    if (var < 0.0) var = 0.0;  // rounding guard
    double inv_std = 1.0 / std::sqrt(var + eps);
    if (save_mean) save_mean[ci] = mean;
    if (save_invstd) save_invstd[ci] = inv_std;
    double g = static_cast<double>(gamma[ci]);
    double b = static_cast<double>(beta[ci]);
    for (int ni = 0; ni < n; ++ni) {
      const T* p = x + (static_cast<std::size_t>(ni) * c + ci) * plane;
      T* q = y + (static_cast<std::size_t>(ni) * c + ci) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        q[i] = static_cast<T>((static_cast<double>(p[i]) - mean) * inv_std * g + b);
      }
    }
  }
}

// Index of the mask element covering pred element i. A single-channel mask
// broadcasts across the channel dimension of an NCHW tensor.
struct MaskIndexer {
  std::size_t channels = 1;   // channels in pred
  std::size_t plane = 1;      // H*W of pred
  bool broadcast = false;     // mask has one channel, pred has `channels`
  std::size_t operator()(std::size_t i) const {
    if (!broadcast) return i;
    return (i / (channels * plane)) * plane + i % plane;
  }
};

template <typename T>
double bce_value(const T* pred, const T* target, const T* mask, const MaskIndexer& mask_index,
                 std::size_t count) {
  double sum = 0.0;
  std::size_t selected = 0;
  for (std::size_t i = 0; i < count; ++i) {
    double m = mask ? static_cast<double>(mask[mask_index(i)]) : 1.0;
    if (m == 0.0) continue;
    double p = static_cast<double>(pred[i]);
    p = p < 1e-7 ? 1e-7 : (p > 1.0 - 1e-7 ? 1.0 - 1e-7 : p);
    double t = static_cast<double>(target[i]);
    sum += -(t * std::log(p) + (1.0 - t) * std::log(1.0 - p));
    ++selected;
  }
  return selected ? sum / static_cast<double>(selected) : 0.0;
}

template <typename T>
double l1_value(const T* pred, const T* target, const T* mask, const MaskIndexer& mask_index,
                std::size_t count) {
  double sum = 0.0;
  std::size_t selected = 0;
  for (std::size_t i = 0; i < count; ++i) {
    double m = mask ? static_cast<double>(mask[mask_index(i)]) : 1.0;
    if (m == 0.0) continue;
    sum += std::abs(static_cast<double>(pred[i]) - static_cast<double>(target[i]));
    ++selected;
  }
  return selected ? sum / static_cast<double>(selected) : 0.0;
}

}  // namespace rmipn::autodiff::kernels
