#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "rmipn/autodiff.hpp"
#include "rmipn/labelgen.hpp"
#include "rmipn/rng.hpp"

namespace rmipn::model {

/// The four perception branches, in the order their features are fused.
enum class BranchKind { center = 0, foreground = 1, distance = 2, direction = 3 };

constexpr std::array<BranchKind, 4> kBranches{BranchKind::center, BranchKind::foreground,
                                              BranchKind::distance, BranchKind::direction};

const char* branch_name(BranchKind kind);
int branch_channels(BranchKind kind);  // 2 for direction, 1 otherwise

struct ModelConfig {
  int base_channels = 64;  // C, divisible by 4
  int height = 256;        // multiple of 32
  int width = 256;
  float binarize_k = 50.f;
  std::array<float, 5> loss_weights{1.f, 1.f, 1.f, 1.f, 1.f};  // alpha1..alpha5
  // Literal reading of the printed objective, where the first two terms are
  // multiplied instead of added. Off by default; see the loss composition.
  bool strict_eq6_product = false;
  void validate() const;
};

/// Forward-path selector: the baseline bypasses the perception modules and
/// feeds backbone features straight into the detection head.
enum class NetMode { rmipn, baseline };

const char* mode_name(NetMode mode);
NetMode mode_from_name(const std::string& name);

/// Named parameter collection with deterministic registration order.
/// Buffers (batch-norm running statistics) are serialized with the rest but
/// excluded from gradient updates.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    autodiff::TensorPtr tensor;
    bool buffer = false;
  };

  autodiff::TensorPtr add_param(const std::string& name, std::vector<int> shape);
  autodiff::TensorPtr add_buffer(const std::string& name, std::vector<int> shape,
                                 float fill = 0.f);
  const autodiff::TensorPtr& get(const std::string& name) const;
  bool contains(const std::string& name) const;
  const std::vector<Entry>& entries() const { return entries_; }
  int64_t param_element_count() const;
  void zero_grads();

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

struct IpmOutputs {
  autodiff::TensorPtr gate;     // W_a, sigmoid gate in (0,1)
  autodiff::TensorPtr excited;  // F_e = W_a * F_b
  autodiff::TensorPtr fused;    // F' = F_e + F_b
};

struct HeadOutputs {
  autodiff::TensorPtr prob;    // P
  autodiff::TensorPtr thresh;  // T
  autodiff::TensorPtr binary;  // B = sigmoid(k (P - T))
};

struct ForwardOutputs {
  autodiff::TensorPtr features;              // backbone output, C x H/4 x W/4
  std::array<IpmOutputs, 4> ipm;             // per branch (rmipn mode)
  std::array<autodiff::TensorPtr, 4> aux;    // per-branch target maps (training only)
  autodiff::TensorPtr fused;                 // RMIPM output
  autodiff::TensorPtr prob, thresh, binary;  // detection head, each 1 x H x W
};

struct LossBreakdown {
  float center = 0.f;
  float foreground = 0.f;
  float distance = 0.f;
  float direction = 0.f;
  float binarization = 0.f;
  float total = 0.f;
  autodiff::TensorPtr total_tensor;  // backward entry point
};

/// Assembles the per-sample label maps into batched NCHW target tensors.
struct LabelTensors {
  autodiff::TensorPtr center, foreground, distance, direction, band;
  autodiff::TensorPtr fg_mask;    // foreground as L1 mask
  autodiff::TensorPtr band_mask;  // band > 0
};
LabelTensors labels_to_tensors(const std::vector<const labelgen::LabelMaps*>& labels);

class RmipnModel {
 public:
  /// Fresh model with Kaiming-uniform conv weights, zero biases, and unit
  /// batch-norm scales, drawn deterministically from the seed.
  RmipnModel(const ModelConfig& config, uint64_t seed);

  const ModelConfig& config() const { return config_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  autodiff::TensorPtr backbone_forward(autodiff::Graph& g, const autodiff::TensorPtr& image);
  IpmOutputs ipm_forward(autodiff::Graph& g, const autodiff::TensorPtr& features,
                         BranchKind kind);
  autodiff::TensorPtr ipm_aux_head(autodiff::Graph& g, const autodiff::TensorPtr& excited,
                                   BranchKind kind);
  autodiff::TensorPtr ipm_aux_head(autodiff::Graph& g, const autodiff::TensorPtr& excited,
                                   BranchKind kind, int channels);
  autodiff::TensorPtr rmipm_forward(autodiff::Graph& g,
                                    const std::array<autodiff::TensorPtr, 4>& branch_features);
  HeadOutputs detection_head(autodiff::Graph& g, const autodiff::TensorPtr& fused, bool training);

  /// Full forward pass. Aux maps are produced only when training is true;
  /// baseline mode skips the perception modules entirely.
  ForwardOutputs forward(autodiff::Graph& g, const autodiff::TensorPtr& image, bool training,
                         NetMode mode = NetMode::rmipn);

  /// Weighted multi-task objective with per-term breakdown. Baseline mode
  /// trains only the binarization term.
  LossBreakdown total_loss(autodiff::Graph& g, const ForwardOutputs& outputs,
                           const LabelTensors& labels, NetMode mode = NetMode::rmipn);
  LossBreakdown total_loss(autodiff::Graph& g, const ForwardOutputs& outputs,
                           const std::vector<const labelgen::LabelMaps*>& labels,
                           NetMode mode = NetMode::rmipn);

  void zero_grads() { params_.zero_grads(); }

 private:
  ModelConfig config_;
  ParamStore params_;

  void register_parameters(uint64_t seed);
  autodiff::TensorPtr conv_block(autodiff::Graph& g, const autodiff::TensorPtr& x,
                                 const std::string& name, int stride, int padding,
                                 bool with_relu);
  autodiff::TensorPtr convt_block(autodiff::Graph& g, const autodiff::TensorPtr& x,
                                  const std::string& name, int stride, int padding,
                                  int output_padding);
};

}  // namespace rmipn::model
