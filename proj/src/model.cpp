#include "rmipn/model.hpp"

#include <cmath>

namespace rmipn::model {

using autodiff::Graph;
using autodiff::Tensor;
using autodiff::TensorPtr;

const char* branch_name(BranchKind kind) {
  switch (kind) {
    case BranchKind::center: return "center";
    case BranchKind::foreground: return "foreground";
    case BranchKind::distance: return "distance";
    case BranchKind::direction: return "direction";
  }
  return "?";
}

int branch_channels(BranchKind kind) { return kind == BranchKind::direction ? 2 : 1; }

const char* mode_name(NetMode mode) { return mode == NetMode::rmipn ? "rmipn" : "baseline"; }

NetMode mode_from_name(const std::string& name) {
  if (name == "rmipn") return NetMode::rmipn;
  if (name == "baseline") return NetMode::baseline;
  throw ConfigError("unknown mode '" + name + "' (expected rmipn or baseline)");
}

void ModelConfig::validate() const {
  if (base_channels < 4 || base_channels % 4 != 0) {
    throw ConfigError("base_channels must be a positive multiple of 4, got " +
                      std::to_string(base_channels));
  }
  if (height < 32 || width < 32 || height % 32 != 0 || width % 32 != 0) {
    throw ConfigError("input dims must be multiples of 32 and at least 32, got " +
                      std::to_string(height) + "x" + std::to_string(width));
  }
  for (float a : loss_weights) {
    if (!(a >= 0.f)) throw ConfigError("loss weights must be >= 0");
  }
  if (!(binarize_k > 0.f)) throw ConfigError("binarize_k must be positive");
}

TensorPtr ParamStore::add_param(const std::string& name, std::vector<int> shape) {
  if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
  auto t = Tensor::zeros(std::move(shape), /*requires_grad=*/true);
  index_[name] = entries_.size();
  entries_.push_back({name, t, false});
  return t;
}

TensorPtr ParamStore::add_buffer(const std::string& name, std::vector<int> shape, float fill) {
  if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
  auto t = Tensor::full(std::move(shape), fill, /*requires_grad=*/false);
  index_[name] = entries_.size();
  entries_.push_back({name, t, true});
  return t;
}

const TensorPtr& ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
  return entries_[it->second].tensor;
}

bool ParamStore::contains(const std::string& name) const { return index_.count(name) != 0; }

int64_t ParamStore::param_element_count() const {
  int64_t n = 0;
  for (const auto& e : entries_) {
    if (!e.buffer) n += e.tensor->numel();
  }
  return n;
}

void ParamStore::zero_grads() {
  for (auto& e : entries_) {
    if (!e.buffer) e.tensor->zero_grad();
  }
}

namespace {

void kaiming_uniform(Tensor& t, int fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (float& v : t.data) v = static_cast<float>(rng.uniform(-bound, bound));
}

}  // namespace

RmipnModel::RmipnModel(const ModelConfig& config, uint64_t seed) : config_(config) {
  config_.validate();
  register_parameters(seed);
}

void RmipnModel::register_parameters(uint64_t seed) {
  Rng rng(seed);
  const int c = config_.base_channels;
  const int c4 = c / 4;

  auto conv = [&](const std::string& name, int out_c, int in_c, int k) {
    auto w = params_.add_param(name + ".w", {out_c, in_c, k, k});
    kaiming_uniform(*w, in_c * k * k, rng);
    params_.add_param(name + ".b", {out_c});
  };
  auto convt = [&](const std::string& name, int in_c, int out_c, int k) {
    auto w = params_.add_param(name + ".w", {in_c, out_c, k, k});
    kaiming_uniform(*w, in_c * k * k, rng);
    params_.add_param(name + ".b", {out_c});
  };
  auto bn = [&](const std::string& name, int channels) {
    auto gamma = params_.add_param(name + ".gamma", {channels});
    std::fill(gamma->data.begin(), gamma->data.end(), 1.f);
    params_.add_param(name + ".beta", {channels});
    params_.add_buffer(name + ".running_mean", {channels}, 0.f);
    params_.add_buffer(name + ".running_var", {channels}, 1.f);
  };

  conv("backbone.enc1", c / 2, 3, 3);
  conv("backbone.enc2", c, c / 2, 3);
  conv("backbone.enc3", c, c, 3);
  convt("backbone.up", c, c, 3);
  conv("backbone.fuse", c, 2 * c, 3);

  for (BranchKind kind : kBranches) {
    std::string base = std::string("ipm.") + branch_name(kind);
    conv(base + ".reduce", c4, c, 3);
    conv(base + ".context", c4, c4, 5);
    convt(base + ".expand", c4, c, 3);
    convt(base + ".aux1", c, c4, 3);
    convt(base + ".aux2", c4, branch_channels(kind), 3);
  }

  conv("rmipm.fuse", c, 4 * c, 3);

  for (const char* head : {"head.prob", "head.thresh"}) {
    std::string base(head);
    convt(base + ".up1", c, c4, 2);
    bn(base + ".bn", c4);
    convt(base + ".up2", c4, 1, 2);
  }
}

TensorPtr RmipnModel::conv_block(Graph& g, const TensorPtr& x, const std::string& name,
                                 int stride, int padding, bool with_relu) {
  auto y = g.conv2d(x, params_.get(name + ".w"), params_.get(name + ".b"), stride, padding);
  return with_relu ? g.relu(y) : y;
}

TensorPtr RmipnModel::convt_block(Graph& g, const TensorPtr& x, const std::string& name,
                                  int stride, int padding, int output_padding) {
  return g.conv_transpose2d(x, params_.get(name + ".w"), params_.get(name + ".b"), stride,
                            padding, output_padding);
}

TensorPtr RmipnModel::backbone_forward(Graph& g, const TensorPtr& image) {
  if (image->ndim() != 4 || image->dim(1) != 3) {
    throw ShapeError("backbone: expected Nx3xHxW image, got " + image->shape_str());
  }
  const int h = image->dim(2), w = image->dim(3);
  if (h % 32 != 0 || w % 32 != 0 || h < 32 || w < 32) {
    throw ShapeError("backbone: input dims must be multiples of 32, got " + std::to_string(h) +
                     "x" + std::to_string(w));
  }
  auto e1 = conv_block(g, image, "backbone.enc1", 2, 1, true);  // C/2 x H/2
  auto e2 = conv_block(g, e1, "backbone.enc2", 2, 1, true);     // C   x H/4
  auto e3 = conv_block(g, e2, "backbone.enc3", 2, 1, true);     // C   x H/8
  auto up = g.relu(convt_block(g, e3, "backbone.up", 2, 1, 1)); // C   x H/4
  auto cat = g.concat_channels({up, e2});                       // 2C  x H/4
  return conv_block(g, cat, "backbone.fuse", 1, 1, true);       // C   x H/4
}

IpmOutputs RmipnModel::ipm_forward(Graph& g, const TensorPtr& features, BranchKind kind) {
  const int h = features->dim(2), w = features->dim(3);
  if (h % 2 != 0 || w % 2 != 0) {
    throw ShapeError("ipm: feature extents must be even, got " + features->shape_str());
  }
  std::string base = std::string("ipm.") + branch_name(kind);
  auto reduced = g.relu(conv_block(g, features, base + ".reduce", 2, 1, false));   // C/4 x h/2
  auto context = g.relu(conv_block(g, reduced, base + ".context", 1, 2, false));   // C/4 x h/2
  auto gate = g.sigmoid(convt_block(g, context, base + ".expand", 2, 1, 1));       // C   x h
  IpmOutputs out;
  out.gate = gate;
  out.excited = g.mul(gate, features);
  out.fused = g.add(out.excited, features);
  return out;
}

TensorPtr RmipnModel::ipm_aux_head(Graph& g, const TensorPtr& excited, BranchKind kind) {
  return ipm_aux_head(g, excited, kind, branch_channels(kind));
}

TensorPtr RmipnModel::ipm_aux_head(Graph& g, const TensorPtr& excited, BranchKind kind,
                                   int channels) {
  if (channels != 1 && channels != 2) {
    throw ConfigError("aux head channel count must be 1 or 2, got " + std::to_string(channels));
  }
  std::string base = std::string("ipm.") + branch_name(kind);
  auto mid = g.relu(convt_block(g, excited, base + ".aux1", 2, 1, 1));
  auto raw = convt_block(g, mid, base + ".aux2", 2, 1, 1);
  return kind == BranchKind::direction ? g.tanh(raw) : g.sigmoid(raw);
}

TensorPtr RmipnModel::rmipm_forward(Graph& g,
                                    const std::array<TensorPtr, 4>& branch_features) {
  for (const auto& t : branch_features) {
    if (!t) throw ShapeError("rmipm: all four branch features are required");
    if (!t->same_shape(*branch_features[0])) {
      throw ShapeError("rmipm: branch extent mismatch " + branch_features[0]->shape_str() +
                       " vs " + t->shape_str());
    }
  }
  auto cat = g.concat_channels(
      {branch_features[0], branch_features[1], branch_features[2], branch_features[3]});
  return g.relu(conv_block(g, cat, "rmipm.fuse", 1, 1, false));
}

HeadOutputs RmipnModel::detection_head(Graph& g, const TensorPtr& fused, bool training) {
  auto stack = [&](const std::string& base) {
    auto up1 = convt_block(g, fused, base + ".up1", 2, 0, 0);
    auto norm = g.batch_norm2d(up1, params_.get(base + ".bn.gamma"),
                               params_.get(base + ".bn.beta"),
                               params_.get(base + ".bn.running_mean"),
                               params_.get(base + ".bn.running_var"), training);
    auto up2 = convt_block(g, g.relu(norm), base + ".up2", 2, 0, 0);
    return g.sigmoid(up2);
  };
  HeadOutputs out;
  out.prob = stack("head.prob");
  out.thresh = stack("head.thresh");
  auto diff = g.add(out.prob, g.scale(out.thresh, -1.f));
  out.binary = g.sigmoid(g.scale(diff, config_.binarize_k));
  return out;
}

ForwardOutputs RmipnModel::forward(Graph& g, const TensorPtr& image, bool training,
                                   NetMode mode) {
  ForwardOutputs out;
  out.features = backbone_forward(g, image);
  TensorPtr head_input = out.features;
  if (mode == NetMode::rmipn) {
    std::array<TensorPtr, 4> fused_branches;
    for (std::size_t i = 0; i < kBranches.size(); ++i) {
      out.ipm[i] = ipm_forward(g, out.features, kBranches[i]);
      fused_branches[i] = out.ipm[i].fused;
      if (training) out.aux[i] = ipm_aux_head(g, out.ipm[i].excited, kBranches[i]);
    }
    out.fused = rmipm_forward(g, fused_branches);
    head_input = out.fused;
  }
  auto head = detection_head(g, head_input, training);
  out.prob = head.prob;
  out.thresh = head.thresh;
  out.binary = head.binary;
  return out;
}

LabelTensors labels_to_tensors(const std::vector<const labelgen::LabelMaps*>& labels) {
  if (labels.empty()) throw ConfigError("labels_to_tensors: empty batch");
  const int n = static_cast<int>(labels.size());
  const int h = labels[0]->height, w = labels[0]->width;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (const auto* m : labels) {
    if (m->height != h || m->width != w) {
      throw ShapeError("labels_to_tensors: mixed label extents in one batch");
    }
  }
  auto gather1 = [&](auto member) {
    auto t = Tensor::zeros({n, 1, h, w});
    for (int ni = 0; ni < n; ++ni) {
      const auto& src = labels[ni]->*member;
      std::copy(src.begin(), src.end(), t->data.begin() + ni * plane);
    }
    return t;
  };
  LabelTensors out;
  out.center = gather1(&labelgen::LabelMaps::center);
  out.foreground = gather1(&labelgen::LabelMaps::foreground);
  out.distance = gather1(&labelgen::LabelMaps::distance);
  out.band = gather1(&labelgen::LabelMaps::threshold_band);
  out.direction = Tensor::zeros({n, 2, h, w});
  for (int ni = 0; ni < n; ++ni) {
    std::copy(labels[ni]->dir_x.begin(), labels[ni]->dir_x.end(),
              out.direction->data.begin() + (2 * ni) * plane);
    std::copy(labels[ni]->dir_y.begin(), labels[ni]->dir_y.end(),
              out.direction->data.begin() + (2 * ni + 1) * plane);
  }
  out.fg_mask = out.foreground;
  out.band_mask = Tensor::zeros({n, 1, h, w});
  for (std::size_t i = 0; i < out.band->data.size(); ++i) {
    out.band_mask->data[i] = out.band->data[i] > 0.f ? 1.f : 0.f;
  }
  return out;
}

LossBreakdown RmipnModel::total_loss(Graph& g, const ForwardOutputs& outputs,
                                     const std::vector<const labelgen::LabelMaps*>& labels,
                                     NetMode mode) {
  return total_loss(g, outputs, labels_to_tensors(labels), mode);
}

LossBreakdown RmipnModel::total_loss(Graph& g, const ForwardOutputs& outputs,
                                     const LabelTensors& labels, NetMode mode) {
  if (!outputs.prob->same_shape(*labels.center)) {
    throw ShapeError("total_loss: prediction/label extent mismatch " +
                     outputs.prob->shape_str() + " vs " + labels.center->shape_str());
  }
  const auto& alpha = config_.loss_weights;
  LossBreakdown breakdown;

  // L_b: binarization + probability supervision on the center map, plus the
  // threshold regression inside the band.
  auto l_bin = g.add(g.add(g.bce_loss(outputs.binary, labels.center),
                           g.bce_loss(outputs.prob, labels.center)),
                     g.masked_l1_loss(outputs.thresh, labels.band, labels.band_mask));
  breakdown.binarization = l_bin->data[0];

  TensorPtr total = g.scale(l_bin, alpha[4]);

  if (mode == NetMode::rmipn) {
    for (const auto& aux : outputs.aux) {
      if (!aux) {
        throw ConfigError("total_loss: aux maps missing; run forward with training=true");
      }
    }
    auto l_cen = g.bce_loss(outputs.aux[0], labels.center);
    auto l_for = g.bce_loss(outputs.aux[1], labels.foreground);
    auto l_dis = g.masked_l1_loss(outputs.aux[2], labels.distance, labels.fg_mask);
    auto l_dir = g.masked_l1_loss(outputs.aux[3], labels.direction, labels.fg_mask);
    breakdown.center = l_cen->data[0];
    breakdown.foreground = l_for->data[0];
    breakdown.distance = l_dis->data[0];
    breakdown.direction = l_dir->data[0];

    auto rest = g.add(g.add(g.scale(l_dis, alpha[2]), g.scale(l_dir, alpha[3])), total);
    if (config_.strict_eq6_product) {
      total = g.add(g.mul(g.scale(l_cen, alpha[0]), g.scale(l_for, alpha[1])), rest);
    } else {
      total = g.add(g.add(g.scale(l_cen, alpha[0]), g.scale(l_for, alpha[1])), rest);
    }
  }

  breakdown.total = total->data[0];
  breakdown.total_tensor = total;
  return breakdown;
}

}  // namespace rmipn::model
