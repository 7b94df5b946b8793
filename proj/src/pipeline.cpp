#include "rmipn/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace rmipn::pipeline {

namespace fs = std::filesystem;

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (max_epochs < 1) throw ConfigError("max_epochs must be at least 1");
  policy.validate();
}

std::string TrainReport::report_text() const {
  std::ostringstream os;
  os << "seed=" << seed << '\n';
  os << "epochs=" << history.size() << '\n';
  os << "best_epoch=" << best_epoch << '\n';
  char buf[64];
  std::snprintf(buf, sizeof(buf), "best_loss=%.6f\n", best_loss);
  os << buf;
  if (!history.empty()) {
    std::snprintf(buf, sizeof(buf), "final_loss=%.6f\n", history.back()[5]);
    os << buf;
  }
  os << "checkpoint=" << checkpoint_path.filename().string() << '\n';
  return os.str();
}

std::string TrainReport::history_csv() const {
  std::ostringstream os;
  os << "epoch,L_cen,L_for,L_dis,L_dir,L_b,total\n";
  char buf[160];
  for (std::size_t e = 0; e < history.size(); ++e) {
    const auto& h = history[e];
    std::snprintf(buf, sizeof(buf), "%zu,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n", e + 1, h[0], h[1],
                  h[2], h[3], h[4], h[5]);
    os << buf;
  }
  return os.str();
}

std::vector<Sample> load_dataset(const fs::path& dir) {
  std::vector<Sample> samples;
  if (!fs::is_directory(dir)) return samples;
  std::vector<fs::path> images;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".ppm") {
      images.push_back(entry.path());
    }
  }
  std::sort(images.begin(), images.end());
  for (const auto& img_path : images) {
    fs::path annot = img_path;
    annot.replace_extension(".txt");
    if (!fs::exists(annot)) continue;
    Sample s;
    s.id = img_path.stem().string();
    s.image = dataio::read_image(img_path);
    auto ann = dataio::parse_annotations(annot);
    s.polygons = std::move(ann.polygons);
    samples.push_back(std::move(s));
  }
  return samples;
}

autodiff::TensorPtr image_to_input(const dataio::ImageU8& image) {
  auto chw = dataio::image_to_float(image);
  for (float& v : chw) v = v * 2.f - 1.f;
  return autodiff::Tensor::from_data({1, image.channels, image.height, image.width},
                                     std::move(chw));
}

namespace {

autodiff::TensorPtr batch_images(const std::vector<const dataio::ImageU8*>& images) {
  const int n = static_cast<int>(images.size());
  const int c = images[0]->channels, h = images[0]->height, w = images[0]->width;
  auto t = autodiff::Tensor::zeros({n, c, h, w});
  const std::size_t chunk = static_cast<std::size_t>(c) * h * w;
  for (int ni = 0; ni < n; ++ni) {
    auto chw = dataio::image_to_float(*images[ni]);
    for (std::size_t i = 0; i < chunk; ++i) {
      t->data[ni * chunk + i] = chw[i] * 2.f - 1.f;
    }
  }
  return t;
}

const char* kLossNames[5] = {"L_cen", "L_for", "L_dis", "L_dir", "L_b"};

void check_loss_finite(const model::LossBreakdown& loss) {
  const float terms[5] = {loss.center, loss.foreground, loss.distance, loss.direction,
                          loss.binarization};
  for (int i = 0; i < 5; ++i) {
    if (!std::isfinite(terms[i])) {
      throw NumericError(std::string("training aborted: ") + kLossNames[i] + " is not finite");
    }
  }
  if (!std::isfinite(loss.total)) {
    throw NumericError("training aborted: total loss is not finite");
  }
}

uint64_t fnv1a(const std::string& bytes, uint64_t h = 1469598103934665603ull) {
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

TrainReport train(const fs::path& data_dir, const fs::path& out_dir, const TrainConfig& config,
                  const StepObserver& observer) {
  return train(load_dataset(data_dir), out_dir, config, observer);
}

TrainReport train(const std::vector<Sample>& samples, const fs::path& out_dir,
                  const TrainConfig& config, const StepObserver& observer) {
  config.validate();
  if (samples.empty()) {
    throw ConfigError("empty dataset: no image/annotation pairs to train on");
  }
  const int h = samples[0].image.height, w = samples[0].image.width;
  for (const auto& s : samples) {
    if (s.image.height != h || s.image.width != w) {
      throw ConfigError("training samples must share one image size; " + s.id + " differs");
    }
  }

  model::ModelConfig mc;
  mc.base_channels = config.base_channels;
  mc.height = h;
  mc.width = w;
  model::RmipnModel net(mc, config.seed);

  // Labels are deterministic per sample; build them once.
  std::vector<labelgen::LabelMaps> labels;
  labels.reserve(samples.size());
  for (const auto& s : samples) {
    labels.push_back(labelgen::generate_labels(s.polygons, h, w, config.policy));
  }

  // Velocity buffers aligned with the parameter entries.
  std::vector<std::vector<float>> velocity;
  for (const auto& entry : net.params().entries()) {
    velocity.emplace_back(entry.buffer ? 0 : entry.tensor->data.size(), 0.f);
  }

  const auto t_start = std::chrono::steady_clock::now();
  TrainReport report;
  report.seed = config.seed;
  report.best_loss = std::numeric_limits<float>::infinity();
  std::vector<std::vector<float>> best_snapshot;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    double epoch_sum[6] = {};
    std::size_t batch_count = 0;
    int step = 0;
    for (std::size_t offset = 0; offset < samples.size(); offset += config.batch_size) {
      const std::size_t last = std::min(samples.size(), offset + config.batch_size);
      std::vector<const dataio::ImageU8*> images;
      std::vector<const labelgen::LabelMaps*> batch_labels;
      for (std::size_t i = offset; i < last; ++i) {
        images.push_back(&samples[i].image);
        batch_labels.push_back(&labels[i]);
      }

      autodiff::Graph graph;
      auto input = batch_images(images);
      auto outputs = net.forward(graph, input, /*training=*/true, config.mode);
      auto loss = net.total_loss(graph, outputs, batch_labels, config.mode);
      check_loss_finite(loss);

      net.zero_grads();
      graph.backward(loss.total_tensor);
      const auto& entries = net.params().entries();
      for (std::size_t p = 0; p < entries.size(); ++p) {
        if (entries[p].buffer) continue;
        // The baseline bypasses the perception modules entirely, so their
        // parameters are excluded from the update (weight decay included).
        if (config.mode == model::NetMode::baseline &&
            (entries[p].name.starts_with("ipm.") || entries[p].name.starts_with("rmipm."))) {
          continue;
        }
        auto& tensor = *entries[p].tensor;
        try {
          autodiff::sgd_step(tensor.data, tensor.grad, velocity[p],
                             static_cast<float>(config.lr),
                             static_cast<float>(config.momentum),
                             static_cast<float>(config.weight_decay));
        } catch (const NumericError& e) {
          throw NumericError("parameter " + entries[p].name + ": " + e.what());
        }
      }

      if (observer) {
        StepInfo info{epoch, step, &net, &loss};
        observer(info);
      }
      ++step;
      ++batch_count;
      const float terms[6] = {loss.center,    loss.foreground,   loss.distance,
                              loss.direction, loss.binarization, loss.total};
      for (int i = 0; i < 6; ++i) epoch_sum[i] += terms[i];
    }

    EpochLosses mean;
    for (int i = 0; i < 6; ++i) {
      mean[i] = static_cast<float>(epoch_sum[i] / static_cast<double>(batch_count));
    }
    report.history.push_back(mean);
    if (mean[5] < report.best_loss) {
      report.best_loss = mean[5];
      report.best_epoch = epoch;
      best_snapshot.clear();
      for (const auto& entry : net.params().entries()) {
        best_snapshot.push_back(entry.tensor->data);
      }
    }
  }

  // Restore the best parameters before writing the checkpoint.
  {
    const auto& entries = net.params().entries();
    for (std::size_t p = 0; p < entries.size(); ++p) {
      entries[p].tensor->data = best_snapshot[p];
    }
  }
  fs::create_directories(out_dir);
  report.checkpoint_path = out_dir / "checkpoint.rmip";
  dataio::save_checkpoint(report.checkpoint_path, mc, model::mode_name(config.mode),
                          net.params());
  dataio::write_file_atomic(out_dir / "report.txt", report.report_text());
  dataio::write_file_atomic(out_dir / "loss_history.csv", report.history_csv());
  report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return report;
}

postprocess::DetectionResult infer_image(const dataio::ImageU8& image, model::RmipnModel& net,
                                         model::NetMode mode,
                                         const postprocess::PostParams& params) {
  autodiff::Graph graph;
  auto input = image_to_input(image);
  auto outputs = net.forward(graph, input, /*training=*/false, mode);
  return postprocess::extract_detections(outputs.prob->data, image.height, image.width, params);
}

postprocess::DetectionResult infer(const fs::path& image_path, const fs::path& ckpt_path,
                                   const postprocess::PostParams& params) {
  auto ckpt = dataio::load_checkpoint(ckpt_path);
  model::RmipnModel net(ckpt.config, /*seed=*/0);
  dataio::apply_checkpoint(ckpt, net.params());
  model::NetMode mode = model::mode_from_name(ckpt.mode);

  dataio::ImageU8 image = dataio::read_image(image_path);
  const int w0 = image.width, h0 = image.height;
  int w1 = (w0 + 31) / 32 * 32;
  int h1 = (h0 + 31) / 32 * 32;
  if (w1 == w0 && h1 == h0) {
    return infer_image(image, net, mode, params);
  }
  dataio::ImageU8 resized = dataio::resize_image(image, h1, w1);
  postprocess::DetectionResult net_space = infer_image(resized, net, mode, params);

  // Map polygons back into the original frame.
  postprocess::DetectionResult result;
  result.width = w0;
  result.height = h0;
  const double sx = static_cast<double>(w0) / w1;
  const double sy = static_cast<double>(h0) / h1;
  for (std::size_t i = 0; i < net_space.polygons.size(); ++i) {
    std::vector<geometry::Point2> pts;
    for (const auto& v : net_space.polygons[i].vertices()) {
      pts.push_back({v.x * sx, v.y * sy});
    }
    result.polygons.emplace_back(std::move(pts));
    result.scores.push_back(net_space.scores[i]);
  }
  return result;
}

std::string AblationResult::table() const {
  char buf[96];
  std::string out = "method    R       P       F\n";
  std::snprintf(buf, sizeof(buf), "baseline  %.4f  %.4f  %.4f\n", baseline_eval.recall,
                baseline_eval.precision, baseline_eval.fmeasure);
  out += buf;
  std::snprintf(buf, sizeof(buf), "rmipn     %.4f  %.4f  %.4f\n", rmipn_eval.recall,
                rmipn_eval.precision, rmipn_eval.fmeasure);
  out += buf;
  return out;
}

AblationResult ablation_run(const fs::path& data_dir, const fs::path& out_dir,
                            const TrainConfig& config) {
  auto samples = load_dataset(data_dir);
  if (samples.size() < 2) {
    throw ConfigError("ablation needs at least 2 samples, found " +
                      std::to_string(samples.size()));
  }
  // Deterministic split: the last quarter (at least one sample) is held out.
  const std::size_t eval_count = std::max<std::size_t>(1, samples.size() / 4);
  const std::size_t train_count = samples.size() - eval_count;
  std::vector<Sample> train_split(samples.begin(), samples.begin() + train_count);

  AblationResult result;
  for (std::size_t i = train_count; i < samples.size(); ++i) {
    result.eval_ids.push_back(samples[i].id);
  }

  auto run_mode = [&](model::NetMode mode, TrainReport* report, evalkit::EvalReport* eval,
                      uint64_t* split_hash) {
    TrainConfig mode_config = config;
    mode_config.mode = mode;
    fs::path mode_dir = out_dir / model::mode_name(mode);
    *report = train(train_split, mode_dir, mode_config);

    auto ckpt = dataio::load_checkpoint(report->checkpoint_path);
    model::RmipnModel net(ckpt.config, 0);
    dataio::apply_checkpoint(ckpt, net.params());

    uint64_t hash = 1469598103934665603ull;
    std::map<std::string, postprocess::DetectionResult> preds;
    std::map<std::string, std::vector<geometry::Polygon>> gts;
    postprocess::PostParams post;
    for (std::size_t i = train_count; i < samples.size(); ++i) {
      hash = fnv1a(samples[i].id + "\n", hash);
      preds[samples[i].id] = infer_image(samples[i].image, net, mode, post);
      gts[samples[i].id] = samples[i].polygons;
    }
    *split_hash = hash;
    *eval = evalkit::evaluate(preds, gts);
  };

  run_mode(model::NetMode::baseline, &result.baseline_report, &result.baseline_eval,
           &result.baseline_split_hash);
  run_mode(model::NetMode::rmipn, &result.rmipn_report, &result.rmipn_eval,
           &result.rmipn_split_hash);

  fs::create_directories(out_dir);
  dataio::write_file_atomic(out_dir / "ablation.txt", result.table());
  return result;
}

}  // namespace rmipn::pipeline
