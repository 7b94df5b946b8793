#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "rmipn/dataio.hpp"
#include "rmipn/evalkit.hpp"
#include "rmipn/labelgen.hpp"
#include "rmipn/model.hpp"
#include "rmipn/postprocess.hpp"

namespace rmipn::pipeline {

struct TrainConfig {
  double lr = 0.001;
  double momentum = 0.9;
  double weight_decay = 0.0001;
  int batch_size = 2;
  int max_epochs = 200;
  uint64_t seed = 0;
  model::NetMode mode = model::NetMode::rmipn;
  int base_channels = 64;
  labelgen::ShrinkPolicy policy;
  void validate() const;  // lr > 0, batch_size >= 1, max_epochs >= 1
};

/// Per-epoch mean losses: center, foreground, distance, direction,
/// binarization, total.
using EpochLosses = std::array<float, 6>;

struct TrainReport {
  std::vector<EpochLosses> history;  // one entry per completed epoch
  double wall_clock_seconds = 0.0;
  std::filesystem::path checkpoint_path;
  uint64_t seed = 0;
  int best_epoch = 0;  // 1-based epoch with the lowest total loss
  float best_loss = 0.f;

  // Wall clock is reported on stdout only so the serialized artifacts stay
  // byte-reproducible for a fixed seed.
  std::string report_text() const;
  std::string history_csv() const;  // epoch,L_cen,L_for,L_dis,L_dir,L_b,total
};

struct Sample {
  std::string id;
  dataio::ImageU8 image;
  std::vector<geometry::Polygon> polygons;
};

/// Loads `<stem>.ppm` + `<stem>.txt` pairs from a directory, sorted by stem.
std::vector<Sample> load_dataset(const std::filesystem::path& dir);

struct StepInfo {
  int epoch = 0;  // 1-based
  int step = 0;   // batch index within the epoch
  const model::RmipnModel* net = nullptr;
  const model::LossBreakdown* loss = nullptr;
};
using StepObserver = std::function<void(const StepInfo&)>;

/// Minibatch SGD over the whole objective. Writes checkpoint.rmip (best
/// epoch), report.txt, and loss_history.csv into out_dir. Deterministic for
/// a fixed seed.
TrainReport train(const std::vector<Sample>& samples, const std::filesystem::path& out_dir,
                  const TrainConfig& config, const StepObserver& observer = {});
TrainReport train(const std::filesystem::path& data_dir, const std::filesystem::path& out_dir,
                  const TrainConfig& config, const StepObserver& observer = {});

/// Normalizes a byte image into the network input range [-1, 1].
autodiff::TensorPtr image_to_input(const dataio::ImageU8& image);

/// Forward pass + post-processing with an already loaded model.
postprocess::DetectionResult infer_image(const dataio::ImageU8& image, model::RmipnModel& net,
                                         model::NetMode mode,
                                         const postprocess::PostParams& params);

/// Loads the checkpoint, resizes the image up to the next multiple of 32 when
/// needed, and maps the detected polygons back to original coordinates.
postprocess::DetectionResult infer(const std::filesystem::path& image_path,
                                   const std::filesystem::path& ckpt_path,
                                   const postprocess::PostParams& params);

struct AblationResult {
  TrainReport baseline_report, rmipn_report;
  evalkit::EvalReport baseline_eval, rmipn_eval;
  uint64_t baseline_split_hash = 0, rmipn_split_hash = 0;
  std::vector<std::string> eval_ids;
  std::string table() const;  // two rows with R / P / F columns
};

/// Trains both modes from the same seed on a deterministic train/eval split
/// of the dataset and evaluates each on the held-out part.
AblationResult ablation_run(const std::filesystem::path& data_dir,
                            const std::filesystem::path& out_dir, const TrainConfig& config);

}  // namespace rmipn::pipeline
