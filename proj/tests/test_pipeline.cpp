#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "rmipn/dataio.hpp"
#include "rmipn/pipeline.hpp"

using namespace rmipn;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("rmipn_pipeline_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_synth_dataset(const fs::path& dir, int count, int size, uint64_t seed,
                         int min_inst = 1, int max_inst = 2) {
  for (int i = 0; i < count; ++i) {
    auto sample = dataio::synth_sample(seed + static_cast<uint64_t>(i), size, size, min_inst,
                                       max_inst);
    char name[32];
    std::snprintf(name, sizeof(name), "img_%04d", i);
    dataio::write_image(dir / (std::string(name) + ".ppm"), sample.image);
    dataio::save_annotation(dir / (std::string(name) + ".txt"), sample.annotation);
  }
}

pipeline::TrainConfig tiny_config(uint64_t seed, int epochs) {
  pipeline::TrainConfig config;
  config.base_channels = 8;
  config.max_epochs = epochs;
  config.seed = seed;
  return config;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("empty dataset is a configuration error") {
  auto dir = temp_dir("empty");
  CHECK_THROWS_WITH_AS(pipeline::train(dir, dir / "out", tiny_config(1, 1)),
                       doctest::Contains("empty dataset"), ConfigError);
}

TEST_CASE("training is deterministic for a fixed seed") {
  auto data = temp_dir("det_data");
  write_synth_dataset(data, 2, 64, 11);
  auto out1 = temp_dir("det_out1");
  auto out2 = temp_dir("det_out2");
  auto r1 = pipeline::train(data, out1, tiny_config(5, 2));
  auto r2 = pipeline::train(data, out2, tiny_config(5, 2));
  REQUIRE(r1.history.size() == 2);
  // identical epoch-1 losses to the last printed digit and beyond
  CHECK(r1.history[0][5] == r2.history[0][5]);
  CHECK(r1.history[1][5] == r2.history[1][5]);
  // artifacts byte-identical
  CHECK(read_bytes(out1 / "checkpoint.rmip") == read_bytes(out2 / "checkpoint.rmip"));
  CHECK(read_bytes(out1 / "loss_history.csv") == read_bytes(out2 / "loss_history.csv"));
  CHECK(read_bytes(out1 / "report.txt") == read_bytes(out2 / "report.txt"));

  auto r3 = pipeline::train(data, temp_dir("det_out3"), tiny_config(6, 2));
  CHECK(r1.history[0][5] != r3.history[0][5]);
}

TEST_CASE("loss decreases while overfitting a single sample") {
  auto data = temp_dir("overfit_data");
  write_synth_dataset(data, 1, 64, 3);
  auto out = temp_dir("overfit_out");
  auto config = tiny_config(2, 30);
  auto report = pipeline::train(data, out, config);
  REQUIRE(report.history.size() == 30);
  CHECK(report.history.back()[5] < report.history.front()[5]);
  CHECK(report.best_loss <= report.history.front()[5]);
  CHECK(fs::exists(report.checkpoint_path));

  // history CSV has one line per epoch plus the header
  std::istringstream csv(report.history_csv());
  std::string line;
  int lines = 0;
  while (std::getline(csv, line)) ++lines;
  CHECK(lines == 31);
}

TEST_CASE("baseline training leaves perception parameters at their init") {
  auto data = temp_dir("baseline_data");
  write_synth_dataset(data, 1, 64, 7);
  auto out = temp_dir("baseline_out");
  auto config = tiny_config(9, 3);
  config.mode = model::NetMode::baseline;

  int observed_steps = 0;
  auto observer = [&](const pipeline::StepInfo& info) {
    ++observed_steps;
    for (const auto& entry : info.net->params().entries()) {
      if (entry.buffer) continue;
      if (entry.name.starts_with("ipm.") || entry.name.starts_with("rmipm.")) {
        for (float v : entry.tensor->grad) CHECK(v == 0.f);
      }
    }
    CHECK(info.loss->center == 0.f);
    CHECK(info.loss->total == doctest::Approx(info.loss->binarization).epsilon(1e-6));
  };
  auto report = pipeline::train(data, out, config, observer);
  CHECK(observed_steps == 3);

  // checkpoint still carries the untouched perception parameters, matching a
  // fresh same-seed init
  model::ModelConfig mc;
  mc.base_channels = 8;
  mc.height = 64;
  mc.width = 64;
  model::RmipnModel fresh(mc, config.seed);
  auto ckpt = dataio::load_checkpoint(report.checkpoint_path);
  CHECK(ckpt.mode == "baseline");
  for (std::size_t i = 0; i < ckpt.tensors.size(); ++i) {
    const auto& [name, tensor] = ckpt.tensors[i];
    if (name.starts_with("ipm.") || name.starts_with("rmipm.")) {
      CHECK(tensor->data == fresh.params().get(name)->data);
    }
  }
}

TEST_CASE("infer maps polygons back through the resize") {
  // train a throwaway model at 64x64, then run a 50x50 image through it
  auto data = temp_dir("resize_data");
  write_synth_dataset(data, 1, 64, 13);
  auto out = temp_dir("resize_out");
  auto report = pipeline::train(data, out, tiny_config(4, 1));

  // non-multiple-of-32 image; detections must come back in original coords
  auto sample = dataio::synth_sample(99, 64, 64, 1, 1);
  dataio::ImageU8 odd = dataio::resize_image(sample.image, 50, 50);
  auto odd_path = fs::temp_directory_path() / "rmipn_pipeline_odd.ppm";
  dataio::write_image(odd_path, odd);
  postprocess::PostParams params;
  params.box_score_thresh = 0.01f;  // barely trained model; geometry is the point
  params.bin_thresh = 0.1f;
  auto result = pipeline::infer(odd_path, report.checkpoint_path, params);
  CHECK(result.width == 50);
  CHECK(result.height == 50);

  // reference: resize to the next multiple of 32 by hand, detect, scale back
  auto ckpt = dataio::load_checkpoint(report.checkpoint_path);
  model::RmipnModel net(ckpt.config, 0);
  dataio::apply_checkpoint(ckpt, net.params());
  auto resized = dataio::resize_image(odd, 64, 64);
  auto net_space = pipeline::infer_image(resized, net, model::NetMode::rmipn, params);
  REQUIRE(result.polygons.size() == net_space.polygons.size());
  const double scale = 50.0 / 64.0;
  for (std::size_t i = 0; i < result.polygons.size(); ++i) {
    const auto& mapped = result.polygons[i].vertices();
    const auto& raw = net_space.polygons[i].vertices();
    REQUIRE(mapped.size() == raw.size());
    for (std::size_t j = 0; j < mapped.size(); ++j) {
      CHECK(std::abs(mapped[j].x - raw[j].x * scale) < 1.0);
      CHECK(std::abs(mapped[j].y - raw[j].y * scale) < 1.0);
    }
  }
  fs::remove(odd_path);
}

TEST_CASE("checkpoint and model config mismatches are load errors") {
  auto data = temp_dir("mismatch_data");
  write_synth_dataset(data, 1, 64, 21);
  auto out = temp_dir("mismatch_out");
  auto report = pipeline::train(data, out, tiny_config(8, 1));
  model::ModelConfig wrong;
  wrong.base_channels = 16;
  wrong.height = 64;
  wrong.width = 64;
  CHECK_THROWS_AS(dataio::load_checkpoint(report.checkpoint_path, &wrong), LoadError);
}

TEST_CASE("ablation produces two finite rows on a shared split") {
  auto data = temp_dir("ablate_data");
  write_synth_dataset(data, 6, 64, 31);
  auto out = temp_dir("ablate_out");
  auto config = tiny_config(12, 2);
  auto result = pipeline::ablation_run(data, out, config);

  CHECK(result.baseline_split_hash == result.rmipn_split_hash);
  CHECK(!result.eval_ids.empty());
  for (double v : {result.baseline_eval.recall, result.baseline_eval.precision,
                   result.baseline_eval.fmeasure, result.rmipn_eval.recall,
                   result.rmipn_eval.precision, result.rmipn_eval.fmeasure}) {
    CHECK(std::isfinite(v));
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  auto table = result.table();
  int rows = 0;
  std::istringstream is(table);
  std::string line;
  while (std::getline(is, line)) ++rows;
  CHECK(rows == 3);  // header + two method rows
  CHECK(table.find("baseline") != std::string::npos);
  CHECK(table.find("rmipn") != std::string::npos);
  CHECK(fs::exists(out / "ablation.txt"));
}

}  // TEST_SUITE
