#include "rmipn/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "rmipn/dataio.hpp"
#include "rmipn/evalkit.hpp"
#include "rmipn/labelgen.hpp"
#include "rmipn/pipeline.hpp"
#include "rmipn/postprocess.hpp"

namespace rmipn::cli {

namespace fs = std::filesystem;

namespace {

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int cmd_synth(int count, int size, uint64_t seed, const fs::path& out) {
  fs::create_directories(out);
  for (int i = 0; i < count; ++i) {
    auto sample = dataio::synth_sample(seed + static_cast<uint64_t>(i), size, size, 1, 4);
    char name[32];
    std::snprintf(name, sizeof(name), "img_%04d", i);
    dataio::write_image(out / (std::string(name) + ".ppm"), sample.image);
    dataio::save_annotation(out / (std::string(name) + ".txt"), sample.annotation);
  }
  std::cout << "synth: wrote " << count << " image+annotation pairs to " << out.string()
            << "\n";
  return 0;
}

int cmd_labelgen(const fs::path& images, const fs::path& annots, const fs::path& out,
                 double shrink_ratio) {
  labelgen::ShrinkPolicy policy;
  policy.shrink_ratio = shrink_ratio;
  policy.validate();
  fs::create_directories(out);

  std::vector<fs::path> image_files;
  if (fs::is_directory(images)) {
    for (const auto& entry : fs::directory_iterator(images)) {
      if (entry.is_regular_file() && entry.path().extension() == ".ppm") {
        image_files.push_back(entry.path());
      }
    }
  }
  std::sort(image_files.begin(), image_files.end());
  if (image_files.empty()) {
    throw ConfigError("no .ppm images found in " + images.string());
  }

  int warnings = 0, produced = 0;
  for (const auto& img_path : image_files) {
    fs::path annot = annots / (img_path.stem().string() + ".txt");
    if (!fs::exists(annot)) {
      std::cerr << "labelgen: skipping " << img_path.stem().string()
                << " (no annotation file)\n";
      ++warnings;
      continue;
    }
    auto image = dataio::read_image(img_path);
    std::vector<dataio::ParseIssue> issues;
    auto ann = dataio::parse_annotations(annot, &issues);
    for (const auto& issue : issues) {
      std::cerr << "labelgen: " << annot.filename().string() << ":" << issue.line << ": "
                << issue.message << "\n";
      ++warnings;
    }
    labelgen::RenderDiag diag;
    auto maps = labelgen::generate_labels(ann.polygons, image.height, image.width, policy,
                                          &diag);
    warnings += diag.zero_area_skipped;
    labelgen::save_label_maps(out / (img_path.stem().string() + ".rmlb"), maps);
    ++produced;
  }
  std::cout << "labelgen: " << produced << " label containers -> " << out.string() << " ("
            << warnings << " warnings)\n";
  return 0;
}

int cmd_train(const fs::path& data, const fs::path& out, int epochs, double lr, int batch,
              uint64_t seed, const std::string& mode, int channels) {
  pipeline::TrainConfig config;
  config.max_epochs = epochs;
  config.lr = lr;
  config.batch_size = batch;
  config.seed = seed;
  config.mode = model::mode_from_name(mode);
  config.base_channels = channels;
  auto report = pipeline::train(data, out, config);
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "train: %zu epochs, final_loss=%.6f best=%.6f (epoch %d) -> %s [%.1fs]\n",
                report.history.size(), report.history.back()[5], report.best_loss,
                report.best_epoch, report.checkpoint_path.string().c_str(),
                report.wall_clock_seconds);
  std::cout << buf;
  return 0;
}

int cmd_infer(const fs::path& ckpt, const fs::path& image, const fs::path& out_json,
              float bin_thresh, float box_thresh, double unclip) {
  postprocess::PostParams params;
  params.bin_thresh = bin_thresh;
  params.box_score_thresh = box_thresh;
  params.unclip_ratio = unclip;
  auto result = pipeline::infer(image, ckpt, params);
  dataio::write_file_atomic(out_json, postprocess::to_json(result));
  std::cout << "infer: " << result.polygons.size() << " detections -> " << out_json.string()
            << "\n";
  return 0;
}

std::vector<geometry::Polygon> polygons_from_file(const fs::path& path) {
  if (path.extension() == ".json") {
    return postprocess::detection_from_json(read_text(path)).polygons;
  }
  return dataio::parse_annotations(path).polygons;
}

int cmd_eval(const fs::path& pred_dir, const fs::path& gt_dir, double iou) {
  std::map<std::string, postprocess::DetectionResult> preds;
  std::map<std::string, std::vector<geometry::Polygon>> gts;
  for (const auto& entry : fs::directory_iterator(gt_dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".txt") continue;
    gts[entry.path().stem().string()] = dataio::parse_annotations(entry.path()).polygons;
  }
  for (const auto& [key, unused] : gts) {
    fs::path json_path = pred_dir / (key + ".json");
    fs::path txt_path = pred_dir / (key + ".txt");
    fs::path source = fs::exists(json_path) ? json_path : txt_path;
    if (!fs::exists(source)) {
      throw ConfigError("no prediction file for image " + key + " in " + pred_dir.string());
    }
    postprocess::DetectionResult det;
    det.polygons = polygons_from_file(source);
    det.scores.assign(det.polygons.size(), 1.0);
    preds[key] = std::move(det);
  }
  auto report = evalkit::evaluate(preds, gts, iou);
  std::cout << report.to_text();
  return 0;
}

int cmd_viz(const fs::path& labels, const fs::path& result, const fs::path& image,
            const fs::path& out) {
  fs::create_directories(out);
  if (!labels.empty()) {
    auto maps = labelgen::load_label_maps(labels);
    const std::string stem = labels.stem().string();
    auto save_plane = [&](const std::vector<float>& plane, const char* name, float lo,
                          float hi) {
      dataio::write_image(out / (stem + "_" + name + ".pgm"),
                          dataio::plane_to_gray(plane.data(), maps.height, maps.width, lo, hi));
    };
    save_plane(maps.center, "center", 0.f, 1.f);
    save_plane(maps.foreground, "foreground", 0.f, 1.f);
    save_plane(maps.threshold_band, "threshold_band", 0.f, 1.f);
    save_plane(maps.distance, "distance", 0.f, 1.f);
    save_plane(maps.dir_x, "dir_x", -1.f, 1.f);
    save_plane(maps.dir_y, "dir_y", -1.f, 1.f);
    std::cout << "viz: 6 label renders -> " << out.string() << "\n";
    return 0;
  }

  auto det = postprocess::detection_from_json(read_text(result));
  dataio::ImageU8 canvas;
  if (!image.empty()) {
    canvas = dataio::read_image(image);
    if (canvas.channels == 1) {
      dataio::ImageU8 rgb;
      rgb.width = canvas.width;
      rgb.height = canvas.height;
      rgb.channels = 3;
      rgb.pixels.resize(canvas.pixels.size() * 3);
      for (std::size_t i = 0; i < canvas.pixels.size(); ++i) {
        rgb.pixels[3 * i] = rgb.pixels[3 * i + 1] = rgb.pixels[3 * i + 2] = canvas.pixels[i];
      }
      canvas = std::move(rgb);
    }
  } else {
    canvas.width = det.width;
    canvas.height = det.height;
    canvas.channels = 3;
    canvas.pixels.assign(static_cast<std::size_t>(det.width) * det.height * 3, 0);
  }

  auto draw_line = [&](geometry::Point2 a, geometry::Point2 b) {
    int steps = static_cast<int>(std::ceil(std::max(std::abs(b.x - a.x), std::abs(b.y - a.y))));
    steps = std::max(steps, 1);
    for (int s = 0; s <= steps; ++s) {
      double t = static_cast<double>(s) / steps;
      int x = static_cast<int>(std::lround(a.x + t * (b.x - a.x)));
      int y = static_cast<int>(std::lround(a.y + t * (b.y - a.y)));
      if (x < 0 || x >= canvas.width || y < 0 || y >= canvas.height) continue;
      canvas.pixels[canvas.index(x, y, 0)] = 255;
      canvas.pixels[canvas.index(x, y, 1)] = 32;
      canvas.pixels[canvas.index(x, y, 2)] = 32;
    }
  };
  for (const auto& poly : det.polygons) {
    const auto& v = poly.vertices();
    for (std::size_t i = 0; i < v.size(); ++i) {
      draw_line(v[i], v[(i + 1) % v.size()]);
    }
  }
  fs::path out_path = out / (result.stem().string() + "_overlay.ppm");
  dataio::write_image(out_path, canvas);
  std::cout << "viz: detection overlay (" << det.polygons.size() << " boxes) -> "
            << out_path.string() << "\n";
  return 0;
}

int cmd_ablate(const fs::path& data, const fs::path& out, uint64_t seed, int epochs,
               int channels) {
  pipeline::TrainConfig config;
  config.seed = seed;
  config.max_epochs = epochs;
  config.base_channels = channels;
  auto result = pipeline::ablation_run(data, out, config);
  std::cout << result.table();
  std::cout << "ablate: evaluated " << result.eval_ids.size() << " held-out images -> "
            << (out / "ablation.txt").string() << "\n";
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"Segmentation-based scene text detector with multi-map region supervision"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate synthetic image/annotation pairs");
  int synth_count = 8, synth_size = 256;
  uint64_t synth_seed = 0;
  std::string synth_out;
  synth->add_option("--count", synth_count, "Number of samples")->capture_default_str();
  synth->add_option("--size", synth_size, "Square image size (multiple of 32)")
      ->capture_default_str();
  synth->add_option("--seed", synth_seed, "Base seed")->capture_default_str();
  synth->add_option("--out", synth_out, "Output directory")->required();

  // labelgen
  auto* lbl = app.add_subcommand("labelgen", "Render supervision rasters from annotations");
  std::string lbl_images, lbl_annots, lbl_out;
  double lbl_shrink = 0.4;
  lbl->add_option("--images", lbl_images, "Directory of .ppm images")->required();
  lbl->add_option("--annots", lbl_annots, "Directory of .txt annotations")->required();
  lbl->add_option("--out", lbl_out, "Output directory for .rmlb containers")->required();
  lbl->add_option("--shrink-ratio", lbl_shrink, "Shrink ratio r")->capture_default_str();

  // train
  auto* tr = app.add_subcommand("train", "Train a detector on an image/annotation directory");
  std::string tr_data, tr_out, tr_mode = "rmipn";
  int tr_epochs = 200, tr_batch = 2, tr_channels = 64;
  double tr_lr = 0.001;
  uint64_t tr_seed = 0;
  tr->add_option("--data", tr_data, "Dataset directory (.ppm + .txt pairs)")->required();
  tr->add_option("--out", tr_out, "Output directory")->required();
  tr->add_option("--epochs", tr_epochs, "Training epochs")->capture_default_str();
  tr->add_option("--lr", tr_lr, "Learning rate")->capture_default_str();
  tr->add_option("--batch", tr_batch, "Batch size")->capture_default_str();
  tr->add_option("--seed", tr_seed, "Seed")->capture_default_str();
  tr->add_option("--mode", tr_mode, "baseline or rmipn")
      ->check(CLI::IsMember({"baseline", "rmipn"}))
      ->capture_default_str();
  tr->add_option("--channels", tr_channels, "Base feature channels (multiple of 4)")
      ->capture_default_str();

  // infer
  auto* inf = app.add_subcommand("infer", "Detect text regions in one image");
  std::string inf_ckpt, inf_image, inf_json;
  float inf_bin = 0.3f, inf_box = 0.5f;
  double inf_unclip = 1.5;
  inf->add_option("--ckpt", inf_ckpt, "Checkpoint path")->required();
  inf->add_option("--image", inf_image, "Input .ppm image")->required();
  inf->add_option("--out-json", inf_json, "Output JSON path")->required();
  inf->add_option("--bin-thresh", inf_bin, "Binarization threshold")->capture_default_str();
  inf->add_option("--box-thresh", inf_box, "Box score threshold")->capture_default_str();
  inf->add_option("--unclip", inf_unclip, "Unclip ratio r'")->capture_default_str();

  // eval
  auto* ev = app.add_subcommand("eval", "Score predictions against ground truth");
  std::string ev_pred, ev_gt;
  double ev_iou = 0.5;
  ev->add_option("--pred", ev_pred, "Directory of predictions (.json or .txt)")->required();
  ev->add_option("--gt", ev_gt, "Directory of ground-truth .txt annotations")->required();
  ev->add_option("--iou", ev_iou, "IoU match threshold")->capture_default_str();

  // viz
  auto* vz = app.add_subcommand("viz", "Render label maps or a detection overlay");
  std::string vz_labels, vz_result, vz_image, vz_out;
  auto* vz_src = vz->add_option_group("source");
  vz_src->add_option("--labels", vz_labels, "Label container (.rmlb) to render");
  vz_src->add_option("--result", vz_result, "Detection JSON to overlay");
  vz_src->require_option(1);
  vz->add_option("--image", vz_image, "Background image for the overlay");
  vz->add_option("--out", vz_out, "Output directory")->required();

  // ablate
  auto* ab = app.add_subcommand("ablate", "Train baseline and full modes, compare R/P/F");
  std::string ab_data, ab_out;
  uint64_t ab_seed = 0;
  int ab_epochs = 20, ab_channels = 16;
  ab->add_option("--data", ab_data, "Dataset directory")->required();
  ab->add_option("--out", ab_out, "Output directory")->required();
  ab->add_option("--seed", ab_seed, "Seed shared by both modes")->capture_default_str();
  ab->add_option("--epochs", ab_epochs, "Training epochs per mode")->capture_default_str();
  ab->add_option("--channels", ab_channels, "Base feature channels")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);  // prints help, exits 0
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (synth->parsed()) return cmd_synth(synth_count, synth_size, synth_seed, synth_out);
    if (lbl->parsed()) return cmd_labelgen(lbl_images, lbl_annots, lbl_out, lbl_shrink);
    if (tr->parsed()) {
      return cmd_train(tr_data, tr_out, tr_epochs, tr_lr, tr_batch, tr_seed, tr_mode,
                       tr_channels);
    }
    if (inf->parsed()) return cmd_infer(inf_ckpt, inf_image, inf_json, inf_bin, inf_box,
                                        inf_unclip);
    if (ev->parsed()) return cmd_eval(ev_pred, ev_gt, ev_iou);
    if (vz->parsed()) return cmd_viz(vz_labels, vz_result, vz_image, vz_out);
    if (ab->parsed()) return cmd_ablate(ab_data, ab_out, ab_seed, ab_epochs, ab_channels);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace rmipn::cli
