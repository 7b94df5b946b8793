#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "rmipn/dataio.hpp"
#include "rmipn/evalkit.hpp"
#include "rmipn/labelgen.hpp"

using namespace rmipn;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) {
  return fs::temp_directory_path() / ("rmipn_dataio_" + name);
}

void write_bytes(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_SUITE("dataio") {

TEST_CASE("annotation line parses points and transcription") {
  auto ann = dataio::parse_annotation_text("0,0,10,0,10,10,0,10,hello\n", "img");
  REQUIRE(ann.polygons.size() == 1);
  CHECK(ann.polygons[0].size() == 4);
  CHECK(ann.polygons[0].area() == doctest::Approx(100.0));
  CHECK(ann.transcriptions[0] == "hello");
}

TEST_CASE("two-point lines are rejected with a line number") {
  std::vector<dataio::ParseIssue> issues;
  auto ann = dataio::parse_annotation_text("0,0,10,0,word\n", "img", &issues);
  CHECK(ann.polygons.empty());
  REQUIRE(issues.size() == 1);
  CHECK(issues[0].line == 1);
}

TEST_CASE("commas in the transcription survive") {
  auto ann =
      dataio::parse_annotation_text("0,0,10,0,10,10,0,10,one, two, three\n", "img");
  REQUIRE(ann.transcriptions.size() == 1);
  CHECK(ann.transcriptions[0] == "one, two, three");
}

TEST_CASE("odd trailing numeric token becomes the transcription") {
  auto ann = dataio::parse_annotation_text("0,0,10,0,10,10,5\n", "img");
  REQUIRE(ann.polygons.size() == 1);
  CHECK(ann.polygons[0].size() == 3);
  CHECK(ann.transcriptions[0] == "5");
}

TEST_CASE("malformed lines do not stop the file") {
  std::vector<dataio::ParseIssue> issues;
  auto ann = dataio::parse_annotation_text(
      "0,0,10,0,10,10,0,10,ok\n"
      "0,0,bad\n"
      "20,20,30,20,30,30,20,30,also ok\n",
      "img", &issues);
  CHECK(ann.polygons.size() == 2);
  CHECK(issues.size() == 1);
  CHECK(issues[0].line == 2);
}

TEST_CASE("parse of serialize is the identity") {
  auto ann = dataio::parse_annotation_text(
      "0.5,0.25,10,0,10.75,10,0,10,word one\n12,12,20,12,16,18,x,y\n", "img");
  REQUIRE(ann.polygons.size() == 2);
  std::string text = dataio::serialize_annotation(ann);
  auto again = dataio::parse_annotation_text(text, "img");
  REQUIRE(again.polygons.size() == ann.polygons.size());
  for (std::size_t i = 0; i < ann.polygons.size(); ++i) {
    CHECK(again.transcriptions[i] == ann.transcriptions[i]);
    REQUIRE(again.polygons[i].size() == ann.polygons[i].size());
    for (std::size_t j = 0; j < ann.polygons[i].size(); ++j) {
      CHECK(again.polygons[i].vertices()[j] == ann.polygons[i].vertices()[j]);
    }
  }
  CHECK(dataio::serialize_annotation(again) == text);
}

TEST_CASE("ppm round trip is byte exact") {
  Rng rng(5);
  dataio::ImageU8 img;
  img.width = 13;
  img.height = 7;
  img.channels = 3;
  img.pixels.resize(13 * 7 * 3);
  for (auto& b : img.pixels) b = static_cast<uint8_t>(rng.next_u64() & 0xff);
  auto path = temp_path("roundtrip.ppm");
  dataio::write_image(path, img);
  auto back = dataio::read_image(path);
  CHECK(back.width == img.width);
  CHECK(back.height == img.height);
  CHECK(back.channels == 3);
  CHECK(back.pixels == img.pixels);
  fs::remove(path);
}

TEST_CASE("pnm reader rejects bad maxval, truncation, and trailing bytes") {
  auto path = temp_path("bad.ppm");
  write_bytes(path, "P6\n2 2\n127\n0123456789ab");
  CHECK_THROWS_AS(dataio::read_image(path), FormatError);
  write_bytes(path, "P6\n2 2\n255\n0123");  // 12 bytes needed
  CHECK_THROWS_AS(dataio::read_image(path), FormatError);
  write_bytes(path, "P6\n2 2\n255\n0123456789abXX");
  CHECK_THROWS_AS(dataio::read_image(path), FormatError);
  write_bytes(path, "Q6\n2 2\n255\n0123456789ab");
  CHECK_THROWS_AS(dataio::read_image(path), FormatError);
  // comments in the header are fine
  write_bytes(path, "P5\n# comment\n2 2\n255\n0123");
  auto img = dataio::read_image(path);
  CHECK(img.channels == 1);
  CHECK(img.pixels.size() == 4);
  fs::remove(path);
}

TEST_CASE("float conversion maps bytes to [0,1] planes") {
  dataio::ImageU8 img;
  img.width = 2;
  img.height = 1;
  img.channels = 3;
  img.pixels = {0, 128, 255, 51, 102, 153};
  auto chw = dataio::image_to_float(img);
  CHECK(chw[0] == doctest::Approx(0.f));          // R plane, pixel 0
  CHECK(chw[1] == doctest::Approx(51.f / 255));   // R plane, pixel 1
  CHECK(chw[2] == doctest::Approx(128.f / 255));  // G plane, pixel 0
  auto back = dataio::float_to_image(chw, 3, 1, 2);
  CHECK(back.pixels == img.pixels);
}

TEST_CASE("gray render of a distance map peaks at 255") {
  geometry::Polygon square({{0, 0}, {10, 0}, {10, 10}, {0, 10}});
  auto dist = labelgen::render_distance({square}, 12, 12);
  auto gray = dataio::plane_to_gray(dist.data(), 12, 12, 0.f, 1.f);
  uint8_t peak = 0;
  for (uint8_t v : gray.pixels) peak = std::max(peak, v);
  CHECK(peak == 255);
  CHECK(gray.pixels[5 * 12 + 5] == 255);
}

TEST_CASE("synthetic samples are deterministic in the seed") {
  auto a = dataio::synth_sample(7, 128, 128, 1, 4);
  auto b = dataio::synth_sample(7, 128, 128, 1, 4);
  CHECK(a.image.pixels == b.image.pixels);
  REQUIRE(a.annotation.polygons.size() == b.annotation.polygons.size());
  for (std::size_t i = 0; i < a.annotation.polygons.size(); ++i) {
    CHECK(a.annotation.polygons[i].vertices() == b.annotation.polygons[i].vertices());
  }
  auto c = dataio::synth_sample(8, 128, 128, 1, 4);
  CHECK(a.image.pixels != c.image.pixels);
}

TEST_CASE("synthetic instances never overlap and keep a minimum side") {
  for (uint64_t seed = 0; seed < 100; ++seed) {
    auto sample = dataio::synth_sample(seed, 128, 128, 1, 4);
    REQUIRE(sample.annotation.polygons.size() >= 1);
    const auto& polys = sample.annotation.polygons;
    for (std::size_t i = 0; i < polys.size(); ++i) {
      for (std::size_t j = i + 1; j < polys.size(); ++j) {
        CHECK(evalkit::polygon_iou(polys[i], polys[j]) == 0.0);
      }
      // narrow dimension proxy 2A/L stays comfortably above half the 12 px floor
      double thickness = 2.0 * polys[i].area() / polys[i].perimeter();
      CHECK(thickness >= 6.0);
      for (std::size_t v = 0; v < polys[i].size(); ++v) {
        CHECK(polys[i].vertices()[v].x >= 0);
        CHECK(polys[i].vertices()[v].y >= 0);
        CHECK(polys[i].vertices()[v].x <= 128);
        CHECK(polys[i].vertices()[v].y <= 128);
      }
    }
  }
}

TEST_CASE("synthetic ground truth is pixel-consistent with the renders") {
  for (uint64_t seed : {1u, 9u, 23u}) {
    auto sample = dataio::synth_sample(seed, 160, 160, 2, 4);
    auto fg = labelgen::render_foreground(sample.annotation.polygons, 160, 160);
    std::size_t bright_in_boxes = 0, covered = 0;
    for (const auto& poly : sample.annotation.polygons) {
      auto bb = poly.bounds();
      for (int y = std::max(0, (int)bb.min_y); y <= std::min(159, (int)bb.max_y); ++y) {
        for (int x = std::max(0, (int)bb.min_x); x <= std::min(159, (int)bb.max_x); ++x) {
          auto lum = sample.image.pixels[sample.image.index(x, y, 1)];
          if (lum > 140) {
            ++bright_in_boxes;
            if (fg[y * 160 + x] == 1.f) ++covered;
          }
        }
      }
    }
    REQUIRE(bright_in_boxes > 0);
    CHECK(static_cast<double>(covered) / bright_in_boxes >= 0.95);
  }
}

TEST_CASE("checkpoint round trip is bit exact") {
  model::ModelConfig mc;
  mc.base_channels = 8;
  mc.height = 64;
  mc.width = 64;
  model::RmipnModel net(mc, 42);
  auto path = temp_path("ckpt.rmip");
  dataio::save_checkpoint(path, mc, "rmipn", net.params());

  auto ckpt = dataio::load_checkpoint(path);
  CHECK(ckpt.config.base_channels == 8);
  CHECK(ckpt.mode == "rmipn");
  REQUIRE(ckpt.tensors.size() == net.params().entries().size());
  for (std::size_t i = 0; i < ckpt.tensors.size(); ++i) {
    CHECK(ckpt.tensors[i].first == net.params().entries()[i].name);
    CHECK(ckpt.tensors[i].second->data == net.params().entries()[i].tensor->data);
  }

  model::RmipnModel other(mc, 43);  // different init
  dataio::apply_checkpoint(ckpt, other.params());
  for (std::size_t i = 0; i < ckpt.tensors.size(); ++i) {
    CHECK(other.params().entries()[i].tensor->data == net.params().entries()[i].tensor->data);
  }
  fs::remove(path);
}

TEST_CASE("config echo mismatch fails before any tensor is read") {
  model::ModelConfig mc;
  mc.base_channels = 8;
  mc.height = 64;
  mc.width = 64;
  model::RmipnModel net(mc, 1);
  auto path = temp_path("ckpt_c8.rmip");
  dataio::save_checkpoint(path, mc, "rmipn", net.params());

  model::ModelConfig expected = mc;
  expected.base_channels = 32;
  CHECK_THROWS_WITH_AS(dataio::load_checkpoint(path, &expected),
                       doctest::Contains("base_channels"), LoadError);
  fs::remove(path);
}

TEST_CASE("tampered dim field names the tensor") {
  model::ModelConfig mc;
  mc.base_channels = 8;
  mc.height = 64;
  mc.width = 64;
  model::RmipnModel net(mc, 1);
  auto path = temp_path("ckpt_tamper.rmip");
  dataio::save_checkpoint(path, mc, "rmipn", net.params());

  // swap the first tensor's first two dims (layout: magic, version, config
  // block, count, then name-len, name, ndim, dims...); the element count is
  // unchanged so the container still parses and the shape check must fire
  std::string bytes = read_bytes(path);
  uint32_t block_len;
  std::memcpy(&block_len, bytes.data() + 8, 4);
  std::size_t pos = 12 + block_len + 4;
  uint32_t name_len;
  std::memcpy(&name_len, bytes.data() + pos, 4);
  std::string name = bytes.substr(pos + 4, name_len);
  std::size_t dim_pos = pos + 4 + name_len + 4;
  uint32_t d0, d1;
  std::memcpy(&d0, bytes.data() + dim_pos, 4);
  std::memcpy(&d1, bytes.data() + dim_pos + 4, 4);
  REQUIRE(d0 != d1);
  std::memcpy(bytes.data() + dim_pos, &d1, 4);
  std::memcpy(bytes.data() + dim_pos + 4, &d0, 4);
  write_bytes(path, bytes);

  auto ckpt = dataio::load_checkpoint(path);
  try {
    dataio::apply_checkpoint(ckpt, net.params());
    FAIL("expected LoadError");
  } catch (const LoadError& e) {
    CHECK(std::string(e.what()).find(name) != std::string::npos);
  }
  fs::remove(path);
}

TEST_CASE("truncated checkpoints are rejected") {
  model::ModelConfig mc;
  mc.base_channels = 8;
  mc.height = 64;
  mc.width = 64;
  model::RmipnModel net(mc, 1);
  auto path = temp_path("ckpt_trunc.rmip");
  dataio::save_checkpoint(path, mc, "rmipn", net.params());
  std::string bytes = read_bytes(path);
  write_bytes(path, bytes.substr(0, bytes.size() / 2));
  CHECK_THROWS_AS(dataio::load_checkpoint(path), LoadError);
  write_bytes(path, bytes + "zz");
  CHECK_THROWS_AS(dataio::load_checkpoint(path), LoadError);
  fs::remove(path);
}

}  // TEST_SUITE
