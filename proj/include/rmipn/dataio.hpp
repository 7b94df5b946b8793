#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "rmipn/geometry.hpp"
#include "rmipn/model.hpp"

namespace rmipn::dataio {

struct Annotation {
  std::string image_id;
  std::vector<geometry::Polygon> polygons;
  std::vector<std::string> transcriptions;  // same length as polygons
};

struct ParseIssue {
  int line = 0;
  std::string message;
};

/// One instance per line: `x1,y1,x2,y2,...,xn,yn,transcription`. The point
/// list is the largest even prefix of numeric tokens; everything after it
/// (commas included) is the transcription. Malformed lines are reported via
/// `issues` and skipped; the file keeps parsing.
Annotation parse_annotation_text(const std::string& text, const std::string& image_id,
                                 std::vector<ParseIssue>* issues = nullptr);
Annotation parse_annotations(const std::filesystem::path& path,
                             std::vector<ParseIssue>* issues = nullptr);
std::string serialize_annotation(const Annotation& annotation);
void save_annotation(const std::filesystem::path& path, const Annotation& annotation);

/// Interleaved 8-bit image; channels is 3 (RGB) or 1 (gray).
struct ImageU8 {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<uint8_t> pixels;

  std::size_t index(int x, int y, int c = 0) const {
    return (static_cast<std::size_t>(y) * width + x) * channels + c;
  }
};

/// Binary PPM (P6) / PGM (P5) with maxval 255. Readers reject any trailing
/// bytes after the payload.
ImageU8 read_image(const std::filesystem::path& path);
void write_image(const std::filesystem::path& path, const ImageU8& image);

/// Float tensor conversion: bytes map to v = byte/255 in CHW planes; writing
/// maps v to clamp(round(v*255), 0, 255).
std::vector<float> image_to_float(const ImageU8& image);
ImageU8 float_to_image(const std::vector<float>& chw, int channels, int height, int width);

/// Grayscale render of one float plane with values mapped from [lo, hi].
ImageU8 plane_to_gray(const float* plane, int height, int width, float lo, float hi);

/// Bilinear resize of an interleaved 8-bit image.
ImageU8 resize_image(const ImageU8& image, int new_height, int new_width);

enum class InstanceKind { rectangle, band };

struct SynthSample {
  ImageU8 image;
  Annotation annotation;
  std::vector<InstanceKind> kinds;  // parallel to annotation.polygons
};

/// Deterministic synthetic scene: bright rotated rectangles and curved
/// quadrilateral bands on a dark textured background, with exact polygon
/// ground truth. Instances never overlap and every side is at least 12 px.
SynthSample synth_sample(uint64_t seed, int height, int width, int min_instances,
                         int max_instances);

/// Checkpoint container: magic "RMIP", version u32, a length-prefixed
/// key=value config block, tensor count u32, then per tensor the name
/// (u32 length + UTF-8), ndim u32, dims u32 each, and f32 little-endian data.
struct Checkpoint {
  model::ModelConfig config;
  std::string mode = "rmipn";
  std::vector<std::pair<std::string, autodiff::TensorPtr>> tensors;
};

void save_checkpoint(const std::filesystem::path& path, const model::ModelConfig& config,
                     const std::string& mode, const model::ParamStore& params);
/// When `expected` is given, a config mismatch is reported before any tensor
/// payload is read.
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const model::ModelConfig* expected = nullptr);
/// Copies checkpoint tensors into the store; the first name or shape mismatch
/// raises LoadError naming the tensor.
void apply_checkpoint(const Checkpoint& checkpoint, model::ParamStore& params);

/// Writes through a temporary file in the same directory, then renames.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);

}  // namespace rmipn::dataio
