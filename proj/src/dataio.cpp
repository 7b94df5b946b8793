#include "rmipn/dataio.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "rmipn/labelgen.hpp"
#include "rmipn/rng.hpp"

namespace rmipn::dataio {

namespace {

bool parse_double_token(const std::string& token, double* out) {
  const char* first = token.data();
  const char* last = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(first, last, *out);
  return ec == std::errc{} && ptr == last;
}

std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Annotation parse_annotation_text(const std::string& text, const std::string& image_id,
                                 std::vector<ParseIssue>* issues) {
  Annotation ann;
  ann.image_id = image_id;
  std::istringstream stream(text);
  std::string line;
  int line_no = 0;
  auto report = [&](const std::string& message) {
    if (issues) issues->push_back({line_no, message});
  };
  while (std::getline(stream, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;

    std::vector<std::string> tokens;
    std::size_t start = 0;
    while (true) {
      std::size_t comma = line.find(',', start);
      tokens.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }

    // Largest even prefix of numeric tokens becomes the coordinate list.
    std::vector<double> coords;
    std::size_t numeric = 0;
    double value = 0.0;
    while (numeric < tokens.size() && parse_double_token(tokens[numeric], &value)) {
      coords.push_back(value);
      ++numeric;
    }
    if (coords.size() % 2 != 0) {
      coords.pop_back();
      --numeric;
    }
    if (coords.size() < 6) {
      report("line has only " + std::to_string(coords.size() / 2) +
             " points; at least 3 are required");
      continue;
    }
    std::string transcription;
    for (std::size_t i = numeric; i < tokens.size(); ++i) {
      if (i > numeric) transcription += ',';
      transcription += tokens[i];
    }

    std::vector<geometry::Point2> points;
    points.reserve(coords.size() / 2);
    for (std::size_t i = 0; i + 1 < coords.size(); i += 2) {
      points.push_back({coords[i], coords[i + 1]});
    }
    try {
      ann.polygons.emplace_back(std::move(points));
      ann.transcriptions.push_back(std::move(transcription));
    } catch (const ValidationError& e) {
      report(e.what());
    }
  }
  return ann;
}

Annotation parse_annotations(const std::filesystem::path& path, std::vector<ParseIssue>* issues) {
  return parse_annotation_text(read_file_bytes(path), path.stem().string(), issues);
}

std::string serialize_annotation(const Annotation& annotation) {
  std::string out;
  for (std::size_t i = 0; i < annotation.polygons.size(); ++i) {
    const auto& poly = annotation.polygons[i];
    for (const auto& v : poly.vertices()) {
      out += format_double(v.x);
      out += ',';
      out += format_double(v.y);
      out += ',';
    }
    out += annotation.transcriptions[i];
    out += '\n';
  }
  return out;
}

void save_annotation(const std::filesystem::path& path, const Annotation& annotation) {
  write_file_atomic(path, serialize_annotation(annotation));
}

namespace {

// PNM header token reader; skips whitespace and '#' comments, tracking the
// byte offset for error reporting.
struct PnmCursor {
  const std::string& bytes;
  std::size_t pos = 0;

  int next_int() {
    skip_space();
    if (pos >= bytes.size() || !std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      throw FormatError("expected integer in PNM header", pos);
    }
    int v = 0;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      v = v * 10 + (bytes[pos] - '0');
      ++pos;
    }
    return v;
  }

  void skip_space() {
    while (pos < bytes.size()) {
      char ch = bytes[pos];
      if (ch == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (ch == ' ' || ch == '\t' || ch == '\r' || ch == '\n') {
        ++pos;
      } else {
        break;
      }
    }
  }
};

}  // namespace

ImageU8 read_image(const std::filesystem::path& path) {
  const std::string bytes = read_file_bytes(path);
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    throw FormatError("bad PNM magic in " + path.string(), 0);
  }
  ImageU8 img;
  img.channels = bytes[1] == '6' ? 3 : 1;
  PnmCursor cur{bytes, 2};
  img.width = cur.next_int();
  img.height = cur.next_int();
  int maxval = cur.next_int();
  if (maxval != 255) {
    throw FormatError("unsupported PNM maxval " + std::to_string(maxval), cur.pos);
  }
  if (cur.pos >= bytes.size() || !(bytes[cur.pos] == '\n' || bytes[cur.pos] == ' ' ||
                                   bytes[cur.pos] == '\t' || bytes[cur.pos] == '\r')) {
    throw FormatError("missing whitespace after PNM maxval", cur.pos);
  }
  ++cur.pos;
  const std::size_t payload =
      static_cast<std::size_t>(img.width) * img.height * img.channels;
  if (bytes.size() - cur.pos < payload) {
    throw FormatError("truncated PNM payload", bytes.size());
  }
  if (bytes.size() - cur.pos > payload) {
    throw FormatError("trailing bytes after PNM payload", cur.pos + payload);
  }
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(cur.pos), bytes.end());
  return img;
}

void write_image(const std::filesystem::path& path, const ImageU8& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw ConfigError("PNM writer supports 1 or 3 channels, got " +
                      std::to_string(image.channels));
  }
  std::string out;
  out += image.channels == 3 ? "P6\n" : "P5\n";
  out += std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(image.pixels.data()), image.pixels.size());
  write_file_atomic(path, out);
}

std::vector<float> image_to_float(const ImageU8& image) {
  const std::size_t plane = static_cast<std::size_t>(image.width) * image.height;
  std::vector<float> chw(plane * image.channels);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      for (int c = 0; c < image.channels; ++c) {
        chw[c * plane + y * image.width + x] =
            static_cast<float>(image.pixels[image.index(x, y, c)]) / 255.f;
      }
    }
  }
  return chw;
}

ImageU8 float_to_image(const std::vector<float>& chw, int channels, int height, int width) {
  ImageU8 img;
  img.width = width;
  img.height = height;
  img.channels = channels;
  img.pixels.resize(static_cast<std::size_t>(width) * height * channels);
  const std::size_t plane = static_cast<std::size_t>(width) * height;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < channels; ++c) {
        float v = chw[c * plane + static_cast<std::size_t>(y) * width + x];
        int byte = static_cast<int>(std::lround(v * 255.f));
        img.pixels[img.index(x, y, c)] = static_cast<uint8_t>(std::clamp(byte, 0, 255));
      }
    }
  }
  return img;
}

ImageU8 plane_to_gray(const float* plane, int height, int width, float lo, float hi) {
  ImageU8 img;
  img.width = width;
  img.height = height;
  img.channels = 1;
  img.pixels.resize(static_cast<std::size_t>(width) * height);
  const float range = hi - lo;
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    float v = (plane[i] - lo) / range;
    int byte = static_cast<int>(std::lround(v * 255.f));
    img.pixels[i] = static_cast<uint8_t>(std::clamp(byte, 0, 255));
  }
  return img;
}

ImageU8 resize_image(const ImageU8& image, int new_height, int new_width) {
  ImageU8 out;
  out.width = new_width;
  out.height = new_height;
  out.channels = image.channels;
  out.pixels.resize(static_cast<std::size_t>(new_width) * new_height * image.channels);
  const double sx = static_cast<double>(image.width) / new_width;
  const double sy = static_cast<double>(image.height) / new_height;
  for (int y = 0; y < new_height; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    int y0 = std::clamp(static_cast<int>(std::floor(fy)), 0, image.height - 1);
    int y1 = std::min(y0 + 1, image.height - 1);
    double wy = std::clamp(fy - y0, 0.0, 1.0);
    for (int x = 0; x < new_width; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      int x0 = std::clamp(static_cast<int>(std::floor(fx)), 0, image.width - 1);
      int x1 = std::min(x0 + 1, image.width - 1);
      double wx = std::clamp(fx - x0, 0.0, 1.0);
      for (int c = 0; c < image.channels; ++c) {
        double v00 = image.pixels[image.index(x0, y0, c)];
        double v01 = image.pixels[image.index(x1, y0, c)];
        double v10 = image.pixels[image.index(x0, y1, c)];
        double v11 = image.pixels[image.index(x1, y1, c)];
        double v = (1 - wy) * ((1 - wx) * v00 + wx * v01) + wy * ((1 - wx) * v10 + wx * v11);
        out.pixels[out.index(x, y, c)] = static_cast<uint8_t>(std::clamp(
            static_cast<int>(std::lround(v)), 0, 255));
      }
    }
  }
  return out;
}

namespace {

struct PlacedInstance {
  geometry::Polygon polygon;
  InstanceKind kind;
  geometry::BoundingBox padded;
};

bool boxes_overlap(const geometry::BoundingBox& a, const geometry::BoundingBox& b) {
  return a.min_x < b.max_x && b.min_x < a.max_x && a.min_y < b.max_y && b.min_y < a.max_y;
}

geometry::BoundingBox pad_box(geometry::BoundingBox b, double pad) {
  b.min_x -= pad;
  b.min_y -= pad;
  b.max_x += pad;
  b.max_y += pad;
  return b;
}

// Rotated rectangle with short side in [16, cap] and aspect <= 2.5; keeping
// the aspect moderate lets the shrink/unclip round trip stay tight.
geometry::Polygon make_rectangle(Rng& rng, int height, int width, bool centered) {
  const double cap = std::min(64.0, std::min(height, width) / 3.0);
  const double short_side = rng.uniform(16.0, std::max(17.0, cap * 0.7));
  const double long_side = short_side * rng.uniform(1.0, 2.5);
  const double theta = rng.uniform(0.0, 3.14159265358979323846);
  const double radius = 0.5 * std::hypot(short_side, long_side);
  double cx, cy;
  if (centered) {
    cx = width / 2.0 + rng.uniform(-4.0, 4.0);
    cy = height / 2.0 + rng.uniform(-4.0, 4.0);
  } else {
    cx = rng.uniform(radius + 4.0, width - radius - 4.0);
    cy = rng.uniform(radius + 4.0, height - radius - 4.0);
  }
  const double c = std::cos(theta), s = std::sin(theta);
  auto corner = [&](double dx, double dy) {
    return geometry::Point2{cx + dx * c - dy * s, cy + dx * s + dy * c};
  };
  const double hx = long_side / 2.0, hy = short_side / 2.0;
  return geometry::Polygon({corner(-hx, -hy), corner(hx, -hy), corner(hx, hy), corner(-hx, hy)});
}

// Curved band: a circular-arc ribbon sampled into a 16-gon. Width is at
// least 18 px and arc length stays within 2.5x the width.
geometry::Polygon make_band(Rng& rng, int height, int width) {
  const double half_width = rng.uniform(9.0, 16.0);
  const double radius = rng.uniform(40.0, 90.0);
  const double arc_len = 2.0 * half_width * rng.uniform(1.3, 2.5);
  const double span = std::min(arc_len / radius, 1.8);
  const double theta0 = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
  const double reach = radius + half_width;
  const double cx = rng.uniform(-reach, width + reach);
  const double cy = rng.uniform(-reach, height + reach);
  const int arc_points = 8;
  std::vector<geometry::Point2> pts;
  for (int i = 0; i < arc_points; ++i) {
    double t = theta0 + span * i / (arc_points - 1);
    pts.push_back({cx + (radius + half_width) * std::cos(t),
                   cy + (radius + half_width) * std::sin(t)});
  }
  for (int i = arc_points - 1; i >= 0; --i) {
    double t = theta0 + span * i / (arc_points - 1);
    pts.push_back({cx + (radius - half_width) * std::cos(t),
                   cy + (radius - half_width) * std::sin(t)});
  }
  return geometry::Polygon(std::move(pts));
}

bool fits_image(const geometry::Polygon& poly, int height, int width, double margin) {
  auto b = poly.bounds();
  return b.min_x >= margin && b.min_y >= margin && b.max_x <= width - margin &&
         b.max_y <= height - margin;
}

}  // namespace

SynthSample synth_sample(uint64_t seed, int height, int width, int min_instances,
                         int max_instances) {
  if (height % 32 != 0 || width % 32 != 0) {
    throw ConfigError("synth dims must be multiples of 32, got " + std::to_string(height) + "x" +
                      std::to_string(width));
  }
  if (min_instances < 1 || max_instances < min_instances) {
    throw ConfigError("instance count range must satisfy 1 <= min <= max");
  }
  Rng rng(seed);
  const int target = rng.uniform_int(min_instances, max_instances);

  std::vector<PlacedInstance> placed;
  for (int i = 0; i < target; ++i) {
    bool accepted = false;
    for (int attempt = 0; attempt < 100 && !accepted; ++attempt) {
      // The first instance is always a centered rectangle, so at least one
      // placement is guaranteed.
      const bool first = placed.empty();
      InstanceKind kind =
          (!first && rng.uniform() < 0.35) ? InstanceKind::band : InstanceKind::rectangle;
      try {
        geometry::Polygon poly = kind == InstanceKind::band ? make_band(rng, height, width)
                                                            : make_rectangle(rng, height, width,
                                                                             first);
        if (!fits_image(poly, height, width, 4.0)) continue;
        auto padded = pad_box(poly.bounds(), 3.0);
        bool clash = false;
        for (const auto& other : placed) {
          if (boxes_overlap(padded, other.padded)) {
            clash = true;
            break;
          }
        }
        if (clash) continue;
        placed.push_back({std::move(poly), kind, padded});
        accepted = true;
      } catch (const ValidationError&) {
        continue;
      }
    }
  }

  SynthSample sample;
  sample.image.width = width;
  sample.image.height = height;
  sample.image.channels = 3;
  sample.image.pixels.assign(static_cast<std::size_t>(width) * height * 3, 0);
  sample.annotation.image_id = "synth_" + std::to_string(seed);

  // Background: dark base with a low-frequency wave and per-pixel noise,
  // clamped to [0, 80].
  Rng noise = rng.fork();
  const double base = rng.uniform(18.0, 50.0);
  const double wave_amp = rng.uniform(6.0, 14.0);
  const double fx = rng.uniform(1.0, 3.0), fy = rng.uniform(1.0, 3.0);
  const double phase_x = rng.uniform(0.0, 6.28), phase_y = rng.uniform(0.0, 6.28);
  const std::array<double, 3> bg_tint{rng.uniform(-6.0, 6.0), rng.uniform(-6.0, 6.0),
                                      rng.uniform(-6.0, 6.0)};
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double wave = wave_amp * std::sin(fx * 6.28 * x / width + phase_x) *
                    std::sin(fy * 6.28 * y / height + phase_y);
      double n = noise.uniform(-10.0, 10.0);
      for (int c = 0; c < 3; ++c) {
        double v = base + wave + n + bg_tint[c];
        sample.image.pixels[sample.image.index(x, y, c)] =
            static_cast<uint8_t>(std::clamp(v, 0.0, 80.0));
      }
    }
  }

  // Instances: bright fill in [180, 255] with mild noise and tint.
  for (const auto& inst : placed) {
    const double fill = rng.uniform(195.0, 240.0);
    const std::array<double, 3> tint{rng.uniform(-8.0, 8.0), rng.uniform(-8.0, 8.0),
                                     rng.uniform(-8.0, 8.0)};
    auto bb = inst.polygon.bounds();
    int y0 = std::max(0, static_cast<int>(std::floor(bb.min_y)));
    int y1 = std::min(height - 1, static_cast<int>(std::ceil(bb.max_y)));
    int x0 = std::max(0, static_cast<int>(std::floor(bb.min_x)));
    int x1 = std::min(width - 1, static_cast<int>(std::ceil(bb.max_x)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        if (!geometry::contains(inst.polygon, {x + 0.5, y + 0.5})) continue;
        double n = noise.uniform(-18.0, 18.0);
        for (int c = 0; c < 3; ++c) {
          double v = fill + n + tint[c];
          sample.image.pixels[sample.image.index(x, y, c)] =
              static_cast<uint8_t>(std::clamp(v, 180.0, 255.0));
        }
      }
    }
    sample.annotation.polygons.push_back(inst.polygon);
    sample.annotation.transcriptions.push_back("text");
    sample.kinds.push_back(inst.kind);
  }
  return sample;
}

namespace {

constexpr char kCkptMagic[4] = {'R', 'M', 'I', 'P'};
constexpr uint32_t kCkptVersion = 1;

std::string config_block(const model::ModelConfig& config, const std::string& mode) {
  std::ostringstream os;
  os << "base_channels=" << config.base_channels << '\n';
  os << "height=" << config.height << '\n';
  os << "width=" << config.width << '\n';
  os << "binarize_k=" << format_double(config.binarize_k) << '\n';
  for (int i = 0; i < 5; ++i) {
    os << "alpha" << (i + 1) << "=" << format_double(config.loss_weights[i]) << '\n';
  }
  os << "strict_eq6_product=" << (config.strict_eq6_product ? 1 : 0) << '\n';
  os << "mode=" << mode << '\n';
  return os.str();
}

void parse_config_block(const std::string& block, model::ModelConfig* config,
                        std::string* mode) {
  std::istringstream is(block);
  std::string line;
  while (std::getline(is, line)) {
    auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    if (key == "base_channels") config->base_channels = std::stoi(value);
    else if (key == "height") config->height = std::stoi(value);
    else if (key == "width") config->width = std::stoi(value);
    else if (key == "binarize_k") config->binarize_k = std::stof(value);
    else if (key == "alpha1") config->loss_weights[0] = std::stof(value);
    else if (key == "alpha2") config->loss_weights[1] = std::stof(value);
    else if (key == "alpha3") config->loss_weights[2] = std::stof(value);
    else if (key == "alpha4") config->loss_weights[3] = std::stof(value);
    else if (key == "alpha5") config->loss_weights[4] = std::stof(value);
    else if (key == "strict_eq6_product") config->strict_eq6_product = value == "1";
    else if (key == "mode") *mode = value;
  }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const model::ModelConfig& config,
                     const std::string& mode, const model::ParamStore& params) {
  static_assert(std::endian::native == std::endian::little, "little-endian layout assumed");
  std::string out;
  out.append(kCkptMagic, 4);
  auto put_u32 = [&](uint32_t v) { out.append(reinterpret_cast<const char*>(&v), 4); };
  put_u32(kCkptVersion);
  const std::string block = config_block(config, mode);
  put_u32(static_cast<uint32_t>(block.size()));
  out += block;
  put_u32(static_cast<uint32_t>(params.entries().size()));
  for (const auto& entry : params.entries()) {
    put_u32(static_cast<uint32_t>(entry.name.size()));
    out += entry.name;
    put_u32(static_cast<uint32_t>(entry.tensor->shape.size()));
    for (int d : entry.tensor->shape) put_u32(static_cast<uint32_t>(d));
    out.append(reinterpret_cast<const char*>(entry.tensor->data.data()),
               entry.tensor->data.size() * sizeof(float));
  }
  write_file_atomic(path, out);
}

Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const model::ModelConfig* expected) {
  const std::string bytes = read_file_bytes(path);
  std::size_t pos = 0;
  auto need = [&](std::size_t n, const char* what) {
    if (bytes.size() - pos < n) {
      throw LoadError("truncated checkpoint reading " + std::string(what) + " at byte " +
                      std::to_string(pos) + " in " + path.string());
    }
  };
  need(4, "magic");
  if (std::memcmp(bytes.data(), kCkptMagic, 4) != 0) {
    throw LoadError("bad checkpoint magic in " + path.string());
  }
  pos = 4;
  auto get_u32 = [&](const char* what) {
    need(4, what);
    uint32_t v;
    std::memcpy(&v, bytes.data() + pos, 4);
    pos += 4;
    return v;
  };
  uint32_t version = get_u32("version");
  if (version != kCkptVersion) {
    throw LoadError("unsupported checkpoint version " + std::to_string(version));
  }
  uint32_t block_len = get_u32("config length");
  need(block_len, "config block");
  Checkpoint ckpt;
  parse_config_block(bytes.substr(pos, block_len), &ckpt.config, &ckpt.mode);
  pos += block_len;

  if (expected) {
    if (expected->base_channels != ckpt.config.base_channels) {
      throw LoadError("checkpoint config mismatch: base_channels " +
                      std::to_string(ckpt.config.base_channels) + " in file, " +
                      std::to_string(expected->base_channels) + " expected");
    }
    if (expected->height != ckpt.config.height || expected->width != ckpt.config.width) {
      throw LoadError("checkpoint config mismatch: dims " + std::to_string(ckpt.config.height) +
                      "x" + std::to_string(ckpt.config.width) + " in file");
    }
  }

  uint32_t tensor_count = get_u32("tensor count");
  for (uint32_t t = 0; t < tensor_count; ++t) {
    uint32_t name_len = get_u32("tensor name length");
    need(name_len, "tensor name");
    std::string name = bytes.substr(pos, name_len);
    pos += name_len;
    uint32_t ndim = get_u32("tensor rank");
    if (ndim == 0 || ndim > 8) {
      throw LoadError("implausible rank " + std::to_string(ndim) + " for tensor " + name);
    }
    std::vector<int> shape(ndim);
    std::size_t numel = 1;
    for (uint32_t d = 0; d < ndim; ++d) {
      shape[d] = static_cast<int>(get_u32("tensor dim"));
      if (shape[d] <= 0 || numel > (1u << 28)) {
        throw LoadError("implausible shape for tensor " + name);
      }
      numel *= static_cast<std::size_t>(shape[d]);
    }
    need(numel * sizeof(float), ("tensor data for " + name).c_str());
    std::vector<float> data(numel);
    std::memcpy(data.data(), bytes.data() + pos, numel * sizeof(float));
    pos += numel * sizeof(float);
    ckpt.tensors.emplace_back(name, autodiff::Tensor::from_data(std::move(shape),
                                                                std::move(data)));
  }
  if (pos != bytes.size()) {
    throw LoadError("trailing bytes after checkpoint tensors in " + path.string());
  }
  return ckpt;
}

void apply_checkpoint(const Checkpoint& checkpoint, model::ParamStore& params) {
  if (checkpoint.tensors.size() != params.entries().size()) {
    throw LoadError("checkpoint holds " + std::to_string(checkpoint.tensors.size()) +
                    " tensors, model expects " + std::to_string(params.entries().size()));
  }
  for (std::size_t i = 0; i < checkpoint.tensors.size(); ++i) {
    const auto& [name, tensor] = checkpoint.tensors[i];
    const auto& entry = params.entries()[i];
    if (entry.name != name) {
      throw LoadError("checkpoint tensor mismatch: '" + name + "' in file, '" + entry.name +
                      "' expected");
    }
    if (!entry.tensor->same_shape(*tensor)) {
      throw LoadError("shape mismatch for tensor '" + name + "': " + tensor->shape_str() +
                      " in file, " + entry.tensor->shape_str() + " expected");
    }
    entry.tensor->data = tensor->data;
  }
}

}  // namespace rmipn::dataio
