#include "backdrop/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "backdrop/rng.hpp"

namespace backdrop {

namespace {

constexpr std::uint64_t kTrainStream = 0x747261696e;
constexpr std::uint64_t kTestStream = 0x74657374;
constexpr std::uint64_t kPoolStream = 0x706f6f6c;

const std::vector<std::string> kShapes = {"disk", "cross", "bar", "ring", "square", "triangle"};

bool inside(const std::string& shape, double u, double v) {
  const double d = std::hypot(u, v);
  if (shape == "disk") return d <= 1.0;
  if (shape == "ring") return d <= 1.0 && d >= 0.55;
  if (shape == "cross")
    return (std::abs(u) <= 0.3 && std::abs(v) <= 1.0) || (std::abs(v) <= 0.3 && std::abs(u) <= 1.0);
  if (shape == "bar") return std::abs(u) <= 1.0 && std::abs(v) <= 0.3;
  if (shape == "square") return std::abs(u) <= 0.75 && std::abs(v) <= 0.75;
  if (shape == "triangle") return v >= -0.8 && v <= 0.8 && std::abs(u) <= 0.9 * (v + 0.8) / 1.6;
  throw std::invalid_argument("unknown shape '" + shape + "'");
}

}  // namespace

std::vector<std::string> available_shapes() { return kShapes; }

void ConfoundSpec::validate() const {
  if (num_classes < 1) throw std::invalid_argument("confound: num_classes must be >= 1");
  if (num_textures < 1) throw std::invalid_argument("confound: num_textures must be >= 1");
  if (rho_train < 0 || rho_train > 1 || rho_test < 0 || rho_test > 1)
    throw std::invalid_argument("confound: rho values must lie in [0,1]");
  if (!shapes.empty() && shapes.size() != num_classes)
    throw std::invalid_argument("confound: need one shape per class");
  if (shapes.empty() && num_classes > kShapes.size())
    throw std::invalid_argument("confound: more classes than built-in shapes");
  for (const auto& s : shapes)
    if (std::find(kShapes.begin(), kShapes.end(), s) == kShapes.end())
      throw std::invalid_argument("confound: unknown shape '" + s + "'");
  if (resolution < 4) throw std::invalid_argument("confound: resolution too small");
  if (channels != 1 && channels != 3) throw std::invalid_argument("confound: channels must be 1 or 3");
  if (noise < 0) throw std::invalid_argument("confound: noise must be nonnegative");
  if (shape_scale_min <= 0 || shape_scale_max < shape_scale_min || shape_scale_max > 0.5)
    throw std::invalid_argument("confound: shape scale range must satisfy 0 < min <= max <= 0.5");
}

std::vector<double> shape_mask(const std::string& shape, std::size_t size, double cy, double cx,
                               double radius, double angle) {
  constexpr int kSub = 4;
  std::vector<double> m(size * size, 0.0);
  const double cs = std::cos(angle), sn = std::sin(angle);
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) {
      int hits = 0;
      for (int sy = 0; sy < kSub; ++sy)
        for (int sx = 0; sx < kSub; ++sx) {
          const double py = static_cast<double>(y) + (sy + 0.5) / kSub - cy;
          const double px = static_cast<double>(x) + (sx + 0.5) / kSub - cx;
          const double u = (px * cs + py * sn) / radius;
          const double v = (-px * sn + py * cs) / radius;
          hits += inside(shape, u, v) ? 1 : 0;
        }
      m[y * size + x] = hits / static_cast<double>(kSub * kSub);
    }
  return m;
}

std::vector<double> texture_pattern(std::size_t texture, std::size_t size, double phase_y,
                                    double phase_x) {
  const std::size_t family = texture % 4;
  const double period = 4.0 + 2.0 * static_cast<double>(texture / 4);
  const double k = 2.0 * std::numbers::pi / period;
  std::vector<double> p(size * size);
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) {
      const double fy = static_cast<double>(y) + phase_y, fx = static_cast<double>(x) + phase_x;
      double v = 0.0;
      switch (family) {
        case 0: v = std::sin(k * fy); break;
        case 1: v = std::sin(k * fx); break;
        case 2: v = std::sin(k * fy) * std::sin(k * fx) * 1.6; break;
        default: v = std::sin(k * (fx + fy) / std::numbers::sqrt2); break;
      }
      p[y * size + x] = std::clamp(0.5 + 0.5 * v, 0.0, 1.0);
    }
  return p;
}

namespace {

struct Rendered {
  Image image;
  std::size_t foreground_pixels = 0;
};

Rendered render(const ConfoundSpec& spec, const std::string* shape, std::size_t texture, Rng& rng) {
  const std::size_t n = spec.resolution;
  const double period = 4.0 + 2.0 * static_cast<double>(texture / 4);
  const double py = uniform01(rng) * period, px = uniform01(rng) * period;
  const auto tex = texture_pattern(texture, n, py, px);
  const double base = 0.15;
  std::vector<double> gray(n * n);
  for (std::size_t i = 0; i < n * n; ++i) gray[i] = base + spec.texture_contrast * tex[i];

  std::size_t fg = 0;
  if (shape) {
    const double side = static_cast<double>(n);
    const double r = side * std::uniform_real_distribution<double>(spec.shape_scale_min,
                                                                   spec.shape_scale_max)(rng);
    const double margin = std::min(r, side / 2.0);
    const double cy = std::uniform_real_distribution<double>(margin, side - margin)(rng);
    const double cx = std::uniform_real_distribution<double>(margin, side - margin)(rng);
    const double ang = uniform01(rng) * std::numbers::pi;
    const auto mask = shape_mask(*shape, n, cy, cx, r, ang);
    for (std::size_t i = 0; i < n * n; ++i) {
      gray[i] = mask[i] * spec.foreground_level + (1.0 - mask[i]) * gray[i];
      fg += mask[i] > 0.0 ? 1 : 0;
    }
  }
  Image img(spec.channels, n, n);
  // Colour runs get a per-texture tint so hue is another available shortcut.
  const double tint[3] = {1.0 - 0.15 * static_cast<double>(texture % 3),
                          0.85 + 0.15 * static_cast<double>(texture % 2), 1.0};
  std::uniform_real_distribution<double> nd(-spec.noise, spec.noise);
  for (std::size_t c = 0; c < spec.channels; ++c)
    for (std::size_t i = 0; i < n * n; ++i) {
      const double t = spec.channels == 3 ? tint[c] : 1.0;
      const double v = gray[i] * t + (spec.noise > 0 ? nd(rng) : 0.0);
      img.pixels[c * n * n + i] = std::clamp(v, 0.0, 1.0);
    }
  return {std::move(img), fg};
}

std::size_t draw_texture(std::size_t label, double rho, std::size_t num_textures, Rng& rng) {
  if (uniform01(rng) < rho) return label % num_textures;
  return std::uniform_int_distribution<std::size_t>(0, num_textures - 1)(rng);
}

}  // namespace

ConfoundBundle generate_confounded(const ConfoundSpec& spec_in, std::uint64_t seed) {
  ConfoundSpec spec = spec_in;
  spec.validate();
  if (spec.shapes.empty()) spec.shapes.assign(kShapes.begin(), kShapes.begin() + static_cast<long>(spec.num_classes));

  ConfoundBundle b;
  auto make_split = [&](std::size_t count, double rho, std::uint64_t stream, Dataset& out,
                        std::vector<std::size_t>& textures, const char* tag) {
    out.class_names = spec.shapes;
    out.items.resize(count);
    textures.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
      Rng rng(derive_seed(seed, stream, i));
      const std::size_t label = i % spec.num_classes;
      const std::size_t tex = draw_texture(label, rho, spec.num_textures, rng);
      auto r = render(spec, &spec.shapes[label], tex, rng);
      auto& it = out.items[i];
      it.image = std::move(r.image);
      it.label = static_cast<int>(label);
      it.source = std::string("synth:") + tag + ":" + std::to_string(i);
      it.source_labels = {spec.shapes[label], "texture" + std::to_string(tex)};
      textures[i] = tex;
    }
  };
  make_split(spec.train_count, spec.rho_train, kTrainStream, b.train, b.train_textures, "train");
  make_split(spec.test_count, spec.rho_test, kTestStream, b.test, b.test_textures, "test");

  b.background_pool.class_names = spec.shapes;
  b.background_pool.has_background = spec.background_count > 0;
  b.background_pool.items.resize(spec.background_count);
  b.pool_textures.resize(spec.background_count);
  b.pool_foreground_pixels.resize(spec.background_count);
  for (std::size_t i = 0; i < spec.background_count; ++i) {
    Rng rng(derive_seed(seed, kPoolStream, i));
    const std::size_t tex = std::uniform_int_distribution<std::size_t>(0, spec.num_textures - 1)(rng);
    auto r = render(spec, nullptr, tex, rng);
    auto& it = b.background_pool.items[i];
    it.image = std::move(r.image);
    it.label = kBackgroundLabel;
    it.source = "synth:pool:" + std::to_string(i);
    it.source_labels = {"texture" + std::to_string(tex)};
    b.pool_textures[i] = tex;
    b.pool_foreground_pixels[i] = r.foreground_pixels;
  }
  return b;
}

}  // namespace backdrop
