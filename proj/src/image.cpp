#include "backdrop/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>

namespace backdrop {

Tensor Image::to_tensor() const { return Tensor({channels, height, width}, pixels); }

namespace {

// Bilinear sample of one channel plane; coordinates outside give `fill`.
double sample(const double* plane, std::size_t h, std::size_t w, double y, double x, double fill) {
  if (y < -1e-9 || x < -1e-9 || y > static_cast<double>(h - 1) + 1e-9 ||
      x > static_cast<double>(w - 1) + 1e-9)
    return fill;
  y = std::clamp(y, 0.0, static_cast<double>(h - 1));
  x = std::clamp(x, 0.0, static_cast<double>(w - 1));
  const auto y0 = static_cast<std::size_t>(std::floor(y));
  const auto x0 = static_cast<std::size_t>(std::floor(x));
  const std::size_t y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
  const double fy = y - static_cast<double>(y0), fx = x - static_cast<double>(x0);
  const double top = plane[y0 * w + x0] * (1 - fx) + plane[y0 * w + x1] * fx;
  const double bot = plane[y1 * w + x0] * (1 - fx) + plane[y1 * w + x1] * fx;
  return top * (1 - fy) + bot * fy;
}

double snap(double v) {
  const double r = std::round(v);
  return std::abs(v - r) < 1e-9 ? r : v;
}

}  // namespace

std::vector<double> resize_grid(const std::vector<double>& grid, std::size_t h, std::size_t w,
                                std::size_t out_h, std::size_t out_w) {
  if (grid.size() != h * w) throw std::invalid_argument("resize_grid: size mismatch");
  if (out_h == 0 || out_w == 0) throw std::invalid_argument("resize_grid: empty target");
  std::vector<double> out(out_h * out_w);
  const double sy = out_h > 1 ? static_cast<double>(h - 1) / static_cast<double>(out_h - 1) : 0.0;
  const double sx = out_w > 1 ? static_cast<double>(w - 1) / static_cast<double>(out_w - 1) : 0.0;
  for (std::size_t y = 0; y < out_h; ++y)
    for (std::size_t x = 0; x < out_w; ++x)
      out[y * out_w + x] = sample(grid.data(), h, w, static_cast<double>(y) * sy,
                                  static_cast<double>(x) * sx, 0.0);
  return out;
}

Image resize_bilinear(const Image& img, std::size_t h, std::size_t w) {
  if (img.height == h && img.width == w) return img;
  Image out(img.channels, h, w);
  for (std::size_t c = 0; c < img.channels; ++c) {
    std::vector<double> plane(img.pixels.begin() + static_cast<long>(c * img.height * img.width),
                              img.pixels.begin() + static_cast<long>((c + 1) * img.height * img.width));
    auto r = resize_grid(plane, img.height, img.width, h, w);
    std::copy(r.begin(), r.end(), out.pixels.begin() + static_cast<long>(c * h * w));
  }
  return out;
}

Image rotate(const Image& img, double degrees) {
  if (degrees == 0.0) return img;
  const double t = degrees * std::numbers::pi / 180.0;
  const double cs = std::cos(t), sn = std::sin(t);
  const double cy = (static_cast<double>(img.height) - 1) / 2.0;
  const double cx = (static_cast<double>(img.width) - 1) / 2.0;
  Image out(img.channels, img.height, img.width);
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x) {
      const double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
      const double sx = snap(dx * cs - dy * sn + cx);
      const double sy = snap(dx * sn + dy * cs + cy);
      for (std::size_t c = 0; c < img.channels; ++c)
        out.at(c, y, x) =
            sample(img.pixels.data() + c * img.height * img.width, img.height, img.width, sy, sx, 0.0);
    }
  return out;
}

Image hflip(const Image& img) {
  Image out(img.channels, img.height, img.width);
  for (std::size_t c = 0; c < img.channels; ++c)
    for (std::size_t y = 0; y < img.height; ++y)
      for (std::size_t x = 0; x < img.width; ++x) out.at(c, y, x) = img.at(c, y, img.width - 1 - x);
  return out;
}

Image crop(const Image& img, std::size_t y, std::size_t x, std::size_t h, std::size_t w) {
  if (h == 0 || w == 0 || y + h > img.height || x + w > img.width)
    throw std::invalid_argument("crop window exceeds image bounds");
  Image out(img.channels, h, w);
  for (std::size_t c = 0; c < img.channels; ++c)
    for (std::size_t yy = 0; yy < h; ++yy)
      for (std::size_t xx = 0; xx < w; ++xx) out.at(c, yy, xx) = img.at(c, y + yy, x + xx);
  return out;
}

Image invert_colors(const Image& img) {
  Image out = img;
  for (double& v : out.pixels) v = 1.0 - v;
  return out;
}

Image convert_channels(const Image& img, std::size_t channels) {
  if (img.channels == channels) return img;
  Image out(channels, img.height, img.width);
  if (img.channels == 1 && channels == 3) {
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < img.height; ++y)
        for (std::size_t x = 0; x < img.width; ++x) out.at(c, y, x) = img.at(0, y, x);
    return out;
  }
  if (img.channels == 3 && channels == 1) {
    for (std::size_t y = 0; y < img.height; ++y)
      for (std::size_t x = 0; x < img.width; ++x)
        out.at(0, y, x) =
            0.299 * img.at(0, y, x) + 0.587 * img.at(1, y, x) + 0.114 * img.at(2, y, x);
    return out;
  }
  throw std::invalid_argument("unsupported channel conversion " + std::to_string(img.channels) +
                              " -> " + std::to_string(channels));
}

void clamp01(Image& img) {
  for (double& v : img.pixels) v = std::clamp(v, 0.0, 1.0);
}

void write_pnm(const Image& img, const std::filesystem::path& path) {
  if (img.channels != 1 && img.channels != 3)
    throw std::invalid_argument("pnm output needs 1 or 3 channels");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os << (img.channels == 1 ? "P5" : "P6") << '\n' << img.width << ' ' << img.height << "\n255\n";
  std::string buf(img.height * img.width * img.channels, '\0');
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      for (std::size_t c = 0; c < img.channels; ++c) {
        const double v = std::clamp(img.at(c, y, x), 0.0, 1.0);
        buf[(y * img.width + x) * img.channels + c] =
            static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0)));
      }
  os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

namespace {
std::string next_token(std::istream& is) {
  std::string tok;
  char ch;
  while (is.get(ch)) {
    if (ch == '#') {
      std::string skip;
      std::getline(is, skip);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(ch);
  }
  return tok;
}
}  // namespace

Image read_pnm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open image " + path.string());
  const std::string magic = next_token(is);
  std::size_t channels;
  if (magic == "P5") channels = 1;
  else if (magic == "P6") channels = 3;
  else throw std::runtime_error(path.string() + ": unsupported image format '" + magic + "'");
  std::size_t w = 0, h = 0, maxval = 0;
  try {
    w = std::stoul(next_token(is));
    h = std::stoul(next_token(is));
    maxval = std::stoul(next_token(is));
  } catch (const std::exception&) {
    throw std::runtime_error(path.string() + ": malformed header");
  }
  if (w == 0 || h == 0 || maxval == 0 || maxval > 255)
    throw std::runtime_error(path.string() + ": unsupported dimensions or depth");
  std::string buf(w * h * channels, '\0');
  is.read(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (static_cast<std::size_t>(is.gcount()) != buf.size())
    throw std::runtime_error(path.string() + ": truncated pixel data");
  Image img(channels, h, w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < channels; ++c)
        img.at(c, y, x) = static_cast<unsigned char>(buf[(y * w + x) * channels + c]) /
                          static_cast<double>(maxval);
  return img;
}

}  // namespace backdrop
