#include "backdrop/cam.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include <png.h>

#include "backdrop/image.hpp"
#include "backdrop/rng.hpp"

namespace backdrop {

double CamMap::mean() const {
  double s = 0.0;
  for (double v : values) s += v;
  return s / static_cast<double>(values.size());
}

CamMap compute_cam(const Tensor& features, const HeadWeights& head, std::size_t class_index) {
  if (features.rank() != 3)
    throw std::invalid_argument("compute_cam: features must be [K,h,w], got " + shape_str(features.shape));
  const std::size_t k = features.shape[0], hw = features.shape[1] * features.shape[2];
  if (k != head.features())
    throw std::invalid_argument("compute_cam: " + std::to_string(k) + " feature channels but head expects " +
                                std::to_string(head.features()));
  if (class_index >= head.outputs())
    throw std::invalid_argument("compute_cam: class " + std::to_string(class_index) +
                                " out of range for " + std::to_string(head.outputs()) + " outputs");
  CamMap cam;
  cam.class_index = class_index;
  cam.height = features.shape[1];
  cam.width = features.shape[2];
  cam.values.assign(hw, 0.0);
  for (std::size_t ch = 0; ch < k; ++ch) {
    const double w = head.w(ch, class_index);
    const double* f = features.values.data() + ch * hw;
    for (std::size_t i = 0; i < hw; ++i) cam.values[i] += w * f[i];
  }
  cam.bias = head.bias.values[class_index];
  cam.score = cam.mean() + cam.bias;
  return cam;
}

std::vector<double> upsample_cam(const CamMap& cam, std::size_t target_h, std::size_t target_w) {
  if (target_h < cam.height || target_w < cam.width)
    throw std::invalid_argument("upsample_cam: target must not be smaller than the map");
  return resize_grid(cam.values, cam.height, cam.width, target_h, target_w);
}

Factorization dff(const Tensor& features, const NmfOptions& opt, std::uint64_t seed) {
  if (features.rank() != 3)
    throw std::invalid_argument("dff: features must be [K,h,w], got " + shape_str(features.shape));
  const std::size_t k = features.shape[0], hw = features.shape[1] * features.shape[2];
  const std::size_t r = opt.rank;
  if (r < 1 || r > std::min(k, hw))
    throw std::invalid_argument("dff: rank " + std::to_string(r) + " must lie in [1, min(K, h*w)] = [1, " +
                                std::to_string(std::min(k, hw)) + "]");
  std::vector<double> a(features.values);
  for (double& v : a) v = std::max(v, 0.0);

  Factorization f;
  f.rank = r;
  f.height = features.shape[1];
  f.width = features.shape[2];
  f.basis = Tensor({k, r});
  f.loadings = Tensor({r, hw});
  Rng rng(derive_seed(seed, 0x6e6d66));
  // uniform (0,1]
  for (double& v : f.basis.values) v = 1.0 - uniform01(rng);
  for (double& v : f.loadings.values) v = 1.0 - uniform01(rng);
  auto& W = f.basis.values;
  auto& H = f.loadings.values;

  std::vector<double> wta(r * hw), wtw(r * r), aht(k * r), hht(r * r), wh(k * hw);
  auto reconstruct = [&] {
    std::fill(wh.begin(), wh.end(), 0.0);
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < r; ++j) {
        const double wij = W[i * r + j];
        for (std::size_t c = 0; c < hw; ++c) wh[i * hw + c] += wij * H[j * hw + c];
      }
  };
  for (std::size_t it = 0; it < opt.iterations; ++it) {
    // H <- H * (W^T A) / (W^T W H + eps)
    std::fill(wta.begin(), wta.end(), 0.0);
    std::fill(wtw.begin(), wtw.end(), 0.0);
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < r; ++j) {
        const double wij = W[i * r + j];
        for (std::size_t c = 0; c < hw; ++c) wta[j * hw + c] += wij * a[i * hw + c];
        for (std::size_t j2 = 0; j2 < r; ++j2) wtw[j * r + j2] += wij * W[i * r + j2];
      }
    for (std::size_t j = 0; j < r; ++j)
      for (std::size_t c = 0; c < hw; ++c) {
        double den = 0.0;
        for (std::size_t j2 = 0; j2 < r; ++j2) den += wtw[j * r + j2] * H[j2 * hw + c];
        H[j * hw + c] *= wta[j * hw + c] / (den + opt.epsilon);
      }
    // W <- W * (A H^T) / (W H H^T + eps)
    std::fill(aht.begin(), aht.end(), 0.0);
    std::fill(hht.begin(), hht.end(), 0.0);
    for (std::size_t j = 0; j < r; ++j)
      for (std::size_t c = 0; c < hw; ++c) {
        const double hjc = H[j * hw + c];
        for (std::size_t i = 0; i < k; ++i) aht[i * r + j] += a[i * hw + c] * hjc;
        for (std::size_t j2 = 0; j2 < r; ++j2) hht[j * r + j2] += hjc * H[j2 * hw + c];
      }
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < r; ++j) {
        double den = 0.0;
        for (std::size_t j2 = 0; j2 < r; ++j2) den += W[i * r + j2] * hht[j2 * r + j];
        W[i * r + j] *= aht[i * r + j] / (den + opt.epsilon);
      }
    reconstruct();
    double err = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) err += (a[i] - wh[i]) * (a[i] - wh[i]);
    f.error_trace.push_back(std::sqrt(err));
  }
  return f;
}

std::size_t argmax(const std::vector<double>& v, std::size_t limit) {
  limit = std::min(limit, v.size());
  if (limit == 0) throw std::invalid_argument("argmax over an empty range");
  std::size_t best = 0;
  for (std::size_t i = 1; i < limit; ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

DffResult coverage(const Factorization& factors, const HeadWeights& head, std::size_t target,
                   bool mask_background) {
  const std::size_t k = factors.basis.shape.at(0), r = factors.rank;
  const std::size_t hw = factors.loadings.shape.at(1);
  if (k != head.features())
    throw std::invalid_argument("coverage: factorization has " + std::to_string(k) +
                                " feature rows, head expects " + std::to_string(head.features()));
  const std::size_t n_out = head.outputs();
  const std::size_t limit = mask_background && n_out > 1 ? n_out - 1 : n_out;

  DffResult res;
  res.factors = factors;
  res.concept_class.resize(r);
  for (std::size_t j = 0; j < r; ++j) {
    std::vector<double> score(n_out, 0.0);
    for (std::size_t c = 0; c < n_out; ++c)
      for (std::size_t i = 0; i < k; ++i) score[c] += head.w(i, c) * factors.basis.values[i * r + j];
    res.concept_class[j] = argmax(score, limit);
  }
  res.cell_assignment.resize(hw);
  std::size_t hits = 0;
  std::vector<double> col(r);
  for (std::size_t cell = 0; cell < hw; ++cell) {
    for (std::size_t j = 0; j < r; ++j) col[j] = factors.loadings.values[j * hw + cell];
    res.cell_assignment[cell] = argmax(col, r);
    hits += res.concept_class[res.cell_assignment[cell]] == target ? 1 : 0;
  }
  res.coverage = static_cast<double>(hits) / static_cast<double>(hw);
  return res;
}

namespace {
std::pair<double, double> min_max(const std::vector<double>& g) {
  auto [lo, hi] = std::minmax_element(g.begin(), g.end());
  return {*lo, *hi};
}

unsigned char normalized_byte(double v, double lo, double hi) {
  if (!(hi > lo)) return 0;
  return static_cast<unsigned char>(std::lround((v - lo) / (hi - lo) * 255.0));
}
}  // namespace

void write_heatmap_pgm(const std::vector<double>& grid, std::size_t h, std::size_t w,
                       const std::filesystem::path& path) {
  if (grid.size() != h * w || grid.empty()) throw std::invalid_argument("heatmap: grid size mismatch");
  const auto [lo, hi] = min_max(grid);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  char comment[128];
  std::snprintf(comment, sizeof comment, "# normalization: per-map min-max, min=%.17g max=%.17g", lo, hi);
  os << "P5\n" << comment << '\n' << w << ' ' << h << "\n255\n";
  std::string buf(h * w, '\0');
  for (std::size_t i = 0; i < grid.size(); ++i) buf[i] = static_cast<char>(normalized_byte(grid[i], lo, hi));
  os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

void write_heatmap_png(const std::vector<double>& grid, std::size_t h, std::size_t w,
                       const std::filesystem::path& path) {
  if (grid.size() != h * w || grid.empty()) throw std::invalid_argument("heatmap: grid size mismatch");
  const auto [lo, hi] = min_max(grid);
  // blue -> cyan -> yellow -> red
  static constexpr double kStops[4][3] = {{0, 0, 255}, {0, 255, 255}, {255, 255, 0}, {255, 0, 0}};
  std::vector<unsigned char> rgb(h * w * 3);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double t = normalized_byte(grid[i], lo, hi) / 255.0 * 3.0;
    const auto s = std::min<std::size_t>(2, static_cast<std::size_t>(t));
    const double f = t - static_cast<double>(s);
    for (int c = 0; c < 3; ++c)
      rgb[i * 3 + c] = static_cast<unsigned char>(std::lround(kStops[s][c] * (1 - f) + kStops[s + 1][c] * f));
  }
  FILE* fp = std::fopen(path.string().c_str(), "wb");
  if (!fp) throw std::runtime_error("cannot open " + path.string() + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw std::runtime_error("libpng failed writing " + path.string());
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t y = 0; y < h; ++y) png_write_row(png, rgb.data() + y * w * 3);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

}  // namespace backdrop
