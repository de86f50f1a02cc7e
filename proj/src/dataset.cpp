#include "backdrop/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "backdrop/rng.hpp"

namespace backdrop {

namespace fs = std::filesystem;

std::size_t Dataset::class_index(const LabeledImage& item) const {
  if (item.label == kBackgroundLabel) return class_names.size();
  return static_cast<std::size_t>(item.label);
}

void Dataset::validate() const {
  bool saw_background = false;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const int l = items[i].label;
    if (l == kBackgroundLabel) {
      saw_background = true;
      continue;
    }
    if (l < 0 || static_cast<std::size_t>(l) >= class_names.size())
      throw std::invalid_argument("dataset item " + std::to_string(i) + " has label " +
                                  std::to_string(l) + " outside [0, " +
                                  std::to_string(class_names.size()) + ")");
  }
  if (saw_background != has_background)
    throw std::invalid_argument(has_background ? "dataset flagged has_background has no background items"
                                               : "dataset has background items but is not flagged");
}

// ---------------------------------------------------------------- IDX

namespace {

constexpr std::uint32_t kIdxImages = 0x00000803;
constexpr std::uint32_t kIdxLabels = 0x00000801;

std::vector<unsigned char> slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + p.string());
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& buf, std::size_t off, const fs::path& p,
                        const char* what) {
  if (off + 4 > buf.size())
    throw std::runtime_error(p.string() + ": truncated at offset " + std::to_string(off) +
                             " reading " + what + " (file is " + std::to_string(buf.size()) +
                             " bytes)");
  return (std::uint32_t{buf[off]} << 24) | (std::uint32_t{buf[off + 1]} << 16) |
         (std::uint32_t{buf[off + 2]} << 8) | std::uint32_t{buf[off + 3]};
}

std::string hex32(std::uint32_t v) {
  char s[11];
  std::snprintf(s, sizeof s, "0x%08X", v);
  return s;
}

void put_be32(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace

Dataset load_idx(const fs::path& images, const fs::path& labels) {
  const auto ib = slurp(images);
  const auto lb = slurp(labels);
  const auto im = read_be32(ib, 0, images, "magic");
  if (im != kIdxImages)
    throw std::runtime_error(images.string() + ": bad magic " + hex32(im) + " at offset 0, expected " +
                             hex32(kIdxImages));
  const auto lm = read_be32(lb, 0, labels, "magic");
  if (lm != kIdxLabels)
    throw std::runtime_error(labels.string() + ": bad magic " + hex32(lm) + " at offset 0, expected " +
                             hex32(kIdxLabels));
  const std::size_t n = read_be32(ib, 4, images, "image count");
  const std::size_t h = read_be32(ib, 8, images, "rows");
  const std::size_t w = read_be32(ib, 12, images, "cols");
  const std::size_t nl = read_be32(lb, 4, labels, "label count");
  if (n != nl)
    throw std::runtime_error("idx count mismatch: " + images.string() + " has " + std::to_string(n) +
                             " images, " + labels.string() + " has " + std::to_string(nl) + " labels");
  if (h == 0 || w == 0) throw std::runtime_error(images.string() + ": zero image extent");
  const std::size_t need = 16 + n * h * w;
  if (ib.size() < need)
    throw std::runtime_error(images.string() + ": truncated at offset " + std::to_string(ib.size()) +
                             ", expected " + std::to_string(need) + " bytes");
  if (lb.size() < 8 + n)
    throw std::runtime_error(labels.string() + ": truncated at offset " + std::to_string(lb.size()) +
                             ", expected " + std::to_string(8 + n) + " bytes");
  Dataset ds;
  int max_label = -1;
  ds.items.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    LabeledImage li;
    li.image = Image(1, h, w);
    const unsigned char* px = ib.data() + 16 + i * h * w;
    for (std::size_t j = 0; j < h * w; ++j) li.image.pixels[j] = px[j] / 255.0;
    li.label = lb[8 + i];
    li.source = images.filename().string() + ":" + std::to_string(i);
    max_label = std::max(max_label, li.label);
    ds.items.push_back(std::move(li));
  }
  for (int c = 0; c <= max_label; ++c) ds.class_names.push_back(std::to_string(c));
  return ds;
}

void write_idx(const Dataset& ds, const fs::path& images, const fs::path& labels) {
  if (ds.empty()) throw std::invalid_argument("write_idx: empty dataset");
  const auto& first = ds.items.front().image;
  if (first.channels != 1) throw std::invalid_argument("write_idx: IDX images must be single-channel");
  std::ofstream io(images, std::ios::binary), lo(labels, std::ios::binary);
  if (!io || !lo) throw std::runtime_error("write_idx: cannot open output files");
  put_be32(io, kIdxImages);
  put_be32(io, static_cast<std::uint32_t>(ds.size()));
  put_be32(io, static_cast<std::uint32_t>(first.height));
  put_be32(io, static_cast<std::uint32_t>(first.width));
  put_be32(lo, kIdxLabels);
  put_be32(lo, static_cast<std::uint32_t>(ds.size()));
  std::string buf(first.height * first.width, '\0');
  for (const auto& it : ds.items) {
    if (!it.image.same_shape(first)) throw std::invalid_argument("write_idx: mixed image shapes");
    if (it.label < 0 || it.label > 255) throw std::invalid_argument("write_idx: label not a byte");
    for (std::size_t j = 0; j < buf.size(); ++j)
      buf[j] = static_cast<char>(
          static_cast<unsigned char>(std::lround(std::clamp(it.image.pixels[j], 0.0, 1.0) * 255.0)));
    io.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    const char l = static_cast<char>(static_cast<unsigned char>(it.label));
    lo.write(&l, 1);
  }
}

// ---------------------------------------------------------------- manifest

namespace {

std::string join(const std::vector<std::string>& v, char sep) {
  if (v.empty()) return "-";
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s.push_back(sep);
    s += v[i];
  }
  return s;
}

std::vector<std::string> split_field(const std::string& s, char sep) {
  std::vector<std::string> out;
  if (s == "-" || s.empty()) return out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, sep)) out.push_back(tok);
  return out;
}

}  // namespace

void write_dataset_dir(const Dataset& ds, const fs::path& dir) {
  fs::create_directories(dir / "images");
  std::ofstream mf(dir / "manifest.tsv");
  if (!mf) throw std::runtime_error("cannot write manifest in " + dir.string());
  mf << "# backdrop manifest v1\n";
  mf << "# fields: path\tlabel\tclass\tsource\tsource_labels\ttransforms\n";
  mf << "# classes:";
  for (const auto& c : ds.class_names) mf << '\t' << c;
  mf << '\n';
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& it = ds.items[i];
    char name[32];
    std::snprintf(name, sizeof name, "%06zu.%s", i, it.image.channels == 1 ? "pgm" : "ppm");
    const fs::path rel = fs::path("images") / name;
    write_pnm(it.image, dir / rel);
    const bool bg = it.label == kBackgroundLabel;
    mf << rel.generic_string() << '\t' << (bg ? std::string("background") : std::to_string(it.label))
       << '\t' << (bg ? std::string("background") : ds.class_names.at(static_cast<std::size_t>(it.label)))
       << '\t' << (it.source.empty() ? "-" : it.source) << '\t' << join(it.source_labels, ',')
       << '\t' << join(it.transforms, '|') << '\n';
  }
}

Dataset read_dataset_dir(const fs::path& dir) {
  std::ifstream mf(dir / "manifest.tsv");
  if (!mf) throw std::runtime_error("no manifest.tsv in " + dir.string());
  Dataset ds;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(mf, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line.rfind("# classes:", 0) == 0) {
      auto names = split_field(line.substr(10), '\t');
      names.erase(std::remove(names.begin(), names.end(), std::string()), names.end());
      ds.class_names = names;
      continue;
    }
    if (line[0] == '#') continue;
    auto f = split_field(line, '\t');
    if (f.size() != 6)
      throw std::runtime_error(dir.string() + "/manifest.tsv:" + std::to_string(lineno) +
                               ": expected 6 fields, got " + std::to_string(f.size()));
    LabeledImage li;
    li.image = read_pnm(dir / f[0]);
    if (f[1] == "background") {
      li.label = kBackgroundLabel;
      ds.has_background = true;
    } else {
      li.label = std::stoi(f[1]);
    }
    li.source = f[3] == "-" ? "" : f[3];
    li.source_labels = split_field(f[4], ',');
    li.transforms = split_field(f[5], '|');
    ds.items.push_back(std::move(li));
  }
  ds.validate();
  return ds;
}

// ---------------------------------------------------------------- splits

std::uint64_t Split::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](std::uint64_t v) {
    for (int b = 0; b < 8; ++b) {
      h ^= (v >> (8 * b)) & 0xff;
      h *= 0x100000001b3ULL;
    }
  };
  for (auto i : train_indices) mix(i);
  mix(~0ULL);
  for (auto i : val_indices) mix(i);
  return h;
}

Split split_train_val(const Dataset& ds, double fraction, std::uint64_t seed) {
  if (ds.empty()) throw std::invalid_argument("split_train_val: empty dataset");
  if (fraction < 0.0 || fraction > 1.0)
    throw std::invalid_argument("split_train_val: fraction must be in [0,1]");
  std::map<std::size_t, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < ds.size(); ++i) by_class[ds.class_index(i)].push_back(i);
  for (const auto& [c, idx] : by_class)
    if (idx.size() < 2)
      throw std::invalid_argument("split_train_val: class " + std::to_string(c) + " has " +
                                  std::to_string(idx.size()) + " item(s), cannot stratify");

  struct Quota {
    std::size_t cls;
    std::size_t n;
    double frac;
  };
  std::vector<Quota> quotas;
  std::size_t assigned = 0;
  for (const auto& [c, idx] : by_class) {
    const double exact = fraction * static_cast<double>(idx.size());
    const auto fl = static_cast<std::size_t>(std::floor(exact + 1e-9));
    quotas.push_back({c, fl, exact - static_cast<double>(fl)});
    assigned += fl;
  }
  const auto total = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(ds.size())));
  std::vector<std::size_t> order(quotas.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return quotas[a].frac > quotas[b].frac; });
  for (std::size_t r = 0; assigned < total && r < order.size(); ++r, ++assigned) ++quotas[order[r]].n;

  Split s;
  Rng rng(derive_seed(seed, 0x73706c6974));
  std::vector<char> is_train(ds.size(), 0);
  for (const auto& q : quotas) {
    auto idx = by_class[q.cls];
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t i = 0; i < q.n && i < idx.size(); ++i) is_train[idx[i]] = 1;
  }
  s.train.class_names = s.val.class_names = ds.class_names;
  s.train.task_ranges = s.val.task_ranges = ds.task_ranges;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (is_train[i]) {
      s.train_indices.push_back(i);
      s.train.items.push_back(ds.items[i]);
    } else {
      s.val_indices.push_back(i);
      s.val.items.push_back(ds.items[i]);
    }
  }
  auto has_bg = [](const Dataset& d) {
    return std::any_of(d.items.begin(), d.items.end(),
                       [](const LabeledImage& it) { return it.label == kBackgroundLabel; });
  };
  s.train.has_background = has_bg(s.train);
  s.val.has_background = has_bg(s.val);
  return s;
}

// ---------------------------------------------------------------- augmentation

Image augment(const Image& img, const AugmentSpec& spec, std::uint64_t seed) {
  if (spec.max_rotation_deg < 0 || spec.crop_scale_min <= 0 || spec.crop_scale_max > 1 ||
      spec.crop_scale_min > spec.crop_scale_max || spec.hflip_p < 0 || spec.hflip_p > 1)
    throw std::invalid_argument("augment: invalid augmentation ranges");
  if (spec.identity()) return img;
  Rng rng(seed);
  Image out = img;
  if (spec.max_rotation_deg > 0) {
    const double a = std::uniform_real_distribution<double>(-spec.max_rotation_deg,
                                                            spec.max_rotation_deg)(rng);
    out = rotate(out, a);
  }
  if (spec.crop_scale_min < 1.0) {
    const double s =
        std::uniform_real_distribution<double>(spec.crop_scale_min, spec.crop_scale_max)(rng);
    const auto ch = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(s * out.height)));
    const auto cw = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(s * out.width)));
    const std::size_t y = std::uniform_int_distribution<std::size_t>(0, out.height - ch)(rng);
    const std::size_t x = std::uniform_int_distribution<std::size_t>(0, out.width - cw)(rng);
    out = resize_bilinear(crop(out, y, x, ch, cw), img.height, img.width);
  }
  if (spec.hflip_p > 0 && uniform01(rng) < spec.hflip_p) out = hflip(out);
  return out;
}

// ---------------------------------------------------------------- composition

Dataset append_background(const Dataset& ds, const Dataset& background) {
  if (background.empty())
    throw std::invalid_argument("append_background: background set is empty; use a baseline run instead");
  if (ds.has_background) throw std::invalid_argument("append_background: dataset already has a background class");
  for (const auto& it : background.items)
    if (it.label != kBackgroundLabel)
      throw std::invalid_argument("append_background: background item not labeled BACKGROUND");
  if (!ds.empty()) {
    const auto& ref = ds.items.front().image;
    for (const auto& it : background.items)
      if (!it.image.same_shape(ref))
        throw std::invalid_argument(
            "append_background: background resolution " + std::to_string(it.image.channels) + "x" +
            std::to_string(it.image.height) + "x" + std::to_string(it.image.width) +
            " does not match dataset " + std::to_string(ref.channels) + "x" +
            std::to_string(ref.height) + "x" + std::to_string(ref.width));
  }
  Dataset out = ds;
  out.items.insert(out.items.end(), background.items.begin(), background.items.end());
  out.has_background = true;
  return out;
}

Dataset merge_for_multitask(const std::vector<Dataset>& datasets) {
  if (datasets.empty()) throw std::invalid_argument("merge_for_multitask: no datasets");
  if (datasets.size() == 1) return datasets.front();
  Dataset out;
  const Image* ref = nullptr;
  std::size_t offset = 0;
  for (std::size_t t = 0; t < datasets.size(); ++t) {
    const auto& d = datasets[t];
    if (d.has_background) throw std::invalid_argument("merge_for_multitask: task datasets must not carry a background class");
    for (const auto& it : d.items) {
      if (!ref) ref = &it.image;
      if (!it.image.same_shape(*ref))
        throw std::invalid_argument("merge_for_multitask: resolution mismatch in dataset " +
                                    std::to_string(t));
      LabeledImage li = it;
      li.label = static_cast<int>(offset) + it.label;
      out.items.push_back(std::move(li));
    }
    for (const auto& n : d.class_names) out.class_names.push_back(n);
    out.task_ranges.push_back({offset, d.class_names.size()});
    offset += d.class_names.size();
  }
  return out;
}

}  // namespace backdrop
