#include "backdrop/background.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "backdrop/rng.hpp"

namespace backdrop {

namespace fs = std::filesystem;

SizeRange size_heuristic(std::size_t train_size, std::size_t num_classes) {
  if (num_classes < 1 || train_size < num_classes)
    throw std::invalid_argument("size_heuristic: need train_size >= num_classes >= 1");
  const auto lo = static_cast<std::size_t>(
      std::llround(static_cast<double>(train_size) / static_cast<double>(num_classes)));
  return {lo, train_size};
}

void BackgroundSpec::validate() const {
  if (target_size == 0) throw std::invalid_argument("background: target_size must be positive");
  if (channels != 1 && channels != 3) throw std::invalid_argument("background: channels must be 1 or 3");
  if (height == 0 || width == 0) throw std::invalid_argument("background: output resolution must be positive");
  for (const auto& s : sources)
    if (s.count && s.per_class)
      throw std::invalid_argument("background: source '" + s.pool + "' sets both count and per_class");
  for (const auto& t : transforms) {
    if ((t.kind == TransformKind::center_crop || t.kind == TransformKind::random_crop) &&
        (t.fraction <= 0 || t.fraction > 1))
      throw std::invalid_argument("background: crop fraction must lie in (0,1]");
    if (t.kind == TransformKind::invert && (t.probability < 0 || t.probability > 1))
      throw std::invalid_argument("background: invert probability must lie in [0,1]");
    if (t.kind == TransformKind::patches && t.patch == 0)
      throw std::invalid_argument("background: patch size must be positive");
    if (t.kind == TransformKind::resize && (t.height == 0 || t.width == 0))
      throw std::invalid_argument("background: resize needs a positive size");
  }
  if (channels == 1 && monochrome.count > 256)
    throw std::invalid_argument("background: at most 256 distinct grey monochromes");
}

Image make_monochrome_image(const std::vector<double>& color, std::size_t channels,
                            std::size_t height, std::size_t width) {
  if (color.size() != channels) throw std::invalid_argument("monochrome: colour needs one value per channel");
  Image img(channels, height, width);
  for (std::size_t c = 0; c < channels; ++c)
    std::fill(img.pixels.begin() + static_cast<long>(c * height * width),
              img.pixels.begin() + static_cast<long>((c + 1) * height * width), color[c]);
  return img;
}

std::vector<Image> make_monochrome(std::size_t count, std::size_t channels, std::size_t height,
                                   std::size_t width, std::uint64_t palette_seed) {
  if (count < 1) throw std::invalid_argument("monochrome: count must be >= 1");
  const std::uint32_t space = channels == 1 ? 256u : (1u << 24);
  if (count > space) throw std::invalid_argument("monochrome: more colours requested than exist");
  Rng rng(derive_seed(palette_seed, 0x6d6f6e6f));
  std::uniform_int_distribution<std::uint32_t> pick(0, space - 1);
  std::unordered_set<std::uint32_t> used;
  std::vector<Image> out;
  while (out.size() < count) {
    const std::uint32_t code = pick(rng);
    if (!used.insert(code).second) continue;
    std::vector<double> color;
    if (channels == 1) color = {code / 255.0};
    else color = {((code >> 16) & 0xff) / 255.0, ((code >> 8) & 0xff) / 255.0, (code & 0xff) / 255.0};
    out.push_back(make_monochrome_image(color, channels, height, width));
  }
  return out;
}

std::vector<Image> extract_patches(const Image& img, std::size_t patch, std::size_t stride) {
  if (patch == 0) throw std::invalid_argument("patches: size must be positive");
  if (stride == 0) stride = patch;
  std::vector<Image> out;
  if (patch > img.height || patch > img.width) return out;
  for (std::size_t y = 0; y + patch <= img.height; y += stride)
    for (std::size_t x = 0; x + patch <= img.width; x += stride) out.push_back(crop(img, y, x, patch, patch));
  return out;
}

// ---------------------------------------------------------------- pools

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, sep))
    if (!tok.empty()) out.push_back(tok);
  return out;
}

void label_from_classes(Dataset& ds) {
  for (auto& it : ds.items)
    if (it.source_labels.empty() && it.label >= 0 && static_cast<std::size_t>(it.label) < ds.class_names.size())
      it.source_labels = {ds.class_names[static_cast<std::size_t>(it.label)]};
}

}  // namespace

SourcePool load_pool(const std::string& id, const std::string& location) {
  SourcePool pool;
  pool.id = id;
  const auto comma = location.find(',');
  if (comma != std::string::npos) {
    pool.items = load_idx(location.substr(0, comma), location.substr(comma + 1));
    label_from_classes(pool.items);
    return pool;
  }
  const fs::path dir(location);
  if (!fs::is_directory(dir)) throw std::runtime_error("pool '" + id + "': no such directory " + location);
  if (fs::exists(dir / "manifest.tsv")) {
    pool.items = read_dataset_dir(dir);
    label_from_classes(pool.items);
    return pool;
  }
  std::map<std::string, std::vector<std::string>> labels;
  if (std::ifstream lf(dir / "labels.tsv"); lf) {
    std::string line;
    while (std::getline(lf, line)) {
      if (line.empty() || line[0] == '#') continue;
      const auto tab = line.find('\t');
      labels[line.substr(0, tab)] = tab == std::string::npos ? std::vector<std::string>{}
                                                              : split(line.substr(tab + 1), ',');
    }
  }
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto ext = e.path().extension().string();
    if (e.is_regular_file() && (ext == ".pgm" || ext == ".ppm" || ext == ".pnm")) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::map<std::string, int> class_ids;
  for (const auto& f : files) {
    LabeledImage li;
    li.image = read_pnm(f);
    li.source = id + ":" + f.filename().string();
    if (auto it = labels.find(f.filename().string()); it != labels.end()) li.source_labels = it->second;
    li.label = 0;
    if (!li.source_labels.empty()) {
      auto [pos, inserted] = class_ids.emplace(li.source_labels.front(), static_cast<int>(class_ids.size()));
      li.label = pos->second;
    }
    pool.items.items.push_back(std::move(li));
  }
  pool.items.class_names.resize(std::max<std::size_t>(1, class_ids.size()), "unlabeled");
  for (const auto& [name, cid] : class_ids) pool.items.class_names[static_cast<std::size_t>(cid)] = name;
  return pool;
}

// ---------------------------------------------------------------- assembly

namespace {

struct Candidate {
  Image image;
  std::string pool;
  std::size_t index = 0;
  std::vector<std::string> source_labels;
  std::vector<std::string> transforms;
};

std::string num(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

std::vector<Candidate> apply_transform(const TransformSpec& t, std::vector<Candidate> in,
                                       std::uint64_t stream_seed) {
  std::vector<Candidate> out;
  out.reserve(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) {
    Candidate& c = in[i];
    Rng rng(derive_seed(stream_seed, i));
    switch (t.kind) {
      case TransformKind::resize:
        c.image = resize_bilinear(c.image, t.height, t.width);
        c.transforms.push_back("resize:" + std::to_string(t.height) + "x" + std::to_string(t.width));
        out.push_back(std::move(c));
        break;
      case TransformKind::center_crop:
      case TransformKind::random_crop: {
        const auto h = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(t.fraction * c.image.height)));
        const auto w = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(t.fraction * c.image.width)));
        std::size_t y = (c.image.height - h) / 2, x = (c.image.width - w) / 2;
        if (t.kind == TransformKind::random_crop) {
          y = std::uniform_int_distribution<std::size_t>(0, c.image.height - h)(rng);
          x = std::uniform_int_distribution<std::size_t>(0, c.image.width - w)(rng);
        }
        c.image = crop(c.image, y, x, h, w);
        c.transforms.push_back((t.kind == TransformKind::center_crop ? "center_crop:" : "random_crop:") +
                               std::to_string(y) + "," + std::to_string(x) + "," + std::to_string(h) + "x" +
                               std::to_string(w));
        out.push_back(std::move(c));
        break;
      }
      case TransformKind::invert: {
        const bool flip = uniform01(rng) < t.probability;
        if (!flip) {
          out.push_back(std::move(c));
          break;
        }
        if (t.keep_original) out.push_back(c);
        c.image = invert_colors(c.image);
        c.transforms.push_back("invert");
        out.push_back(std::move(c));
        break;
      }
      case TransformKind::patches: {
        const std::size_t stride = t.stride ? t.stride : t.patch;
        std::size_t p = 0;
        for (std::size_t y = 0; y + t.patch <= c.image.height; y += stride)
          for (std::size_t x = 0; x + t.patch <= c.image.width; x += stride, ++p) {
            Candidate pc;
            pc.image = crop(c.image, y, x, t.patch, t.patch);
            pc.pool = c.pool;
            pc.index = c.index;
            pc.source_labels = c.source_labels;
            pc.transforms = c.transforms;
            pc.transforms.push_back("patch:" + std::to_string(y) + "," + std::to_string(x) + "," +
                                    std::to_string(t.patch));
            out.push_back(std::move(pc));
          }
        break;
      }
    }
  }
  return out;
}

}  // namespace

Dataset assemble(const BackgroundSpec& spec, const std::vector<SourcePool>& pools,
                 std::uint64_t seed) {
  spec.validate();
  std::map<std::string, const SourcePool*> by_id;
  for (const auto& p : pools) by_id[p.id] = &p;

  std::vector<std::string> shortfalls;
  // (pool id, item index) -> drawn
  std::map<std::string, std::vector<std::size_t>> drawn;
  for (std::size_t si = 0; si < spec.sources.size(); ++si) {
    const auto& req = spec.sources[si];
    auto pit = by_id.find(req.pool);
    if (pit == by_id.end()) throw std::invalid_argument("background: unknown source pool '" + req.pool + "'");
    const Dataset& items = pit->second->items;
    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < items.size(); ++i) {
      const auto& sl = items.items[i].source_labels;
      const bool excluded = std::any_of(sl.begin(), sl.end(), [&](const std::string& l) {
        return spec.excluded_labels.count(l) > 0;
      });
      if (!excluded) eligible.push_back(i);
    }
    Rng rng(derive_seed(seed, 0x7372630000 + si));
    std::vector<std::size_t> pick;
    if (req.per_class) {
      std::map<int, std::vector<std::size_t>> by_class;
      for (auto i : eligible) by_class[items.items[i].label].push_back(i);
      for (auto& [cls, v] : by_class) {
        if (v.size() < *req.per_class) {
          shortfalls.push_back("pool '" + req.pool + "' class " + std::to_string(cls) + ": " +
                               std::to_string(v.size()) + " eligible, " + std::to_string(*req.per_class) +
                               " requested");
          continue;
        }
        std::shuffle(v.begin(), v.end(), rng);
        pick.insert(pick.end(), v.begin(), v.begin() + static_cast<long>(*req.per_class));
      }
    } else if (req.count) {
      if (eligible.size() < *req.count) {
        shortfalls.push_back("pool '" + req.pool + "': " + std::to_string(eligible.size()) + " eligible, " +
                             std::to_string(*req.count) + " requested");
        continue;
      }
      std::shuffle(eligible.begin(), eligible.end(), rng);
      pick.assign(eligible.begin(), eligible.begin() + static_cast<long>(*req.count));
    } else {
      pick = eligible;
    }
    auto& dst = drawn[req.pool];
    dst.insert(dst.end(), pick.begin(), pick.end());
  }
  if (!shortfalls.empty()) {
    std::string msg = "insufficient eligible source images:";
    for (const auto& s : shortfalls) msg += " [" + s + "]";
    throw std::invalid_argument(msg);
  }

  std::vector<Candidate> cands;
  for (auto& [pool_id, idx] : drawn) {
    std::sort(idx.begin(), idx.end());
    idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
    const Dataset& items = by_id[pool_id]->items;
    for (auto i : idx) {
      Candidate c;
      c.image = items.items[i].image;
      c.pool = pool_id;
      c.index = i;
      c.source_labels = items.items[i].source_labels;
      cands.push_back(std::move(c));
    }
  }
  for (std::size_t ti = 0; ti < spec.transforms.size(); ++ti)
    cands = apply_transform(spec.transforms[ti], std::move(cands), derive_seed(seed, 0x7466, ti));
  for (auto& c : cands) {
    if (c.image.channels != spec.channels) {
      c.image = convert_channels(c.image, spec.channels);
      c.transforms.push_back("channels:" + std::to_string(spec.channels));
    }
    if (c.image.height != spec.height || c.image.width != spec.width) {
      c.image = resize_bilinear(c.image, spec.height, spec.width);
      c.transforms.push_back("resize:" + std::to_string(spec.height) + "x" + std::to_string(spec.width));
    }
    clamp01(c.image);
  }
  if (spec.monochrome.count > 0) {
    auto mono = make_monochrome(spec.monochrome.count, spec.channels, spec.height, spec.width,
                                spec.monochrome.palette_seed);
    for (std::size_t i = 0; i < mono.size(); ++i) {
      Candidate c;
      c.image = std::move(mono[i]);
      c.pool = "monochrome";
      c.index = i;
      c.transforms = {"monochrome:" + num(c.image.pixels.front())};
      cands.push_back(std::move(c));
    }
  }

  if (cands.size() < spec.target_size && !spec.allow_duplicates)
    throw std::invalid_argument("insufficient eligible source images: assembled " +
                                std::to_string(cands.size()) + " candidates for target_size " +
                                std::to_string(spec.target_size) + " (duplication disabled)");
  if (cands.empty()) throw std::invalid_argument("background: no candidate images");

  std::vector<std::size_t> keep;
  Rng sel(derive_seed(seed, 0x73656c));
  if (cands.size() >= spec.target_size) {
    std::vector<std::size_t> idx(cands.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::shuffle(idx.begin(), idx.end(), sel);
    idx.resize(spec.target_size);
    std::sort(idx.begin(), idx.end());
    keep = std::move(idx);
  } else {
    for (std::size_t i = 0; i < cands.size(); ++i) keep.push_back(i);
    std::uniform_int_distribution<std::size_t> d(0, cands.size() - 1);
    while (keep.size() < spec.target_size) keep.push_back(d(sel));
    std::sort(keep.begin(), keep.end());
  }

  Dataset out;
  out.has_background = true;
  out.items.reserve(keep.size());
  for (auto i : keep) {
    const Candidate& c = cands[i];
    LabeledImage li;
    li.image = c.image;
    li.label = kBackgroundLabel;
    li.source = c.pool + ":" + std::to_string(c.index);
    li.source_labels = c.source_labels;
    li.transforms = c.transforms;
    out.items.push_back(std::move(li));
  }
  return out;
}

}  // namespace backdrop
