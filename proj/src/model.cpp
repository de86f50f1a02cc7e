#include "backdrop/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "json.hpp"

#include "backdrop/rng.hpp"

namespace backdrop {

using nlohmann::json;

std::string to_string(HeadMode m) {
  switch (m) {
    case HeadMode::baseline: return "baseline";
    case HeadMode::background: return "background";
    case HeadMode::multitask: return "multitask";
  }
  return "baseline";
}

HeadMode head_mode_from_string(const std::string& s) {
  if (s == "baseline") return HeadMode::baseline;
  if (s == "background") return HeadMode::background;
  if (s == "multitask") return HeadMode::multitask;
  throw std::invalid_argument("unknown head mode '" + s + "'");
}

std::size_t ModelConfig::feature_channels() const {
  return blocks.empty() ? in_channels : blocks.back().channels;
}

std::size_t ModelConfig::num_target_classes() const {
  return task_classes.empty() ? 0 : task_classes.front();
}

std::size_t ModelConfig::num_outputs() const {
  switch (head_mode) {
    case HeadMode::baseline: return num_target_classes();
    case HeadMode::background: return num_target_classes() + 1;
    case HeadMode::multitask:
      return std::accumulate(task_classes.begin(), task_classes.end(), std::size_t{0});
  }
  return 0;
}

std::vector<LabelRange> ModelConfig::task_ranges() const {
  std::vector<LabelRange> out;
  std::size_t off = 0;
  for (auto n : task_classes) {
    out.push_back({off, n});
    off += n;
  }
  return out;
}

std::pair<std::size_t, std::size_t> ModelConfig::feature_extent() const {
  std::size_t h = in_h, w = in_w;
  for (const auto& b : blocks) {
    if (b.stride == 0 || h + 2 * b.padding < b.kernel || w + 2 * b.padding < b.kernel) return {0, 0};
    h = (h + 2 * b.padding - b.kernel) / b.stride + 1;
    w = (w + 2 * b.padding - b.kernel) / b.stride + 1;
  }
  return {h, w};
}

ModelConfig ModelConfig::desk_default(std::size_t in_channels, std::size_t h, std::size_t w,
                                      std::size_t num_classes, HeadMode mode) {
  ModelConfig c;
  c.in_channels = in_channels;
  c.in_h = h;
  c.in_w = w;
  c.blocks = {{8, 3, 2, 1}, {16, 3, 2, 1}, {32, 3, 1, 1}};
  c.head_mode = mode;
  c.task_classes = {num_classes};
  return c;
}

std::vector<Tensor*> Model::parameters() {
  std::vector<Tensor*> p;
  for (std::size_t i = 0; i < conv.size(); ++i) {
    p.push_back(&conv[i]);
    p.push_back(&conv_bias[i]);
  }
  p.push_back(&head.weight);
  p.push_back(&head.bias);
  return p;
}

std::vector<const Tensor*> Model::parameters() const {
  std::vector<const Tensor*> p;
  for (std::size_t i = 0; i < conv.size(); ++i) {
    p.push_back(&conv[i]);
    p.push_back(&conv_bias[i]);
  }
  p.push_back(&head.weight);
  p.push_back(&head.bias);
  return p;
}

std::vector<Tensor*> Model::head_parameters() { return {&head.weight, &head.bias}; }

void Model::zero_grad() {
  for (Tensor* p : parameters()) p->zero_grad();
}

namespace {

void validate(const ModelConfig& c) {
  if (c.in_channels == 0 || c.in_h == 0 || c.in_w == 0)
    throw std::invalid_argument("model: input shape must be positive");
  if (c.blocks.empty()) throw std::invalid_argument("model: at least one conv block required");
  for (const auto& b : c.blocks)
    if (b.channels == 0 || b.kernel == 0 || b.stride == 0)
      throw std::invalid_argument("model: conv block channels, kernel and stride must be positive");
  if (c.task_classes.empty()) throw std::invalid_argument("model: no target classes");
  for (auto n : c.task_classes)
    if (n == 0) throw std::invalid_argument("model: a task has zero classes");
  if (c.head_mode != HeadMode::multitask && c.task_classes.size() != 1)
    throw std::invalid_argument("model: " + to_string(c.head_mode) +
                                " head takes exactly one task");
  if (c.head_mode == HeadMode::multitask && c.task_classes.size() < 2)
    throw std::invalid_argument("model: multitask head needs at least two tasks");
  auto [h, w] = c.feature_extent();
  if (h == 0 || w == 0)
    throw std::invalid_argument("model: spatial extent collapses to zero through the conv stack");
}

void fill_uniform(Tensor& t, double bound, Rng& rng) {
  std::uniform_real_distribution<double> d(-bound, bound);
  for (double& v : t.values) v = d(rng);
}

}  // namespace

Model build_model(const ModelConfig& config, std::uint64_t seed) {
  validate(config);
  Model m;
  m.config = config;
  Rng rng(derive_seed(seed, 0x6d6f64656c));
  std::size_t cin = config.in_channels;
  for (const auto& b : config.blocks) {
    Tensor k({b.channels, cin, b.kernel, b.kernel});
    const double fan_in = static_cast<double>(cin * b.kernel * b.kernel);
    fill_uniform(k, std::sqrt(6.0 / fan_in), rng);
    m.conv.push_back(std::move(k));
    m.conv_bias.emplace_back(Shape{b.channels}, 0.0);
    cin = b.channels;
  }
  const std::size_t k = config.feature_channels(), n = config.num_outputs();
  m.head.weight = Tensor({k, n});
  fill_uniform(m.head.weight, 1.0 / std::sqrt(static_cast<double>(k)), rng);
  m.head.bias = Tensor({n}, 0.0);
  return m;
}

std::vector<Var> ModelVars::all() const {
  std::vector<Var> v;
  for (std::size_t i = 0; i < conv.size(); ++i) {
    v.push_back(conv[i]);
    v.push_back(conv_bias[i]);
  }
  v.push_back(head_weight);
  v.push_back(head_bias);
  return v;
}

ModelVars bind_parameters(Tape& tape, Model& model, bool trainable_conv) {
  ModelVars v;
  for (std::size_t i = 0; i < model.conv.size(); ++i) {
    Tensor& k = model.conv[i];
    Tensor& b = model.conv_bias[i];
    v.conv.push_back(trainable_conv ? tape.parameter(k) : tape.constant(k));
    v.conv_bias.push_back(trainable_conv ? tape.parameter(b) : tape.constant(b));
  }
  v.head_weight = tape.parameter(model.head.weight);
  v.head_bias = tape.parameter(model.head.bias);
  return v;
}

namespace {
void check_image(const ModelConfig& c, const Tensor& image) {
  const Shape want{c.in_channels, c.in_h, c.in_w};
  if (image.shape != want)
    throw std::invalid_argument("forward: image shape " + shape_str(image.shape) +
                                " does not match model input " + shape_str(want));
}
}  // namespace

std::pair<Var, Var> forward_on_tape(Tape& tape, const Model& model, const ModelVars& vars,
                                    const Tensor& image) {
  check_image(model.config, image);
  Var x = tape.constant(image);
  for (std::size_t i = 0; i < model.config.blocks.size(); ++i) {
    const auto& b = model.config.blocks[i];
    x = tape.relu(tape.channel_bias(tape.conv2d(x, vars.conv[i], b.stride, b.padding),
                                    vars.conv_bias[i]));
  }
  Var pooled = tape.global_avg_pool(x);
  Var logits = tape.dense(pooled, vars.head_weight, vars.head_bias);
  return {x, logits};
}

ForwardResult forward(const Model& model, const Tensor& image) {
  check_image(model.config, image);
  Tensor x = image;
  for (std::size_t i = 0; i < model.config.blocks.size(); ++i) {
    const auto& b = model.config.blocks[i];
    const Tensor& k = model.conv[i];
    kernels::ConvGeometry g{x.shape[0], x.shape[1], x.shape[2], k.shape[0],
                            k.shape[2], k.shape[3], b.stride, b.padding};
    Tensor y({g.out_channels, g.out_h(), g.out_w()});
    kernels::omp::conv2d_forward(g, x.values, k.values, y.values);
    const std::size_t hw = g.out_h() * g.out_w();
    for (std::size_t c = 0; c < g.out_channels; ++c) {
      const double bias = model.conv_bias[i].values[c];
      for (std::size_t j = 0; j < hw; ++j) {
        double& v = y.values[c * hw + j];
        v = v + bias > 0.0 ? v + bias : 0.0;
      }
    }
    x = std::move(y);
  }
  const std::size_t kf = x.shape[0], hw = x.shape[1] * x.shape[2];
  std::vector<double> pooled(kf);
  for (std::size_t c = 0; c < kf; ++c) {
    double s = 0.0;
    for (std::size_t i = 0; i < hw; ++i) s += x.values[c * hw + i];
    pooled[c] = s / static_cast<double>(hw);
  }
  Tensor logits({model.head.outputs()});
  kernels::omp::dense_forward(pooled, model.head.weight.values, model.head.bias.values,
                              logits.values);
  return {std::move(x), std::move(logits)};
}

ParameterCount parameter_count(const Model& model) {
  ParameterCount pc;
  for (const Tensor* t : model.parameters()) pc.total += t->numel();
  pc.head = model.head.weight.numel() + model.head.bias.numel();
  return pc;
}

// Checkpoint layout (little-endian):
//   "BDCK" | u32 version | u64 config_len | config JSON | u32 tensor_count |
//   per tensor: u32 rank | u64 dims[rank] | f64 values[numel]
namespace {

constexpr char kMagic[4] = {'B', 'D', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

json config_to_json(const ModelConfig& c) {
  json blocks = json::array();
  for (const auto& b : c.blocks)
    blocks.push_back({{"channels", b.channels}, {"kernel", b.kernel}, {"stride", b.stride},
                      {"padding", b.padding}});
  return {{"in_channels", c.in_channels}, {"in_h", c.in_h},         {"in_w", c.in_w},
          {"blocks", blocks},             {"head_mode", to_string(c.head_mode)},
          {"task_classes", c.task_classes}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.in_channels = j.at("in_channels");
  c.in_h = j.at("in_h");
  c.in_w = j.at("in_w");
  for (const auto& b : j.at("blocks"))
    c.blocks.push_back({b.at("channels"), b.at("kernel"), b.at("stride"), b.at("padding")});
  c.head_mode = head_mode_from_string(j.at("head_mode"));
  c.task_classes = j.at("task_classes").get<std::vector<std::size_t>>();
  return c;
}

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is, const char* what) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error(std::string("checkpoint truncated while reading ") + what);
  return v;
}

}  // namespace

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os.write(kMagic, 4);
  put<std::uint32_t>(os, kVersion);
  const std::string cfg = config_to_json(model.config).dump();
  put<std::uint64_t>(os, cfg.size());
  os.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  const auto params = model.parameters();
  put<std::uint32_t>(os, static_cast<std::uint32_t>(params.size()));
  for (const Tensor* t : params) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(t->rank()));
    for (auto d : t->shape) put<std::uint64_t>(os, d);
    os.write(reinterpret_cast<const char*>(t->values.data()),
             static_cast<std::streamsize>(t->values.size() * sizeof(double)));
  }
  if (!os) throw std::runtime_error("failed writing checkpoint " + path.string());
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("not a checkpoint file: " + path.string());
  const auto version = get<std::uint32_t>(is, "version");
  if (version != kVersion)
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  const auto len = get<std::uint64_t>(is, "config length");
  std::string cfg(len, '\0');
  is.read(cfg.data(), static_cast<std::streamsize>(len));
  if (!is) throw std::runtime_error("checkpoint truncated in config");
  Model m = build_model(config_from_json(json::parse(cfg)), 0);
  auto params = m.parameters();
  const auto count = get<std::uint32_t>(is, "tensor count");
  if (count != params.size())
    throw std::runtime_error("checkpoint has " + std::to_string(count) + " tensors, config needs " +
                             std::to_string(params.size()));
  for (Tensor* t : params) {
    const auto rank = get<std::uint32_t>(is, "rank");
    Shape s(rank);
    for (auto& d : s) d = get<std::uint64_t>(is, "dims");
    if (s != t->shape)
      throw std::runtime_error("checkpoint tensor shape " + shape_str(s) + " expected " +
                               shape_str(t->shape));
    is.read(reinterpret_cast<char*>(t->values.data()),
            static_cast<std::streamsize>(t->values.size() * sizeof(double)));
    if (!is) throw std::runtime_error("checkpoint truncated in tensor data");
  }
  return m;
}

}  // namespace backdrop
