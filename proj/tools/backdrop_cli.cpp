// backdrop command-line driver.
//
// Exit status: 0 success, 2 invalid configuration or flags, 1 runtime failure.
// Errors are printed as a single line: "error: <kind>: <detail>".

#include <openssl/evp.h>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "backdrop/background.hpp"
#include "backdrop/cam.hpp"
#include "backdrop/config.hpp"
#include "backdrop/experiment.hpp"
#include "backdrop/kernels.hpp"
#include "backdrop/synth.hpp"
#include "backdrop/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace backdrop;

namespace {

std::string sha256_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot hash " + path.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buf[1 << 15];
  while (is) {
    is.read(buf, sizeof buf);
    if (is.gcount() > 0) EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(is.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::string hex;
  char b[3];
  for (unsigned i = 0; i < len; ++i) {
    std::snprintf(b, sizeof b, "%02x", md[i]);
    hex += b;
  }
  return hex;
}

// Caps both the kernel thread count and the compare worker pool.
std::size_t thread_cap() {
  if (const char* env = std::getenv("BACKDROP_THREADS")) {
    try {
      const long n = std::stol(env);
      if (n >= 1) return static_cast<std::size_t>(n);
    } catch (const std::exception&) {
    }
    throw ConfigError("BACKDROP_THREADS", std::string("expected a positive integer, got '") + env + "'");
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

struct Record {
  std::string command;
  std::vector<std::string> argv;
  json config;
  json seeds = json::object();
  std::vector<fs::path> artifacts;
};

void write_record(const fs::path& out, const Record& r) {
  json art = json::object();
  for (const auto& p : r.artifacts) art[fs::relative(p, out).generic_string()] = sha256_file(p);
  json j = {{"record_version", 1},
            {"command", r.command},
            {"argv", r.argv},
            {"resolved_config", r.config},
            {"seeds", r.seeds},
            {"artifacts", art}};
  std::ofstream os(out / "record.json");
  os << j.dump(2) << '\n';
  if (!os) throw std::runtime_error("failed writing " + (out / "record.json").string());
}

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string regime;
  std::optional<std::size_t> epochs;
  std::optional<double> lr;
  std::optional<double> lambda_l1;
  std::optional<bool> mask_background;
  std::optional<std::size_t> rank;
  std::string format = "pgm";
};

ExperimentConfig resolve_config(const Common& c) {
  ExperimentConfig cfg = c.config.empty() ? default_experiment_config()
                                          : load_experiment_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (!c.out.empty()) cfg.output = c.out;
  if (c.rank) cfg.dff.rank = *c.rank;
  for (auto& r : cfg.regimes) {
    if (c.epochs || c.lr) {
      if (c.epochs) r.run.epochs = *c.epochs;
      if (c.lr) r.run.lr = *c.lr;
      r.run.schedule.clear();
    }
    if (c.lambda_l1) r.run.lambda_l1 = *c.lambda_l1;
    if (c.mask_background) r.run.eval_mask_background = *c.mask_background;
    try {
      r.run.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError("regimes." + r.name, e.what());
    }
  }
  if (!c.regime.empty()) {
    const RegimeSpec chosen = cfg.regime(c.regime);
    cfg.regimes = {chosen};
  }
  if (cfg.output.empty()) throw ConfigError("output", "no output directory (use --out)");
  return cfg;
}

CompareOptions compare_options(const ExperimentConfig& cfg, const ExperimentBundle& b) {
  CompareOptions o;
  if (b.train_pool.empty()) throw std::runtime_error("training dataset is empty");
  const Image& first = b.train_pool.items.front().image;
  o.model = ModelConfig::desk_default(first.channels, first.height, first.width,
                                      b.train_pool.num_target_classes());
  if (!cfg.blocks.empty()) o.model.blocks = cfg.blocks;
  o.seeds = cfg.seeds;
  o.regimes = cfg.regimes;
  o.train_fraction = cfg.train_fraction;
  o.background_size = cfg.background_size;
  o.nmf = cfg.dff;
  o.coverage_samples = cfg.coverage_samples;
  return o;
}

void write_heatmap(const std::vector<double>& grid, std::size_t h, std::size_t w,
                   const fs::path& stem, const std::string& format, std::vector<fs::path>& out) {
  fs::path p = stem;
  if (format == "png") {
    p += ".png";
    write_heatmap_png(grid, h, w, p);
  } else {
    p += ".pgm";
    write_heatmap_pgm(grid, h, w, p);
  }
  out.push_back(p);
}

// ---- subcommands ----

int cmd_synth(const Common& c, const Record& base) {
  ExperimentConfig cfg = resolve_config(c);
  if (!cfg.dataset.synthetic) throw ConfigError("dataset.synthetic", "synth needs a synthetic dataset section");
  const fs::path out = cfg.output;
  fs::create_directories(out);
  ConfoundBundle b = generate_confounded(*cfg.dataset.synthetic, cfg.seed);
  write_dataset_dir(b.train, out / "train");
  write_dataset_dir(b.test, out / "test");
  write_dataset_dir(b.background_pool, out / "background_pool");
  Record r = base;
  if (cfg.dataset.synthetic->channels == 1) {
    write_idx(b.train, out / "train-images.idx", out / "train-labels.idx");
    write_idx(b.test, out / "test-images.idx", out / "test-labels.idx");
    for (const char* f : {"train-images.idx", "train-labels.idx", "test-images.idx", "test-labels.idx"})
      r.artifacts.push_back(out / f);
  }
  {
    std::ofstream tex(out / "textures.csv");
    tex << "split,index,texture\n";
    for (std::size_t i = 0; i < b.train_textures.size(); ++i) tex << "train," << i << ',' << b.train_textures[i] << '\n';
    for (std::size_t i = 0; i < b.test_textures.size(); ++i) tex << "test," << i << ',' << b.test_textures[i] << '\n';
    for (std::size_t i = 0; i < b.pool_textures.size(); ++i) tex << "background_pool," << i << ',' << b.pool_textures[i] << '\n';
  }
  r.artifacts.push_back(out / "textures.csv");
  for (const char* d : {"train", "test", "background_pool"}) r.artifacts.push_back(out / d / "manifest.tsv");
  r.config = cfg.to_json();
  r.seeds = {{"data", cfg.seed}};
  write_record(out, r);
  std::cout << "train " << b.train.size() << ", test " << b.test.size() << ", background_pool "
            << b.background_pool.size() << " -> " << out.string() << '\n';
  return 0;
}

int cmd_build_background(const Common& c, const std::string& spec_path, const Record& base) {
  if (spec_path.empty()) throw ConfigError("--spec", "required");
  if (c.out.empty()) throw ConfigError("--out", "required");
  BackgroundJob job = parse_background_job(read_json_file(spec_path), fs::path(spec_path).parent_path());
  if (c.seed) job.seed = *c.seed;
  std::vector<SourcePool> pools;
  for (const auto& [id, loc] : job.pools) pools.push_back(load_pool(id, loc));
  Dataset bg = assemble(job.spec, pools, job.seed);
  const fs::path out = c.out;
  write_dataset_dir(bg, out);
  Record r = base;
  r.config = background_job_to_json(job);
  r.seeds = {{"assemble", job.seed}};
  r.artifacts.push_back(out / "manifest.tsv");
  write_record(out, r);
  std::cout << bg.size() << " background images -> " << (out / "manifest.tsv").string() << '\n';
  return 0;
}

int cmd_train(const Common& c, const Record& base) {
  ExperimentConfig cfg = resolve_config(c);
  if (cfg.regimes.size() != 1 && c.regime.empty()) cfg.regimes.resize(1);
  const RegimeSpec& regime = cfg.regimes.front();
  const std::uint64_t seed = c.seed.value_or(regime.run.seed);
  cfg.seeds = {seed};
  const fs::path out = cfg.output;
  fs::create_directories(out);
  ExperimentBundle bundle = load_bundle(cfg);
  CompareOptions opts = compare_options(cfg, bundle);
  Model model;
  CellResult cell = run_cell(bundle, opts, regime, seed, &model);
  save_checkpoint(model, out / "model.bdck");
  {
    std::ofstream os(out / "metrics.csv");
    write_metrics_csv_header(os);
    for (const auto& row : cell.epochs) write_metrics_csv_row(os, row);
  }
  Record r = base;
  r.config = cfg.to_json();
  r.seeds = {{"data", cfg.seed}, {"run", seed}};
  r.artifacts = {out / "metrics.csv", out / "model.bdck"};
  write_record(out, r);
  std::printf("%s seed %llu: test accuracy %.4f, coverage %.4f\n", regime.name.c_str(),
              static_cast<unsigned long long>(seed), cell.accuracy, cell.coverage);
  return 0;
}

Dataset input_dataset(const std::string& data, const std::string& image) {
  if (!data.empty() == !image.empty()) throw ConfigError("--data", "give exactly one of --data or --image");
  if (!data.empty()) {
    if (!fs::exists(data)) throw ConfigError("--data", "path does not exist: " + data);
    return read_dataset_dir(data);
  }
  if (!fs::exists(image)) throw ConfigError("--image", "path does not exist: " + image);
  Dataset ds;
  ds.items.push_back({read_pnm(image), 0, image, {}, {}});
  return ds;
}

int cmd_eval(const Common& c, const std::string& checkpoint, const std::string& data,
             const Record& base) {
  if (c.out.empty()) throw ConfigError("--out", "required");
  if (!fs::exists(checkpoint)) throw ConfigError("--checkpoint", "path does not exist: " + checkpoint);
  const Model model = load_checkpoint(checkpoint);
  const Dataset ds = input_dataset(data, "");
  const bool mask = c.mask_background.value_or(true);
  const Metrics m = evaluate(model, ds, mask);
  const fs::path out = c.out;
  fs::create_directories(out);
  {
    std::ofstream os(out / "predictions.csv");
    os << "index,label,prediction,loss\n";
    for (std::size_t i = 0; i < ds.size(); ++i) {
      char line[96];
      std::snprintf(line, sizeof line, "%zu,%d,%zu,%.9f\n", i, ds.items[i].label, m.predictions[i],
                    m.per_sample_loss[i]);
      os << line;
    }
  }
  {
    std::ofstream os(out / "eval.csv");
    char line[128];
    std::snprintf(line, sizeof line, "count,accuracy,empirical_error,mask_background\n%zu,%.6f,%.9f,%s\n",
                  m.count, m.accuracy, m.empirical_error, mask ? "true" : "false");
    os << line;
  }
  Record r = base;
  r.config = {{"checkpoint", checkpoint}, {"data", data}, {"mask_background", mask}};
  r.artifacts = {out / "eval.csv", out / "predictions.csv"};
  write_record(out, r);
  std::printf("accuracy %.4f, empirical error %.6f over %zu items\n", m.accuracy, m.empirical_error, m.count);
  return 0;
}

int cmd_cam(const Common& c, const std::string& checkpoint, const std::string& data,
            const std::string& image, std::size_t index, std::optional<std::size_t> cls,
            const Record& base) {
  if (c.out.empty()) throw ConfigError("--out", "required");
  if (!fs::exists(checkpoint)) throw ConfigError("--checkpoint", "path does not exist: " + checkpoint);
  const Model model = load_checkpoint(checkpoint);
  const Dataset ds = input_dataset(data, image);
  if (index >= ds.size()) throw ConfigError("--index", "out of range for " + std::to_string(ds.size()) + " items");
  const auto& item = ds.items[index];
  const ForwardResult fr = forward(model, item.image.to_tensor());
  const std::size_t k = cls.value_or(predict(fr.logits.values, model.config.num_target_classes(),
                                             model.config.head_mode == HeadMode::background));
  if (k >= model.head.outputs())
    throw ConfigError("--class", "class " + std::to_string(k) + " out of range for " +
                                     std::to_string(model.head.outputs()) + " outputs");
  const CamMap cam = compute_cam(fr.features, model.head, k);
  const fs::path out = c.out;
  fs::create_directories(out);
  Record r = base;
  const std::string stem = "cam_c" + std::to_string(k);
  write_heatmap(cam.values, cam.height, cam.width, out / stem, c.format, r.artifacts);
  write_heatmap(upsample_cam(cam, item.image.height, item.image.width), item.image.height,
                item.image.width, out / (stem + "_up"), c.format, r.artifacts);
  {
    std::ofstream os(out / (stem + ".csv"));
    char line[160];
    std::snprintf(line, sizeof line, "class,height,width,cam_mean,bias,score,logit\n%zu,%zu,%zu,%.12f,%.12f,%.12f,%.12f\n",
                  k, cam.height, cam.width, cam.mean(), cam.bias, cam.score, fr.logits.values[k]);
    os << line;
  }
  r.artifacts.push_back(out / (stem + ".csv"));
  r.config = {{"checkpoint", checkpoint}, {"data", data}, {"image", image}, {"index", index},
              {"class", k}, {"format", c.format}};
  write_record(out, r);
  std::printf("class %zu: %zux%zu map, score %.6f\n", k, cam.height, cam.width, cam.score);
  return 0;
}

int cmd_dff(const Common& c, const std::string& checkpoint, const std::string& data,
            const std::string& image, std::size_t index, std::optional<std::size_t> cls,
            const Record& base) {
  if (c.out.empty()) throw ConfigError("--out", "required");
  if (!fs::exists(checkpoint)) throw ConfigError("--checkpoint", "path does not exist: " + checkpoint);
  const Model model = load_checkpoint(checkpoint);
  const Dataset ds = input_dataset(data, image);
  if (index >= ds.size()) throw ConfigError("--index", "out of range for " + std::to_string(ds.size()) + " items");
  const auto& item = ds.items[index];
  const bool bg_slot = model.config.head_mode == HeadMode::background;
  const bool mask = c.mask_background.value_or(bg_slot);
  const ForwardResult fr = forward(model, item.image.to_tensor());
  std::size_t target;
  if (cls) target = *cls;
  else if (!data.empty() && item.label >= 0) target = static_cast<std::size_t>(item.label);
  else target = predict(fr.logits.values, model.config.num_target_classes(), bg_slot);
  if (target >= model.head.outputs())
    throw ConfigError("--class", "class " + std::to_string(target) + " out of range");
  NmfOptions nmf;
  if (c.rank) nmf.rank = *c.rank;
  const std::uint64_t seed = c.seed.value_or(1);
  Factorization f;
  try {
    f = dff(fr.features, nmf, seed);
  } catch (const std::invalid_argument& e) {
    throw ConfigError("--rank", e.what());
  }
  const DffResult res = coverage(f, model.head, target, mask && bg_slot);
  const fs::path out = c.out;
  fs::create_directories(out);
  Record r = base;
  const std::size_t hw = f.height * f.width;
  for (std::size_t j = 0; j < f.rank; ++j) {
    std::vector<double> row(f.loadings.values.begin() + static_cast<long>(j * hw),
                            f.loadings.values.begin() + static_cast<long>((j + 1) * hw));
    write_heatmap(row, f.height, f.width, out / ("concept" + std::to_string(j)), c.format, r.artifacts);
  }
  {
    std::ofstream os(out / "dff.csv");
    os << "concept,class,cells\n";
    for (std::size_t j = 0; j < f.rank; ++j) {
      std::size_t cells = 0;
      for (auto a : res.cell_assignment) cells += a == j ? 1 : 0;
      os << j << ',' << res.concept_class[j] << ',' << cells << '\n';
    }
    char line[128];
    std::snprintf(line, sizeof line, "# target=%zu coverage=%.6f final_error=%.9g\n", target,
                  res.coverage, f.error_trace.empty() ? 0.0 : f.error_trace.back());
    os << line;
  }
  r.artifacts.push_back(out / "dff.csv");
  r.config = {{"checkpoint", checkpoint}, {"data", data}, {"image", image}, {"index", index},
              {"class", target}, {"rank", nmf.rank}, {"iterations", nmf.iterations},
              {"mask_background", mask}, {"format", c.format}};
  r.seeds = {{"nmf", seed}};
  write_record(out, r);
  std::printf("target %zu: coverage %.4f with rank %zu\n", target, res.coverage, nmf.rank);
  return 0;
}

int cmd_compare(const Common& c, const Record& base) {
  ExperimentConfig cfg = resolve_config(c);
  if (cfg.seeds.size() < 2) throw ConfigError("seeds", "compare needs at least two seeds");
  const fs::path out = cfg.output;
  fs::create_directories(out);
  ExperimentBundle bundle = load_bundle(cfg);
  CompareOptions opts = compare_options(cfg, bundle);
  opts.workers = thread_cap();
  const Comparison cmp = compare_regimes(bundle, opts);
  {
    std::ofstream os(out / "metrics.csv");
    write_metrics_csv_header(os);
    for (const auto& cell : cmp.cells)
      for (const auto& row : cell.epochs) write_metrics_csv_row(os, row);
  }
  {
    std::ofstream os(out / "comparison.csv");
    write_comparison_csv(os, cmp);
  }
  {
    std::ofstream os(out / "comparison.txt");
    write_comparison_table(os, cmp);
  }
  Record r = base;
  r.config = cfg.to_json();
  r.seeds = {{"data", cfg.seed}, {"runs", cfg.seeds}};
  r.artifacts = {out / "comparison.csv", out / "comparison.txt", out / "metrics.csv"};
  write_record(out, r);
  write_comparison_table(std::cout, cmp);
  return 0;
}

void add_common(CLI::App* app, Common& c, bool training) {
  app->add_option("--config", c.config, "experiment config (JSON) or a run record");
  app->add_option("--seed", c.seed, "seed override");
  app->add_option("--out", c.out, "output directory");
  if (training) {
    app->add_option("--regime", c.regime, "regime name from the config");
    app->add_option("--epochs", c.epochs, "epochs (replaces any schedule)");
    app->add_option("--lr", c.lr, "learning rate (replaces any schedule)");
    app->add_option("--lambda-l1", c.lambda_l1, "L1 penalty weight");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"backdrop: background-class training, CAM and DFF analysis"};
  app.require_subcommand(1);
  Common c;
  std::string spec, checkpoint, data, image;
  std::size_t index = 0;
  std::optional<std::size_t> cls;
  auto mask_opt = [&](CLI::App* s) {
    s->add_option("--mask-background", c.mask_background, "mask the background logit (true|false)")
        ->expected(0, 1)
        ->default_str("true");
  };
  auto format_opt = [&](CLI::App* s, std::vector<std::string> allowed) {
    s->add_option("--format", c.format, "output format")->check(CLI::IsMember(allowed));
  };

  auto* synth = app.add_subcommand("synth", "generate the synthetic confound datasets");
  add_common(synth, c, false);
  auto* bgb = app.add_subcommand("build-background", "assemble a background class");
  bgb->add_option("--spec", spec, "background spec (JSON)")->required();
  bgb->add_option("--seed", c.seed, "seed override");
  bgb->add_option("--out", c.out, "output dataset directory")->required();
  auto* train = app.add_subcommand("train", "train one regime and save a checkpoint");
  add_common(train, c, true);
  mask_opt(train);
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset directory");
  eval->add_option("--checkpoint", checkpoint)->required();
  eval->add_option("--data", data, "dataset directory")->required();
  eval->add_option("--out", c.out, "output directory")->required();
  mask_opt(eval);
  format_opt(eval, {"csv"});
  auto* cam = app.add_subcommand("cam", "class activation map for one image");
  auto* dffc = app.add_subcommand("dff", "deep feature factorization for one image");
  for (auto* s : {cam, dffc}) {
    s->add_option("--checkpoint", checkpoint)->required();
    s->add_option("--data", data, "dataset directory");
    s->add_option("--image", image, "single PGM/PPM image");
    s->add_option("--index", index, "item index within --data");
    s->add_option("--class", cls, "class index (default: prediction)");
    s->add_option("--out", c.out, "output directory")->required();
    format_opt(s, {"pgm", "png"});
  }
  dffc->add_option("--rank", c.rank, "number of concepts");
  dffc->add_option("--seed", c.seed, "NMF initialization seed");
  mask_opt(dffc);
  auto* compare = app.add_subcommand("compare", "train every regime for every seed and tabulate");
  add_common(compare, c, true);
  mask_opt(compare);
  compare->add_option("--rank", c.rank, "DFF rank for coverage");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << e.what() << '\n';
    return 2;
  }

  Record base;
  for (int i = 0; i < argc; ++i) base.argv.emplace_back(argv[i]);
  try {
    const std::size_t threads = thread_cap();
    kernels::set_num_threads(static_cast<int>(threads));
    base.command = app.get_subcommands().front()->get_name();
    if (*synth) return cmd_synth(c, base);
    if (*bgb) return cmd_build_background(c, spec, base);
    if (*train) return cmd_train(c, base);
    if (*eval) return cmd_eval(c, checkpoint, data, base);
    if (*cam) return cmd_cam(c, checkpoint, data, image, index, cls, base);
    if (*dffc) return cmd_dff(c, checkpoint, data, image, index, cls, base);
    if (*compare) return cmd_compare(c, base);
  } catch (const ConfigError& e) {
    std::cerr << "error: config: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::string msg = e.what();
    for (char& ch : msg)
      if (ch == '\n') ch = ' ';
    std::cerr << "error: runtime: " << msg << '\n';
    return 1;
  }
  return 1;
}
