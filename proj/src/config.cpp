#include "backdrop/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "backdrop/rng.hpp"

namespace backdrop {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

std::string index(const std::string& path, std::size_t i) {
  return path + "[" + std::to_string(i) + "]";
}

const char* type_name(const json& v) { return v.type_name(); }

double as_double(const json& v, const std::string& field) {
  if (!v.is_number()) throw ConfigError(field, std::string("expected a number, got ") + type_name(v));
  return v.get<double>();
}

std::uint64_t as_u64(const json& v, const std::string& field) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer()) {
    if (v.get<std::int64_t>() < 0) throw ConfigError(field, "must be nonnegative");
    return v.get<std::uint64_t>();
  }
  throw ConfigError(field, std::string("expected a nonnegative integer, got ") + type_name(v));
}

std::size_t as_size(const json& v, const std::string& field) {
  return static_cast<std::size_t>(as_u64(v, field));
}

bool as_bool(const json& v, const std::string& field) {
  if (!v.is_boolean()) throw ConfigError(field, std::string("expected a boolean, got ") + type_name(v));
  return v.get<bool>();
}

std::string as_string(const json& v, const std::string& field) {
  if (!v.is_string()) throw ConfigError(field, std::string("expected a string, got ") + type_name(v));
  return v.get<std::string>();
}

const json& as_array(const json& v, const std::string& field) {
  if (!v.is_array()) throw ConfigError(field, std::string("expected an array, got ") + type_name(v));
  return v;
}

// Object reader that remembers which keys were consumed so leftovers can be
// reported as typos.
class Obj {
 public:
  Obj(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j.is_object())
      throw ConfigError(path_.empty() ? "<root>" : path_,
                        std::string("expected an object, got ") + type_name(j));
  }

  std::string field(const std::string& key) const { return join(path_, key); }

  const json* find(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void opt(const std::string& key, double& out) {
    if (auto* v = find(key)) out = as_double(*v, field(key));
  }
  void opt(const std::string& key, std::size_t& out) {
    if (auto* v = find(key)) out = as_size(*v, field(key));
  }
  void opt_u64(const std::string& key, std::uint64_t& out) {
    if (auto* v = find(key)) out = as_u64(*v, field(key));
  }
  void opt(const std::string& key, bool& out) {
    if (auto* v = find(key)) out = as_bool(*v, field(key));
  }
  void opt(const std::string& key, std::string& out) {
    if (auto* v = find(key)) out = as_string(*v, field(key));
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError(field(it.key()), "unknown key");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <class F>
void rethrow_as_config(const std::string& field, F&& f) {
  try {
    f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(field, e.what());
  }
}

fs::path resolve(const fs::path& p, const fs::path& base) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

void require_exists(const fs::path& p, const std::string& field) {
  if (!fs::exists(p)) throw ConfigError(field, "path does not exist: " + p.string());
}

DataSource parse_source(const json& v, const std::string& field, const fs::path& base,
                        bool check_paths) {
  DataSource s;
  if (v.is_string()) {
    s.dir = resolve(v.get<std::string>(), base);
    if (check_paths) require_exists(s.dir, field);
    return s;
  }
  Obj o(v, field);
  std::string dir, images, labels;
  o.opt("dir", dir);
  o.opt("images", images);
  o.opt("labels", labels);
  o.finish();
  if (!dir.empty() && (!images.empty() || !labels.empty()))
    throw ConfigError(field, "give either dir or images+labels, not both");
  if (dir.empty() && (images.empty() || labels.empty()))
    throw ConfigError(field, "needs dir, or both images and labels");
  if (!dir.empty()) {
    s.dir = resolve(dir, base);
    if (check_paths) require_exists(s.dir, join(field, "dir"));
  } else {
    s.images = resolve(images, base);
    s.labels = resolve(labels, base);
    if (check_paths) {
      require_exists(s.images, join(field, "images"));
      require_exists(s.labels, join(field, "labels"));
    }
  }
  return s;
}

json source_to_json(const DataSource& s) {
  if (s.is_idx()) return {{"images", s.images.string()}, {"labels", s.labels.string()}};
  return {{"dir", s.dir.string()}};
}

RunConfig parse_run(const json& v, const std::string& field, const RunConfig& defaults,
                    std::string* name) {
  Obj o(v, field);
  RunConfig r = defaults;
  o.opt("name", *name);
  if (auto* m = o.find("mode")) {
    const std::string s = as_string(*m, o.field("mode"));
    rethrow_as_config(o.field("mode"), [&] { r.mode = head_mode_from_string(s); });
  } else if (!name->empty()) {
    // A regime named after a mode gets that mode.
    try {
      r.mode = head_mode_from_string(*name);
    } catch (const std::invalid_argument&) {
      throw ConfigError(o.field("mode"), "required when the name is not a head mode");
    }
  }
  // A flat lr or epochs replaces an inherited schedule.
  if (o.find("lr") || o.find("epochs")) r.schedule.clear();
  o.opt("lr", r.lr);
  o.opt("epochs", r.epochs);
  if (auto* s = o.find("schedule")) {
    r.schedule.clear();
    const auto& arr = as_array(*s, o.field("schedule"));
    for (std::size_t i = 0; i < arr.size(); ++i) {
      Obj so(arr[i], index(o.field("schedule"), i));
      LrStage st;
      so.opt("epochs", st.epochs);
      so.opt("lr", st.lr);
      so.finish();
      r.schedule.push_back(st);
    }
  }
  o.opt("batch_size", r.batch_size);
  o.opt_u64("seed", r.seed);
  o.opt("lambda_l1", r.lambda_l1);
  if (auto* a = o.find("augment")) {
    Obj ao(*a, o.field("augment"));
    ao.opt("max_rotation_deg", r.augment.max_rotation_deg);
    ao.opt("crop_scale_min", r.augment.crop_scale_min);
    ao.opt("crop_scale_max", r.augment.crop_scale_max);
    ao.opt("hflip_p", r.augment.hflip_p);
    ao.finish();
    const auto& g = r.augment;
    if (g.max_rotation_deg < 0 || g.crop_scale_min <= 0 || g.crop_scale_max > 1 ||
        g.crop_scale_min > g.crop_scale_max || g.hflip_p < 0 || g.hflip_p > 1)
      throw ConfigError(o.field("augment"), "out-of-range augmentation parameters");
  }
  o.opt("eval_mask_background", r.eval_mask_background);
  o.opt("freeze_conv", r.freeze_conv);
  o.finish();
  rethrow_as_config(field, [&] { r.validate(); });
  return r;
}

TransformKind transform_kind(const std::string& s, const std::string& field) {
  if (s == "resize") return TransformKind::resize;
  if (s == "center_crop") return TransformKind::center_crop;
  if (s == "random_crop") return TransformKind::random_crop;
  if (s == "invert") return TransformKind::invert;
  if (s == "patches") return TransformKind::patches;
  throw ConfigError(field, "unknown transform '" + s + "'");
}

std::string transform_name(TransformKind k) {
  switch (k) {
    case TransformKind::resize: return "resize";
    case TransformKind::center_crop: return "center_crop";
    case TransformKind::random_crop: return "random_crop";
    case TransformKind::invert: return "invert";
    case TransformKind::patches: return "patches";
  }
  return "resize";
}

}  // namespace

Dataset DataSource::load() const {
  return is_idx() ? load_idx(images, labels) : read_dataset_dir(dir);
}

const RegimeSpec& ExperimentConfig::regime(const std::string& name) const {
  for (const auto& r : regimes)
    if (r.name == name) return r;
  throw ConfigError("regimes", "no regime named '" + name + "'");
}

ExperimentConfig default_experiment_config() {
  ExperimentConfig c;
  ConfoundSpec s;
  s.shapes = {"bar", "ring"};  // separated best from texture in pilot runs
  s.background_count = 2000;
  c.dataset.synthetic = s;
  c.seeds = {1, 2, 3, 4, 5};
  RunConfig run;
  run.epochs = 10;
  run.lr = 0.05;
  run.schedule = {{7, 0.05}, {3, 0.01}};
  for (HeadMode m : {HeadMode::baseline, HeadMode::background}) {
    RegimeSpec r{to_string(m), run};
    r.run.mode = m;
    c.regimes.push_back(r);
  }
  return c;
}

ConfoundSpec parse_confound_spec(const json& j, const std::string& field) {
  Obj o(j, field);
  ConfoundSpec s;
  o.opt("num_classes", s.num_classes);
  if (auto* v = o.find("shapes")) {
    const auto& arr = as_array(*v, o.field("shapes"));
    for (std::size_t i = 0; i < arr.size(); ++i)
      s.shapes.push_back(as_string(arr[i], index(o.field("shapes"), i)));
  }
  o.opt("num_textures", s.num_textures);
  o.opt("rho_train", s.rho_train);
  o.opt("rho_test", s.rho_test);
  o.opt("train_count", s.train_count);
  o.opt("test_count", s.test_count);
  o.opt("background_count", s.background_count);
  o.opt("noise", s.noise);
  o.opt("resolution", s.resolution);
  o.opt("channels", s.channels);
  o.opt("shape_scale_min", s.shape_scale_min);
  o.opt("shape_scale_max", s.shape_scale_max);
  o.opt("foreground_level", s.foreground_level);
  o.opt("texture_contrast", s.texture_contrast);
  o.finish();
  rethrow_as_config(field, [&] { s.validate(); });
  return s;
}

json confound_to_json(const ConfoundSpec& s) {
  return {{"num_classes", s.num_classes},
          {"shapes", s.shapes},
          {"num_textures", s.num_textures},
          {"rho_train", s.rho_train},
          {"rho_test", s.rho_test},
          {"train_count", s.train_count},
          {"test_count", s.test_count},
          {"background_count", s.background_count},
          {"noise", s.noise},
          {"resolution", s.resolution},
          {"channels", s.channels},
          {"shape_scale_min", s.shape_scale_min},
          {"shape_scale_max", s.shape_scale_max},
          {"foreground_level", s.foreground_level},
          {"texture_contrast", s.texture_contrast}};
}

json run_to_json(const RunConfig& r) {
  json sched = json::array();
  for (const auto& s : r.schedule) sched.push_back({{"epochs", s.epochs}, {"lr", s.lr}});
  return {{"mode", to_string(r.mode)},
          {"lr", r.lr},
          {"epochs", r.epochs},
          {"schedule", sched},
          {"batch_size", r.batch_size},
          {"seed", r.seed},
          {"lambda_l1", r.lambda_l1},
          {"augment",
           {{"max_rotation_deg", r.augment.max_rotation_deg},
            {"crop_scale_min", r.augment.crop_scale_min},
            {"crop_scale_max", r.augment.crop_scale_max},
            {"hflip_p", r.augment.hflip_p}}},
          {"eval_mask_background", r.eval_mask_background},
          {"freeze_conv", r.freeze_conv}};
}

json ExperimentConfig::to_json() const {
  json d;
  d["name"] = dataset.name;
  if (dataset.synthetic) d["synthetic"] = confound_to_json(*dataset.synthetic);
  if (dataset.train) d["train"] = source_to_json(*dataset.train);
  if (dataset.test) d["test"] = source_to_json(*dataset.test);
  if (dataset.background) d["background"] = source_to_json(*dataset.background);
  if (dataset.auxiliary) d["auxiliary"] = source_to_json(*dataset.auxiliary);
  if (dataset.auxiliary_synthetic)
    d["auxiliary_synthetic"] = confound_to_json(*dataset.auxiliary_synthetic);
  json blocks_j = json::array();
  for (const auto& b : blocks)
    blocks_j.push_back({{"channels", b.channels}, {"kernel", b.kernel}, {"stride", b.stride},
                        {"padding", b.padding}});
  // An absent block list means the desk default stack.
  json model_j = json::object();
  if (!blocks.empty()) model_j["blocks"] = blocks_j;
  json regimes_j = json::array();
  for (const auto& r : regimes) {
    json rj = run_to_json(r.run);
    rj["name"] = r.name;
    regimes_j.push_back(rj);
  }
  return {{"dataset", d},
          {"model", model_j},
          {"regimes", regimes_j},
          {"seed", seed},
          {"seeds", seeds},
          {"train_fraction", train_fraction},
          {"background_size", background_size},
          {"dff", {{"rank", dff.rank}, {"iterations", dff.iterations}, {"epsilon", dff.epsilon}}},
          {"coverage_samples", coverage_samples},
          {"output", output}};
}

namespace {

ExperimentConfig parse_experiment(const json& j, bool check_paths, const fs::path& base) {
  if (j.is_object() && j.contains("resolved_config")) {
    // Reproducibility record: everything needed sits under resolved_config.
    return parse_experiment(j.at("resolved_config"), check_paths, base);
  }
  ExperimentConfig c = default_experiment_config();
  Obj o(j, "");

  if (auto* d = o.find("dataset")) {
    Obj dobj(*d, "dataset");
    DatasetSection ds;
    dobj.opt("name", ds.name);
    if (auto* v = dobj.find("synthetic")) ds.synthetic = parse_confound_spec(*v, "dataset.synthetic");
    if (auto* v = dobj.find("train")) ds.train = parse_source(*v, "dataset.train", base, check_paths);
    if (auto* v = dobj.find("test")) ds.test = parse_source(*v, "dataset.test", base, check_paths);
    if (auto* v = dobj.find("background"))
      ds.background = parse_source(*v, "dataset.background", base, check_paths);
    if (auto* v = dobj.find("auxiliary"))
      ds.auxiliary = parse_source(*v, "dataset.auxiliary", base, check_paths);
    if (auto* v = dobj.find("auxiliary_synthetic"))
      ds.auxiliary_synthetic = parse_confound_spec(*v, "dataset.auxiliary_synthetic");
    dobj.finish();
    if (ds.synthetic && (ds.train || ds.test))
      throw ConfigError("dataset", "synthetic cannot be combined with train/test sources");
    if (!ds.synthetic && (!ds.train || !ds.test)) {
      if (!ds.train && !ds.test && !ds.background && !ds.auxiliary) {
        ds.synthetic = c.dataset.synthetic;  // only a name or nothing given
      } else {
        throw ConfigError(ds.train ? "dataset.test" : "dataset.train",
                          "required when no synthetic section is given");
      }
    }
    if (ds.auxiliary && ds.auxiliary_synthetic)
      throw ConfigError("dataset.auxiliary", "give either auxiliary or auxiliary_synthetic");
    c.dataset = ds;
  }

  if (auto* m = o.find("model")) {
    Obj mo(*m, "model");
    if (auto* b = mo.find("blocks")) {
      const auto& arr = as_array(*b, "model.blocks");
      c.blocks.clear();
      for (std::size_t i = 0; i < arr.size(); ++i) {
        Obj bo(arr[i], index("model.blocks", i));
        ConvBlockSpec spec;
        bo.opt("channels", spec.channels);
        bo.opt("kernel", spec.kernel);
        bo.opt("stride", spec.stride);
        bo.opt("padding", spec.padding);
        bo.finish();
        if (spec.channels == 0 || spec.kernel == 0 || spec.stride == 0)
          throw ConfigError(index("model.blocks", i), "channels, kernel and stride must be positive");
        c.blocks.push_back(spec);
      }
      if (c.blocks.empty()) throw ConfigError("model.blocks", "at least one block required");
    }
    mo.finish();
  }

  RunConfig run_defaults = c.regimes.front().run;
  run_defaults.mode = HeadMode::baseline;
  if (auto* r = o.find("run")) {
    // Shared settings applied to every regime before per-regime overrides.
    std::string ignored;
    run_defaults = parse_run(*r, "run", run_defaults, &ignored);
    for (auto& reg : c.regimes) {
      const HeadMode mode = reg.run.mode;
      reg.run = run_defaults;
      reg.run.mode = mode;
    }
  }
  if (auto* r = o.find("regimes")) {
    const auto& arr = as_array(*r, "regimes");
    if (arr.empty()) throw ConfigError("regimes", "at least one regime required");
    c.regimes.clear();
    std::set<std::string> names;
    for (std::size_t i = 0; i < arr.size(); ++i) {
      RegimeSpec spec;
      spec.run = parse_run(arr[i], index("regimes", i), run_defaults, &spec.name);
      if (spec.name.empty()) spec.name = to_string(spec.run.mode);
      if (!names.insert(spec.name).second)
        throw ConfigError(index("regimes", i) + ".name", "duplicate regime '" + spec.name + "'");
      c.regimes.push_back(spec);
    }
  }

  o.opt_u64("seed", c.seed);
  if (auto* s = o.find("seeds")) {
    const auto& arr = as_array(*s, "seeds");
    c.seeds.clear();
    for (std::size_t i = 0; i < arr.size(); ++i) c.seeds.push_back(as_u64(arr[i], index("seeds", i)));
    if (c.seeds.empty()) throw ConfigError("seeds", "at least one seed required");
    std::set<std::uint64_t> uniq(c.seeds.begin(), c.seeds.end());
    if (uniq.size() != c.seeds.size()) throw ConfigError("seeds", "seeds must be distinct");
  }
  o.opt("train_fraction", c.train_fraction);
  if (!(c.train_fraction > 0 && c.train_fraction <= 1))
    throw ConfigError("train_fraction", "must lie in (0, 1]");
  o.opt("background_size", c.background_size);
  if (auto* d = o.find("dff")) {
    Obj dobj(*d, "dff");
    dobj.opt("rank", c.dff.rank);
    dobj.opt("iterations", c.dff.iterations);
    dobj.opt("epsilon", c.dff.epsilon);
    dobj.finish();
    if (c.dff.rank == 0) throw ConfigError("dff.rank", "must be at least 1");
    if (!(c.dff.epsilon > 0)) throw ConfigError("dff.epsilon", "must be positive");
  }
  o.opt("coverage_samples", c.coverage_samples);
  o.opt("output", c.output);
  o.finish();

  const bool needs_aux = std::any_of(c.regimes.begin(), c.regimes.end(), [](const RegimeSpec& r) {
    return r.run.mode == HeadMode::multitask;
  });
  if (needs_aux && !c.dataset.auxiliary && !c.dataset.auxiliary_synthetic)
    throw ConfigError("dataset.auxiliary", "required by the multitask regime");
  return c;
}

}  // namespace

ExperimentConfig parse_experiment_config(const json& j, bool check_paths) {
  return parse_experiment(j, check_paths, {});
}

json read_json_file(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("<file>", "cannot open " + path.string());
  try {
    return json::parse(is);
  } catch (const json::parse_error& e) {
    throw ConfigError("<file>", path.string() + ": " + e.what());
  }
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  return parse_experiment(read_json_file(path), true, path.parent_path());
}

BackgroundJob parse_background_job(const json& j, const fs::path& base, bool check_paths) {
  BackgroundJob job;
  Obj o(j, "");
  o.opt_u64("seed", job.seed);
  std::set<std::string> ids;
  if (auto* p = o.find("pools")) {
    const auto& arr = as_array(*p, "pools");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const std::string f = index("pools", i);
      Obj po(arr[i], f);
      std::string id, location, images, labels;
      po.opt("id", id);
      po.opt("location", location);
      po.opt("images", images);
      po.opt("labels", labels);
      po.finish();
      if (id.empty()) throw ConfigError(f + ".id", "required");
      if (!ids.insert(id).second) throw ConfigError(f + ".id", "duplicate pool id '" + id + "'");
      if (!location.empty() == (!images.empty() || !labels.empty()))
        throw ConfigError(f, "give either location or images+labels");
      if (!location.empty()) {
        const fs::path loc = resolve(location, base);
        if (check_paths) require_exists(loc, f + ".location");
        job.pools.emplace_back(id, loc.string());
      } else {
        if (images.empty() || labels.empty()) throw ConfigError(f, "needs both images and labels");
        const fs::path im = resolve(images, base), lb = resolve(labels, base);
        if (check_paths) {
          require_exists(im, f + ".images");
          require_exists(lb, f + ".labels");
        }
        job.pools.emplace_back(id, im.string() + "," + lb.string());
      }
    }
  }
  auto& spec = job.spec;
  if (auto* s = o.find("sources")) {
    const auto& arr = as_array(*s, "sources");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const std::string f = index("sources", i);
      Obj so(arr[i], f);
      SourceRequest req;
      so.opt("pool", req.pool);
      if (auto* v = so.find("count")) req.count = as_size(*v, f + ".count");
      if (auto* v = so.find("per_class")) req.per_class = as_size(*v, f + ".per_class");
      so.finish();
      if (!ids.count(req.pool)) throw ConfigError(f + ".pool", "unknown pool '" + req.pool + "'");
      spec.sources.push_back(req);
    }
  }
  if (auto* t = o.find("transforms")) {
    const auto& arr = as_array(*t, "transforms");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const std::string f = index("transforms", i);
      Obj to(arr[i], f);
      TransformSpec ts;
      std::string kind;
      to.opt("kind", kind);
      ts.kind = transform_kind(kind, f + ".kind");
      to.opt("fraction", ts.fraction);
      to.opt("probability", ts.probability);
      to.opt("keep_original", ts.keep_original);
      to.opt("height", ts.height);
      to.opt("width", ts.width);
      to.opt("patch", ts.patch);
      to.opt("stride", ts.stride);
      to.finish();
      spec.transforms.push_back(ts);
    }
  }
  if (auto* m = o.find("monochrome")) {
    Obj mo(*m, "monochrome");
    mo.opt("count", spec.monochrome.count);
    mo.opt_u64("palette_seed", spec.monochrome.palette_seed);
    mo.finish();
  }
  if (auto* e = o.find("exclude_labels")) {
    const auto& arr = as_array(*e, "exclude_labels");
    for (std::size_t i = 0; i < arr.size(); ++i)
      spec.excluded_labels.insert(as_string(arr[i], index("exclude_labels", i)));
  }
  o.opt("target_size", spec.target_size);
  if (auto* r = o.find("output")) {
    Obj ro(*r, "output");
    ro.opt("channels", spec.channels);
    ro.opt("height", spec.height);
    ro.opt("width", spec.width);
    ro.finish();
  }
  o.opt("allow_duplicates", spec.allow_duplicates);
  o.finish();
  rethrow_as_config("<spec>", [&] { spec.validate(); });
  return job;
}

json background_job_to_json(const BackgroundJob& job) {
  json pools = json::array();
  for (const auto& [id, loc] : job.pools) pools.push_back({{"id", id}, {"location", loc}});
  json sources = json::array();
  for (const auto& s : job.spec.sources) {
    json sj = {{"pool", s.pool}};
    if (s.count) sj["count"] = *s.count;
    if (s.per_class) sj["per_class"] = *s.per_class;
    sources.push_back(sj);
  }
  json transforms = json::array();
  for (const auto& t : job.spec.transforms)
    transforms.push_back({{"kind", transform_name(t.kind)},
                          {"fraction", t.fraction},
                          {"probability", t.probability},
                          {"keep_original", t.keep_original},
                          {"height", t.height},
                          {"width", t.width},
                          {"patch", t.patch},
                          {"stride", t.stride}});
  return {{"seed", job.seed},
          {"pools", pools},
          {"sources", sources},
          {"transforms", transforms},
          {"monochrome",
           {{"count", job.spec.monochrome.count}, {"palette_seed", job.spec.monochrome.palette_seed}}},
          {"exclude_labels", job.spec.excluded_labels},
          {"target_size", job.spec.target_size},
          {"output",
           {{"channels", job.spec.channels}, {"height", job.spec.height}, {"width", job.spec.width}}},
          {"allow_duplicates", job.spec.allow_duplicates}};
}

ExperimentBundle load_bundle(const ExperimentConfig& c) {
  ExperimentBundle b;
  b.name = c.dataset.name;
  if (c.dataset.synthetic) {
    ConfoundBundle gen = generate_confounded(*c.dataset.synthetic, c.seed);
    b.train_pool = std::move(gen.train);
    b.test = std::move(gen.test);
    b.background_pool = std::move(gen.background_pool);
  } else {
    b.train_pool = c.dataset.train->load();
    b.test = c.dataset.test->load();
  }
  if (c.dataset.background) b.background_pool = c.dataset.background->load();
  if (c.dataset.auxiliary) {
    b.auxiliary = c.dataset.auxiliary->load();
  } else if (c.dataset.auxiliary_synthetic) {
    ConfoundSpec aux = *c.dataset.auxiliary_synthetic;
    aux.background_count = 0;
    aux.test_count = 0;
    b.auxiliary = generate_confounded(aux, derive_seed(c.seed, 0x617578)).train;
  }
  return b;
}

}  // namespace backdrop
