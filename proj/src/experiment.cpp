#include "backdrop/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <stdexcept>
#include <thread>

#include "backdrop/background.hpp"
#include "backdrop/rng.hpp"

namespace backdrop {

double mean_coverage(const Model& model, const Dataset& ds, const NmfOptions& nmf,
                     std::size_t samples, std::uint64_t seed) {
  const std::size_t n = std::min(samples, ds.size());
  if (n == 0) return 0.0;
  const bool mask = model.config.head_mode == HeadMode::background;
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& item = ds.items[i];
    const ForwardResult fr = forward(model, item.image.to_tensor());
    const Factorization f = dff(fr.features, nmf, derive_seed(seed, 0x646666, i));
    sum += coverage(f, model.head, ds.class_index(item), mask).coverage;
  }
  return sum / static_cast<double>(n);
}

namespace {

Dataset draw_background(const Dataset& pool, std::size_t count, std::uint64_t seed) {
  if (count > pool.size())
    throw std::invalid_argument("background pool has " + std::to_string(pool.size()) +
                                " items, " + std::to_string(count) + " requested");
  std::vector<std::size_t> idx(pool.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(derive_seed(seed, 0x62676472617721));
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  Dataset bg;
  bg.class_names = pool.class_names;
  bg.has_background = count > 0;
  for (auto i : idx) bg.items.push_back(pool.items[i]);
  return bg;
}

}  // namespace

CellResult run_cell(const ExperimentBundle& bundle, const CompareOptions& options,
                    const RegimeSpec& regime, std::uint64_t seed, Model* trained) {
  const Split split = split_train_val(bundle.train_pool, options.train_fraction, seed);
  RunConfig run = regime.run;
  run.seed = seed;

  ModelConfig mc = options.model;
  mc.head_mode = run.mode;
  mc.task_classes = {bundle.train_pool.num_target_classes()};
  Dataset train_set;
  std::optional<LabelRange> task;
  switch (run.mode) {
    case HeadMode::baseline:
      train_set = split.train;
      break;
    case HeadMode::background: {
      std::size_t n_bg = options.background_size;
      if (n_bg == 0)
        n_bg = size_heuristic(split.train.size(), split.train.num_target_classes()).lo;
      train_set = append_background(split.train, draw_background(bundle.background_pool, n_bg, seed));
      break;
    }
    case HeadMode::multitask: {
      if (!bundle.auxiliary) throw std::invalid_argument("multitask regime needs an auxiliary dataset");
      train_set = merge_for_multitask({split.train, *bundle.auxiliary});
      mc.task_classes = {split.train.num_target_classes(), bundle.auxiliary->num_target_classes()};
      task = LabelRange{0, split.train.num_target_classes()};
      break;
    }
  }

  Model model = build_model(mc, seed);
  CellResult cell;
  cell.regime = regime.name;
  cell.seed = seed;
  cell.split_hash = split.hash();
  const Dataset* val = (run.mode == HeadMode::multitask) ? nullptr : &split.val;
  train(model, train_set, run, val, [&](const EpochRecord& rec) {
    cell.epochs.push_back({bundle.name, regime.name, seed, rec, std::nullopt, std::nullopt});
  });
  const Metrics test = evaluate(model, bundle.test, run.eval_mask_background, task);
  cell.accuracy = test.accuracy;
  cell.empirical_error = test.empirical_error;
  cell.coverage = mean_coverage(model, bundle.test, options.nmf, options.coverage_samples, seed);
  if (!cell.epochs.empty()) {
    cell.epochs.back().test_accuracy = cell.accuracy;
    cell.epochs.back().test_coverage = cell.coverage;
  }
  if (trained) *trained = std::move(model);
  return cell;
}

std::vector<RegimeSummary> summarize(const std::vector<CellResult>& cells) {
  std::map<std::string, std::vector<const CellResult*>> by;
  for (const auto& c : cells) by[c.regime].push_back(&c);
  std::vector<RegimeSummary> out;
  for (const auto& [name, v] : by) {
    RegimeSummary s;
    s.regime = name;
    s.runs = v.size();
    for (const auto* c : v) {
      s.accuracy_mean += c->accuracy;
      s.coverage_mean += c->coverage;
    }
    s.accuracy_mean /= static_cast<double>(v.size());
    s.coverage_mean /= static_cast<double>(v.size());
    if (v.size() > 1) {
      double sa = 0, sc = 0;
      for (const auto* c : v) {
        sa += (c->accuracy - s.accuracy_mean) * (c->accuracy - s.accuracy_mean);
        sc += (c->coverage - s.coverage_mean) * (c->coverage - s.coverage_mean);
      }
      s.accuracy_std = std::sqrt(sa / static_cast<double>(v.size() - 1));
      s.coverage_std = std::sqrt(sc / static_cast<double>(v.size() - 1));
    }
    out.push_back(s);
  }
  return out;
}

Comparison compare_regimes(const ExperimentBundle& bundle, const CompareOptions& options) {
  if (options.seeds.size() < 2) throw std::invalid_argument("compare_regimes: need at least two seeds");
  if (options.regimes.empty()) throw std::invalid_argument("compare_regimes: no regimes");
  struct Job {
    const RegimeSpec* regime;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (const auto& r : options.regimes)
    for (auto s : options.seeds) jobs.push_back({&r, s});

  Comparison cmp;
  cmp.cells.resize(jobs.size());
  const std::size_t workers = std::clamp<std::size_t>(options.workers, 1, jobs.size());
  if (workers == 1) {
    for (std::size_t i = 0; i < jobs.size(); ++i)
      cmp.cells[i] = run_cell(bundle, options, *jobs[i].regime, jobs[i].seed);
  } else {
    // Cells are independent; kernels inside each run stay single-threaded.
    const int saved = kernels::max_threads();
    kernels::set_num_threads(1);
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i; (i = next.fetch_add(1)) < jobs.size();)
            cmp.cells[i] = run_cell(bundle, options, *jobs[i].regime, jobs[i].seed);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    for (auto& t : pool) t.join();
    kernels::set_num_threads(saved);
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  std::stable_sort(cmp.cells.begin(), cmp.cells.end(), [](const CellResult& a, const CellResult& b) {
    return a.regime != b.regime ? a.regime < b.regime : a.seed < b.seed;
  });
  cmp.summaries = summarize(cmp.cells);
  return cmp;
}

namespace {
std::string fmt(double v) {
  char b[32];
  std::snprintf(b, sizeof b, "%.6f", v);
  return b;
}
std::string fmt_opt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }
}  // namespace

void write_metrics_csv_header(std::ostream& os) {
  os << "dataset,regime,seed,epoch,lr,steps,train_loss,train_accuracy,val_accuracy,val_empirical_error,"
        "test_accuracy,test_coverage\n";
}

void write_metrics_csv_row(std::ostream& os, const EpochRow& row) {
  const auto& r = row.record;
  os << row.dataset << ',' << row.regime << ',' << row.seed << ',' << r.epoch << ',' << fmt(r.lr)
     << ',' << r.steps << ',' << fmt(r.train_loss) << ',' << fmt(r.train_accuracy) << ','
     << fmt_opt(r.val_accuracy) << ',' << fmt_opt(r.val_empirical_error) << ','
     << fmt_opt(row.test_accuracy) << ',' << fmt_opt(row.test_coverage) << '\n';
}

void write_comparison_csv(std::ostream& os, const Comparison& cmp) {
  os << "regime,seed,accuracy,coverage\n";
  for (const auto& c : cmp.cells)
    os << c.regime << ',' << c.seed << ',' << fmt(c.accuracy) << ',' << fmt(c.coverage) << '\n';
  for (const auto& s : cmp.summaries)
    os << s.regime << ",summary," << fmt(s.accuracy_mean) << "±" << fmt(s.accuracy_std) << ','
       << fmt(s.coverage_mean) << "±" << fmt(s.coverage_std) << '\n';
}

void write_comparison_table(std::ostream& os, const Comparison& cmp) {
  char line[160];
  std::snprintf(line, sizeof line, "%-12s %5s %22s %22s\n", "regime", "runs", "accuracy (mean±std)",
                "coverage (mean±std)");
  os << line;
  for (const auto& s : cmp.summaries) {
    std::snprintf(line, sizeof line, "%-12s %5zu %12.2f ± %6.2f %12.2f ± %6.2f\n", s.regime.c_str(),
                  s.runs, 100 * s.accuracy_mean, 100 * s.accuracy_std, 100 * s.coverage_mean,
                  100 * s.coverage_std);
    os << line;
  }
}

}  // namespace backdrop
