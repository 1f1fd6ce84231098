#include "fedfc/harness/runner.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "fedfc/adapt/align.hpp"
#include "fedfc/data/csv_io.hpp"
#include "fedfc/interpret/interpret.hpp"
#include "fedfc/privacy/budget.hpp"
#include "fedfc/rng.hpp"
#include "fedfc/stats/ttest.hpp"

namespace fs = std::filesystem;

namespace fedfc::harness {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

Index feature_dim(const std::vector<data::ConnectivityFeature>& features) {
  if (features.empty())
    throw std::invalid_argument("no features loaded from the data source");
  const Index dim = features.front().values.size();
  for (const data::ConnectivityFeature& f : features)
    if (f.values.size() != dim)
      throw std::invalid_argument("inconsistent feature length for subject " +
                                  f.subject_id);
  return dim;
}

std::string fed_arch_for(const ExperimentConfig& cfg, Index dim) {
  if (cfg.fed.arch == "fed-mlp" && dim != 6105)
    return fed::mlp_arch(dim, 16);
  return cfg.fed.arch;
}

std::string single_arch_for(const ExperimentConfig& cfg, Index dim) {
  if (cfg.single_arch == "single-mlp" && dim != 6105)
    return fed::mlp_arch(dim, 8);
  return cfg.single_arch;  // empty falls back to the 8-unit default downstream
}

fed::StrategyConfig cell_strategy_config(const ExperimentConfig& cfg,
                                         const Cell& cell, Index dim) {
  fed::StrategyConfig sc;
  sc.fed = cfg.fed;
  sc.fed.seed = cell.seed;
  sc.fed.tau = cell.tau;
  sc.fed.noise.mechanism = cell.noise.mechanism;
  sc.fed.noise.alpha = cell.noise.alpha;
  sc.fed.arch = fed_arch_for(cfg, dim);
  sc.single_arch = single_arch_for(cfg, dim);
  sc.cross_site = cfg.cross_site;
  sc.moe_gate_on_output = cfg.moe_gate_on_output;
  sc.align_warmup = cfg.align_warmup;
  sc.feature_noise = cfg.feature_noise;
  return sc;
}

RunOutput run_one(const ExperimentConfig& cfg,
                  const std::vector<data::ConnectivityFeature>& features,
                  const data::FoldSplit& split, const Cell& cell, Index dim) {
  RunOutput out;
  fed::StrategyConfig sc = cell_strategy_config(cfg, cell, dim);
  fed::StrategyArtifacts art;
  const fed::Strategy strategy = fed::parse_strategy(cell.strategy);
  std::vector<fed::StrategyCell> cells = fed::run_strategy(
      strategy, features, split, std::max(cell.fold, 0), sc, &art);

  for (const fed::StrategyCell& c : cells)
    out.results.push_back({c.strategy, c.site, cell.fold, cell.seed, cell.tau,
                           cell.noise, c.subject_acc, c.window_acc, c.subjects,
                           c.windows});
  if (cfg.telemetry)
    for (const fed::StepRecord& step : art.telemetry)
      out.telemetry.push_back(
          {cell.strategy, cell.fold, cell.seed, cell.tau, cell.noise, step});

  for (const auto& [site, values] : art.gate_values) {
    int bins[20] = {0};
    for (double v : values) {
      int b = static_cast<int>(v * 20.0);
      bins[std::clamp(b, 0, 19)]++;
    }
    for (int b = 0; b < 20; ++b)
      out.gate_hist.push_back(
          {cell.fold, cell.seed, site, b / 20.0, (b + 1) / 20.0, bins[b]});
  }

  if (!art.features_pre.empty()) {
    std::vector<std::string> sites;
    for (const auto& [site, m] : art.features_pre)
      if (art.train_features_pre.count(site)) sites.push_back(site);
    for (std::size_t i = 0; i < sites.size(); ++i)
      for (std::size_t j = i + 1; j < sites.size(); ++j) {
        const std::string &a = sites[i], &b = sites[j];
        const std::string pair = a + "|" + b;
        const double acc_pre = adapt::site_probe_accuracy(
            art.train_features_pre.at(a), art.train_features_pre.at(b),
            art.features_pre.at(a), art.features_pre.at(b),
            Rng::derive_seed(cell.seed, "probe-pre/" + pair));
        const double acc_post = adapt::site_probe_accuracy(
            art.train_features_post.at(a), art.train_features_post.at(b),
            art.features_post.at(a), art.features_post.at(b),
            Rng::derive_seed(cell.seed, "probe-post/" + pair));
        out.align_probe.push_back({cell.fold, cell.seed, a, b, acc_pre, acc_post});
      }
  }
  return out;
}

void append(RunOutput& into, RunOutput&& part) {
  auto move_all = [](auto& dst, auto& src) {
    dst.insert(dst.end(), std::make_move_iterator(src.begin()),
               std::make_move_iterator(src.end()));
  };
  move_all(into.results, part.results);
  move_all(into.telemetry, part.telemetry);
  move_all(into.gate_hist, part.gate_hist);
  move_all(into.align_probe, part.align_probe);
}

double sample_std(const std::vector<double>& v, double mean) {
  if (v.size() < 2) return 0.0;
  double acc = 0.0;
  for (double x : v) acc += (x - mean) * (x - mean);
  return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

// combines a generator/classifier pair back into one forward stack
nn::MlpModel fuse_models(const nn::MlpModel& gen, const nn::MlpModel& cls) {
  nn::MlpModel full;
  full.arch_id = gen.arch_id + "+" + cls.arch_id;
  full.layers = gen.layers;
  full.layers.insert(full.layers.end(), cls.layers.begin(), cls.layers.end());
  return full;
}

Index roi_count_for(Index dim) {
  const Index r =
      static_cast<Index>((1.0 + std::sqrt(1.0 + 8.0 * static_cast<double>(dim))) / 2.0);
  if (r * (r - 1) / 2 != dim)
    throw std::invalid_argument(
        "feature length is not an upper-triangle size: " + std::to_string(dim));
  return r;
}

}  // namespace

std::vector<data::ConnectivityFeature> load_features(const DataConfig& data) {
  std::vector<data::ConnectivityFeature> features;
  if (data.source == "synth") {
    data::SynthConfig sc = data.synth;
    sc.window = data.window;
    sc.stride = data.stride;
    data::SynthDataset ds = data::synth_generate(sc);
    for (const data::RoiTimeSeries& subj : ds.subjects) {
      auto fs = data::subject_features(subj, data.window, data.stride);
      features.insert(features.end(), fs.begin(), fs.end());
    }
  } else if (data.source == "roi-dir") {
    std::vector<data::RoiTimeSeries> series = data::load_roi_csv(data.roi_dir);
    auto phenotype = data::load_phenotype_csv(data.phenotype);
    int dropped = 0;
    series = data::join_phenotype(std::move(series), phenotype, &dropped);
    if (series.empty())
      throw std::invalid_argument("no subjects left after joining phenotype");
    for (const data::RoiTimeSeries& subj : series) {
      auto fs = data::subject_features(subj, data.window, data.stride);
      features.insert(features.end(), fs.begin(), fs.end());
    }
  } else if (data.source == "features-csv") {
    features = load_features_csv(data.features_csv);
  } else {
    throw std::invalid_argument("unknown data source '" + data.source + "'");
  }
  feature_dim(features);
  return features;
}

data::FoldSplit make_folds(
    const std::vector<data::ConnectivityFeature>& features, int k,
    std::uint64_t fold_seed) {
  std::map<std::string, data::SubjectInfo> subjects;
  for (const data::ConnectivityFeature& f : features)
    subjects[f.subject_id] = {f.subject_id, f.site_id, f.label};
  std::vector<data::SubjectInfo> list;
  for (auto& [id, info] : subjects) list.push_back(info);
  return data::subject_kfold(list, k, fold_seed);
}

std::vector<Cell> plan_cells(const ExperimentConfig& cfg, SweepKind sweep) {
  std::vector<int> folds = cfg.fold_subset;
  if (folds.empty())
    for (int f = 0; f < cfg.folds; ++f) folds.push_back(f);

  std::vector<int> taus{cfg.fed.tau};
  if (sweep == SweepKind::Pace) {
    if (cfg.tau_grid.empty())
      throw std::invalid_argument("sweep-pace needs a nonempty tau_grid");
    taus = cfg.tau_grid;
  }
  std::vector<NoisePoint> noises{
      {cfg.fed.noise.mechanism, cfg.fed.noise.alpha}};
  if (sweep == SweepKind::Noise) {
    if (cfg.noise_grid.empty())
      throw std::invalid_argument("sweep-noise needs a nonempty noise_grid");
    noises = cfg.noise_grid;
  }

  std::vector<Cell> cells;
  for (const std::string& strategy : cfg.strategies) {
    const bool fold_free = fed::parse_strategy(strategy) == fed::Strategy::Cross;
    const std::vector<int> strategy_folds =
        fold_free ? std::vector<int>{-1} : folds;
    for (int fold : strategy_folds)
      for (std::uint64_t seed : cfg.seeds)
        for (int tau : taus)
          for (const NoisePoint& noise : noises)
            cells.push_back({strategy, fold, seed, tau, noise});
  }
  return cells;
}

RunOutput run_cells(const ExperimentConfig& cfg,
                    const std::vector<data::ConnectivityFeature>& features,
                    const data::FoldSplit& split,
                    const std::vector<Cell>& cells) {
  const Index dim = feature_dim(features);
  std::vector<RunOutput> per_cell(cells.size());
  std::atomic<std::size_t> cursor{0};
  std::mutex fail_mutex;
  std::exception_ptr failure;

  auto worker = [&] {
    while (true) {
      const std::size_t i = cursor.fetch_add(1);
      if (i >= cells.size()) return;
      try {
        per_cell[i] = run_one(cfg, features, split, cells[i], dim);
      } catch (...) {
        std::lock_guard<std::mutex> lock(fail_mutex);
        if (!failure) failure = std::current_exception();
        cursor.store(cells.size());
        return;
      }
    }
  };

  const std::size_t n_threads = std::min<std::size_t>(
      static_cast<std::size_t>(cfg.threads), std::max<std::size_t>(cells.size(), 1));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  RunOutput out;
  for (RunOutput& part : per_cell) append(out, std::move(part));
  return out;
}

std::string resolve_out_dir(const ExperimentConfig& cfg) {
  if (const char* env = std::getenv("FEDFC_OUT"); env && *env) return env;
  return cfg.out;
}

void write_outputs(const ExperimentConfig& cfg, SweepKind sweep,
                   const RunOutput& out, const std::string& dir) {
  fs::create_directories(dir);

  {
    std::ofstream f(fs::path(dir) / "results.csv");
    f << "strategy,site,fold,seed,tau,mechanism,alpha,subject_acc,window_acc,"
         "subjects,windows\n";
    for (const ResultRow& r : out.results)
      f << r.strategy << ',' << r.site << ',' << r.fold << ',' << r.seed << ','
        << r.tau << ',' << privacy::mechanism_name(r.noise.mechanism) << ','
        << fmt(r.noise.alpha) << ',' << fmt(r.subject_acc) << ','
        << fmt(r.window_acc) << ',' << r.subjects << ',' << r.windows << '\n';
  }

  if (cfg.telemetry) {
    std::ofstream f(fs::path(dir) / "telemetry.csv");
    f << "strategy,fold,seed,tau,mechanism,alpha,epoch,step,site,loss,comm\n";
    for (const TelemetryRow& r : out.telemetry)
      f << r.strategy << ',' << r.fold << ',' << r.seed << ',' << r.tau << ','
        << privacy::mechanism_name(r.noise.mechanism) << ','
        << fmt(r.noise.alpha) << ',' << r.step.epoch << ',' << r.step.step
        << ',' << r.step.site << ',' << fmt(r.step.loss) << ','
        << (r.step.comm ? 1 : 0) << '\n';
  }

  {
    std::vector<NoisePoint> points{{cfg.fed.noise.mechanism,
                                    cfg.fed.noise.alpha}};
    if (sweep == SweepKind::Noise) points = cfg.noise_grid;
    std::ofstream f(fs::path(dir) / "budget.csv");
    f << "mechanism,alpha,delta,epsilon,out_of_regime\n";
    for (const NoisePoint& p : points) {
      if (p.mechanism == privacy::Mechanism::None || p.alpha <= 0.0) continue;
      if (p.mechanism == privacy::Mechanism::Gaussian) {
        privacy::PrivacyBudget b = privacy::gaussian_budget(p.alpha, cfg.delta);
        f << "gaussian," << fmt(p.alpha) << ',' << fmt(cfg.delta) << ','
          << fmt(b.epsilon) << ',' << (b.out_of_regime ? 1 : 0) << '\n';
      } else {
        privacy::PrivacyBudget b =
            privacy::laplace_budget(p.alpha / std::sqrt(2.0));
        f << "laplace," << fmt(p.alpha) << ",0," << fmt(b.epsilon) << ",0\n";
      }
    }
  }

  if (!out.gate_hist.empty()) {
    std::ofstream f(fs::path(dir) / "gate_hist.csv");
    f << "fold,seed,site,bin_lo,bin_hi,count\n";
    for (const GateRow& r : out.gate_hist)
      f << r.fold << ',' << r.seed << ',' << r.site << ',' << fmt(r.lo) << ','
        << fmt(r.hi) << ',' << r.count << '\n';
  }

  if (!out.align_probe.empty()) {
    std::ofstream f(fs::path(dir) / "align_probe.csv");
    f << "fold,seed,site_a,site_b,acc_pre,acc_post,drop\n";
    for (const ProbeRow& r : out.align_probe)
      f << r.fold << ',' << r.seed << ',' << r.site_a << ',' << r.site_b << ','
        << fmt(r.acc_pre) << ',' << fmt(r.acc_post) << ','
        << fmt(r.acc_pre - r.acc_post) << '\n';
  }

  {
    const char* command = sweep == SweepKind::Pace    ? "sweep-pace"
                          : sweep == SweepKind::Noise ? "sweep-noise"
                                                      : "run";
    nlohmann::json meta{
        {"command", command},
        {"cells", plan_cells(cfg, sweep).size()},
        {"notes",
         {"accuracies are multi-seed distributions; single-run fold spread is "
          "a narrower statistic",
          "folds are fixed by fold_seed and shared across run seeds"}},
        {"config", nlohmann::json::parse(dump_config(cfg))}};
    std::ofstream f(fs::path(dir) / "run_meta.json");
    f << meta.dump(2) << '\n';
  }
}

int run_experiment(const ExperimentConfig& cfg, SweepKind sweep) {
  validate_config(cfg);
  std::vector<data::ConnectivityFeature> features = load_features(cfg.data);
  data::FoldSplit split = make_folds(features, cfg.folds, cfg.fold_seed);
  std::vector<Cell> cells = plan_cells(cfg, sweep);
  RunOutput out = run_cells(cfg, features, split, cells);
  write_outputs(cfg, sweep, out, resolve_out_dir(cfg));
  return 0;
}

void save_features_csv(const std::vector<data::ConnectivityFeature>& features,
                       const std::string& path) {
  const Index dim = feature_dim(features);
  std::ofstream f(path);
  if (!f) throw std::invalid_argument("cannot write '" + path + "'");
  f << "subject_id,site_id,label,window";
  for (Index i = 0; i < dim; ++i) f << ",f" << i;
  f << '\n';
  for (const data::ConnectivityFeature& row : features) {
    f << row.subject_id << ',' << row.site_id << ',' << row.label << ','
      << row.window;
    for (Index i = 0; i < dim; ++i) f << ',' << fmt(row.values(i));
    f << '\n';
  }
}

std::vector<data::ConnectivityFeature> load_features_csv(
    const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::invalid_argument("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(f, line))
    throw std::invalid_argument("empty feature file '" + path + "'");
  std::vector<std::string> header = split_line(line);
  if (header.size() < 5 || header[0] != "subject_id" || header[1] != "site_id" ||
      header[2] != "label" || header[3] != "window")
    throw std::invalid_argument("bad feature header in '" + path + "'");
  const Index dim = static_cast<Index>(header.size()) - 4;

  std::vector<data::ConnectivityFeature> out;
  int line_no = 1;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells = split_line(line);
    if (static_cast<Index>(cells.size()) != dim + 4)
      throw std::invalid_argument(path + ":" + std::to_string(line_no) +
                                  ": wrong column count");
    data::ConnectivityFeature row;
    row.subject_id = cells[0];
    row.site_id = cells[1];
    row.label = std::stoi(cells[2]);
    row.window = std::stoi(cells[3]);
    row.values.resize(dim);
    for (Index i = 0; i < dim; ++i)
      row.values(i) = std::strtod(cells[static_cast<std::size_t>(i) + 4].c_str(),
                                  nullptr);
    out.push_back(std::move(row));
  }
  return out;
}

std::map<Index, std::string> load_roi_labels(const std::string& path) {
  std::map<Index, std::string> out;
  std::ifstream f(path);
  if (!f) throw std::invalid_argument("cannot open '" + path + "'");
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells = split_line(line);
    if (cells.size() < 2) continue;
    char* end = nullptr;
    const long idx = std::strtol(cells[0].c_str(), &end, 10);
    if (end == cells[0].c_str() || *end != '\0') continue;  // header row
    out[static_cast<Index>(idx)] = cells[1];
  }
  return out;
}

int run_interpret(const ExperimentConfig& cfg, const std::string& strategy,
                  int fold, const std::map<Index, std::string>& roi_labels,
                  const std::string& dir) {
  validate_config(cfg);
  std::vector<data::ConnectivityFeature> features = load_features(cfg.data);
  const Index dim = feature_dim(features);
  const Index r = roi_count_for(dim);
  data::FoldSplit split = make_folds(features, cfg.folds, cfg.fold_seed);

  Cell cell{strategy, fold, cfg.seeds.front(), cfg.fed.tau,
            {cfg.fed.noise.mechanism, cfg.fed.noise.alpha}};
  fed::StrategyConfig sc = cell_strategy_config(cfg, cell, dim);
  const fed::Strategy st = fed::parse_strategy(strategy);

  interpret::BiomarkerReport report;
  if (st == fed::Strategy::Fed) {
    fed::PreparedFold pf = fed::prepare_fold(features, split, fold);
    fed::FedResult res = fed::run_fed(sc.fed, pf.train);
    report = interpret::biomarker_report(res.global, pf.test, r);
  } else if (st == fed::Strategy::Mix) {
    fed::PreparedFold pf = fed::prepare_fold(features, split, fold);
    fed::SiteData pooled;
    pooled.site_id = "pooled";
    Index rows = 0;
    for (const fed::SiteData& s : pf.train) rows += s.x.rows();
    pooled.x.resize(rows, dim);
    Index at = 0;
    for (const fed::SiteData& s : pf.train) {
      pooled.x.middleRows(at, s.x.rows()) = s.x;
      pooled.y.insert(pooled.y.end(), s.y.begin(), s.y.end());
      pooled.subject_of_row.insert(pooled.subject_of_row.end(),
                                   s.subject_of_row.begin(),
                                   s.subject_of_row.end());
      at += s.x.rows();
    }
    fed::TrainResult res = fed::train_single(sc.fed, pooled);
    report = interpret::biomarker_report(res.model, pf.test, r);
  } else if (st == fed::Strategy::FedAlign) {
    fed::PreparedFold pf = fed::prepare_fold(features, split, fold);
    adapt::AlignConfig ac;
    ac.fed = sc.fed;
    ac.warmup_epochs = sc.align_warmup;
    ac.feature_noise = sc.feature_noise;
    adapt::AlignResult res = adapt::run_fed_align(ac, pf.train);
    nn::MlpModel fused = fuse_models(res.global_gen, res.global_cls);
    report = interpret::biomarker_report(fused, pf.test, r);
  } else if (st == fed::Strategy::Single) {
    // one model per site; cross-site consistency compares their reports
    fed::PreparedFold pf = fed::prepare_fold(features, split, fold);
    fed::FedConfig local = sc.fed;
    local.arch = sc.single_arch.empty() ? fed::mlp_arch(dim, 8) : sc.single_arch;
    report.k = 10;
    for (const fed::SiteData& tr : pf.train) {
      const fed::SiteData* te = nullptr;
      for (const fed::SiteData& t : pf.test)
        if (t.site_id == tr.site_id) te = &t;
      if (!te) continue;
      fed::TrainResult res = fed::train_single(local, tr);
      interpret::BiomarkerReport one =
          interpret::biomarker_report(res.model, {*te}, r);
      report.cells.insert(report.cells.end(), one.cells.begin(),
                          one.cells.end());
    }
    std::map<int, std::vector<const interpret::BiomarkerCell*>> by_class;
    for (const interpret::BiomarkerCell& c : report.cells)
      by_class[c.class_id].push_back(&c);
    for (const auto& [c, cells] : by_class) {
      double total = 0.0;
      int pairs = 0;
      for (std::size_t i = 0; i < cells.size(); ++i)
        for (std::size_t j = i + 1; j < cells.size(); ++j) {
          total += interpret::jaccard(cells[i]->top, cells[j]->top);
          ++pairs;
        }
      report.consistency[c] = pairs == 0 ? 1.0 : total / pairs;
    }
  } else {
    throw std::invalid_argument("interpret does not support strategy '" +
                                strategy + "'");
  }

  fs::create_directories(dir);
  std::ofstream f(fs::path(dir) / "biomarkers.csv");
  f << "site,class,roi_index,roi_name,score,rank\n";
  for (const interpret::BiomarkerCell& cell : report.cells) {
    int rank = 1;
    for (Index roi : cell.top) {
      auto named = roi_labels.find(roi);
      f << cell.site << ',' << cell.class_id << ',' << roi << ','
        << (named == roi_labels.end() ? "" : named->second) << ','
        << fmt(cell.scores.scores(roi)) << ',' << rank++ << '\n';
    }
  }
  for (const auto& [c, jac] : report.consistency)
    f << "consistency," << c << ",-1,," << fmt(jac) << ",0\n";
  return 0;
}

std::vector<SummaryRow> summarize_results(const std::string& results_csv) {
  std::ifstream f(results_csv);
  if (!f) throw std::invalid_argument("cannot open '" + results_csv + "'");
  std::string line;
  if (!std::getline(f, line))
    throw std::invalid_argument("empty results file '" + results_csv + "'");
  std::vector<std::string> header = split_line(line);
  auto col = [&](const std::string& name) {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw std::invalid_argument("results file lacks column '" + name + "'");
  };
  const std::size_t c_strategy = col("strategy"), c_site = col("site"),
                    c_sacc = col("subject_acc"), c_wacc = col("window_acc");

  std::map<std::pair<std::string, std::string>,
           std::pair<std::vector<double>, std::vector<double>>>
      by_cell;  // (strategy, site) -> (subject accs, window accs)
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells = split_line(line);
    auto& bucket = by_cell[{cells[c_strategy], cells[c_site]}];
    bucket.first.push_back(std::strtod(cells[c_sacc].c_str(), nullptr));
    bucket.second.push_back(std::strtod(cells[c_wacc].c_str(), nullptr));
  }
  if (by_cell.empty())
    throw std::invalid_argument("no result rows in '" + results_csv + "'");

  std::map<std::string, std::vector<double>> pooled;
  std::vector<SummaryRow> rows;
  for (const auto& [key, accs] : by_cell) {
    SummaryRow row;
    row.strategy = key.first;
    row.site = key.second;
    row.n = static_cast<int>(accs.first.size());
    double s = 0.0, w = 0.0;
    for (double v : accs.first) s += v;
    for (double v : accs.second) w += v;
    row.mean_subject = s / row.n;
    row.mean_window = w / row.n;
    row.std_subject = sample_std(accs.first, row.mean_subject);
    rows.push_back(row);
    auto& pool = pooled[key.first];
    pool.insert(pool.end(), accs.first.begin(), accs.first.end());
  }

  const auto single = pooled.find("single");
  for (const auto& [strategy, accs] : pooled) {
    SummaryRow row;
    row.strategy = strategy;
    row.site = "(all)";
    row.n = static_cast<int>(accs.size());
    double s = 0.0;
    for (double v : accs) s += v;
    row.mean_subject = s / row.n;
    row.std_subject = sample_std(accs, row.mean_subject);
    row.mean_window = 0.0;
    double w = 0.0;
    {
      int wn = 0;
      for (const auto& [key, cell] : by_cell)
        if (key.first == strategy)
          for (double v : cell.second) {
            w += v;
            ++wn;
          }
      if (wn > 0) row.mean_window = w / wn;
    }
    if (single != pooled.end() && strategy != "single" &&
        accs.size() >= 2 && single->second.size() >= 2)
      row.p_vs_single = stats::welch_t(accs, single->second).p;
    rows.push_back(row);
  }
  return rows;
}

void write_report(const std::vector<SummaryRow>& rows, const std::string& dir,
                  std::ostream& console) {
  fs::create_directories(dir);
  std::ofstream f(fs::path(dir) / "summary.csv");
  f << "strategy,site,n,mean_subject_acc,std_subject_acc,mean_window_acc,"
       "p_vs_single\n";
  for (const SummaryRow& r : rows) {
    f << r.strategy << ',' << r.site << ',' << r.n << ',' << fmt(r.mean_subject)
      << ',' << fmt(r.std_subject) << ',' << fmt(r.mean_window) << ',';
    if (r.p_vs_single >= 0.0) f << fmt(r.p_vs_single);
    f << '\n';
  }

  console << "strategy          site        n   subject acc (mean+/-std)   "
             "window acc\n";
  char buf[160];
  for (const SummaryRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%-17s %-10s %4d   %.4f +/- %.4f          %.4f",
                  r.strategy.c_str(), r.site.c_str(), r.n, r.mean_subject,
                  r.std_subject, r.mean_window);
    console << buf;
    if (r.p_vs_single >= 0.0) {
      std::snprintf(buf, sizeof buf, "   p_vs_single=%.4g", r.p_vs_single);
      console << buf;
    }
    console << '\n';
  }
}

}  // namespace fedfc::harness
