#include "fedfc/harness/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "fedfc/fed/strategy.hpp"

namespace fedfc::harness {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& where, const std::string& what) {
  throw std::invalid_argument("config: " + where + ": " + what);
}

void expect_keys(const json& j, const std::string& where,
                 std::initializer_list<const char*> keys) {
  if (!j.is_object()) fail(where, "expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : keys)
      if (it.key() == k) {
        known = true;
        break;
      }
    if (!known) fail(where, "unknown key '" + it.key() + "'");
  }
}

template <typename T>
void read(const json& j, const std::string& where, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    j.at(key).get_to(out);
  } catch (const json::exception& e) {
    fail(where + "." + key, e.what());
  }
}

void read_mechanism(const json& j, const std::string& where, const char* key,
                    privacy::Mechanism& out) {
  if (!j.contains(key)) return;
  std::string name;
  read(j, where, key, name);
  try {
    out = privacy::parse_mechanism(name);
  } catch (const std::exception& e) {
    fail(where + "." + key, e.what());
  }
}

void parse_synth(const json& j, const std::string& where,
                 data::SynthConfig& out) {
  expect_keys(j, where,
              {"sites", "subjects_per_class", "rois", "frames", "signal",
               "shift", "informative_rois", "seed", "site_shift",
               "site_smooth", "site_spike"});
  read(j, where, "sites", out.n_sites);
  read(j, where, "subjects_per_class", out.subjects_per_class);
  read(j, where, "rois", out.rois);
  read(j, where, "frames", out.frames);
  read(j, where, "signal", out.signal_strength);
  read(j, where, "shift", out.shift_strength);
  read(j, where, "informative_rois", out.informative_roi_count);
  read(j, where, "seed", out.seed);
  auto site_map = [&](const char* key, std::map<std::string, double>& into) {
    if (!j.contains(key)) return;
    const json& ss = j.at(key);
    if (!ss.is_object()) fail(where + "." + key, "expected an object");
    for (auto it = ss.begin(); it != ss.end(); ++it) {
      if (!it.value().is_number())
        fail(where + "." + key + "." + it.key(), "expected a number");
      into[it.key()] = it.value().get<double>();
    }
  };
  site_map("site_shift", out.site_shift);
  site_map("site_smooth", out.site_smooth);
  site_map("site_spike", out.site_spike);
}

void parse_noise(const json& j, const std::string& where,
                 privacy::NoiseSpec& out) {
  expect_keys(j, where, {"mechanism", "alpha", "seed"});
  read_mechanism(j, where, "mechanism", out.mechanism);
  read(j, where, "alpha", out.alpha);
  read(j, where, "seed", out.seed);
}

void parse_data(const json& j, DataConfig& out) {
  expect_keys(j, "data",
              {"source", "synth", "roi_dir", "phenotype", "features_csv",
               "window", "stride"});
  read(j, "data", "source", out.source);
  read(j, "data", "roi_dir", out.roi_dir);
  read(j, "data", "phenotype", out.phenotype);
  read(j, "data", "features_csv", out.features_csv);
  read(j, "data", "window", out.window);
  read(j, "data", "stride", out.stride);
  if (j.contains("synth")) parse_synth(j.at("synth"), "data.synth", out.synth);
}

void parse_train(const json& j, ExperimentConfig& out) {
  expect_keys(j, "train",
              {"epochs", "steps_per_epoch", "tau", "arch", "lr", "single_arch",
               "cross_site", "moe_gate_on_output", "align_warmup"});
  read(j, "train", "epochs", out.fed.epochs);
  read(j, "train", "steps_per_epoch", out.fed.steps_per_epoch);
  read(j, "train", "tau", out.fed.tau);
  read(j, "train", "arch", out.fed.arch);
  read(j, "train", "lr", out.fed.lr);
  read(j, "train", "single_arch", out.single_arch);
  read(j, "train", "cross_site", out.cross_site);
  read(j, "train", "moe_gate_on_output", out.moe_gate_on_output);
  read(j, "train", "align_warmup", out.align_warmup);
}

}  // namespace

ExperimentConfig::ExperimentConfig() {
  fed.noise = {privacy::Mechanism::Gaussian, 0.01, 0};
  for (privacy::Mechanism m :
       {privacy::Mechanism::Gaussian, privacy::Mechanism::Laplace})
    for (double alpha : {0.001, 0.01, 0.1, 1.0})
      noise_grid.push_back({m, alpha});
}

ExperimentConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  ExperimentConfig cfg;
  expect_keys(j, "(root)",
              {"data", "strategies", "train", "noise", "feature_noise",
               "delta", "folds", "fold_subset", "fold_seed", "seeds",
               "tau_grid", "noise_grid", "out", "threads", "telemetry"});
  if (j.contains("data")) parse_data(j.at("data"), cfg.data);
  read(j, "(root)", "strategies", cfg.strategies);
  if (j.contains("train")) parse_train(j.at("train"), cfg);
  if (j.contains("noise")) parse_noise(j.at("noise"), "noise", cfg.fed.noise);
  if (j.contains("feature_noise"))
    parse_noise(j.at("feature_noise"), "feature_noise", cfg.feature_noise);
  read(j, "(root)", "delta", cfg.delta);
  read(j, "(root)", "folds", cfg.folds);
  read(j, "(root)", "fold_subset", cfg.fold_subset);
  read(j, "(root)", "fold_seed", cfg.fold_seed);
  read(j, "(root)", "seeds", cfg.seeds);
  read(j, "(root)", "tau_grid", cfg.tau_grid);
  if (j.contains("noise_grid")) {
    const json& grid = j.at("noise_grid");
    if (!grid.is_array()) fail("noise_grid", "expected an array");
    cfg.noise_grid.clear();
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const std::string where = "noise_grid[" + std::to_string(i) + "]";
      expect_keys(grid[i], where, {"mechanism", "alpha"});
      NoisePoint p;
      read_mechanism(grid[i], where, "mechanism", p.mechanism);
      read(grid[i], where, "alpha", p.alpha);
      cfg.noise_grid.push_back(p);
    }
  }
  read(j, "(root)", "out", cfg.out);
  read(j, "(root)", "threads", cfg.threads);
  read(j, "(root)", "telemetry", cfg.telemetry);
  validate_config(cfg);
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string dump_config(const ExperimentConfig& cfg) {
  json synth{{"sites", cfg.data.synth.n_sites},
             {"subjects_per_class", cfg.data.synth.subjects_per_class},
             {"rois", cfg.data.synth.rois},
             {"frames", cfg.data.synth.frames},
             {"signal", cfg.data.synth.signal_strength},
             {"shift", cfg.data.synth.shift_strength},
             {"informative_rois", cfg.data.synth.informative_roi_count},
             {"seed", cfg.data.synth.seed},
             {"site_shift", json::object()},
             {"site_smooth", json::object()},
             {"site_spike", json::object()}};
  for (const auto& [site, shift] : cfg.data.synth.site_shift)
    synth["site_shift"][site] = shift;
  for (const auto& [site, smooth] : cfg.data.synth.site_smooth)
    synth["site_smooth"][site] = smooth;
  for (const auto& [site, rate] : cfg.data.synth.site_spike)
    synth["site_spike"][site] = rate;
  json grid = json::array();
  for (const NoisePoint& p : cfg.noise_grid)
    grid.push_back({{"mechanism", privacy::mechanism_name(p.mechanism)},
                    {"alpha", p.alpha}});
  json j{
      {"data",
       {{"source", cfg.data.source},
        {"synth", synth},
        {"roi_dir", cfg.data.roi_dir},
        {"phenotype", cfg.data.phenotype},
        {"features_csv", cfg.data.features_csv},
        {"window", cfg.data.window},
        {"stride", cfg.data.stride}}},
      {"strategies", cfg.strategies},
      {"train",
       {{"epochs", cfg.fed.epochs},
        {"steps_per_epoch", cfg.fed.steps_per_epoch},
        {"tau", cfg.fed.tau},
        {"arch", cfg.fed.arch},
        {"lr", cfg.fed.lr},
        {"single_arch", cfg.single_arch},
        {"cross_site", cfg.cross_site},
        {"moe_gate_on_output", cfg.moe_gate_on_output},
        {"align_warmup", cfg.align_warmup}}},
      {"noise",
       {{"mechanism", privacy::mechanism_name(cfg.fed.noise.mechanism)},
        {"alpha", cfg.fed.noise.alpha},
        {"seed", cfg.fed.noise.seed}}},
      {"feature_noise",
       {{"mechanism", privacy::mechanism_name(cfg.feature_noise.mechanism)},
        {"alpha", cfg.feature_noise.alpha},
        {"seed", cfg.feature_noise.seed}}},
      {"delta", cfg.delta},
      {"folds", cfg.folds},
      {"fold_subset", cfg.fold_subset},
      {"fold_seed", cfg.fold_seed},
      {"seeds", cfg.seeds},
      {"tau_grid", cfg.tau_grid},
      {"noise_grid", grid},
      {"out", cfg.out},
      {"threads", cfg.threads},
      {"telemetry", cfg.telemetry}};
  return j.dump(2);
}

void validate_config(const ExperimentConfig& cfg) {
  if (cfg.strategies.empty()) fail("strategies", "must not be empty");
  std::set<std::string> seen;
  for (const std::string& s : cfg.strategies) {
    fed::parse_strategy(s);  // throws on unknown names
    if (!seen.insert(s).second) fail("strategies", "duplicate entry '" + s + "'");
  }
  if (cfg.seeds.empty()) fail("seeds", "must not be empty");
  if (cfg.data.source != "synth" && cfg.data.source != "roi-dir" &&
      cfg.data.source != "features-csv")
    fail("data.source", "expected synth, roi-dir or features-csv");
  if (cfg.data.source == "roi-dir" &&
      (cfg.data.roi_dir.empty() || cfg.data.phenotype.empty()))
    fail("data", "roi-dir source needs roi_dir and phenotype");
  if (cfg.data.source == "features-csv" && cfg.data.features_csv.empty())
    fail("data.features_csv", "required for the features-csv source");
  if (cfg.data.window < 2) fail("data.window", "must be at least 2");
  if (cfg.data.stride < 1) fail("data.stride", "must be at least 1");
  if (cfg.fed.epochs < 1) fail("train.epochs", "must be at least 1");
  if (cfg.fed.steps_per_epoch < 1)
    fail("train.steps_per_epoch", "must be at least 1");
  if (cfg.fed.tau < 1) fail("train.tau", "must be at least 1");
  if (cfg.align_warmup < 0) fail("train.align_warmup", "must not be negative");
  if (cfg.fed.noise.alpha < 0) fail("noise.alpha", "must not be negative");
  if (cfg.delta <= 0 || cfg.delta >= 1) fail("delta", "must lie in (0, 1)");
  if (cfg.folds < 2) fail("folds", "must be at least 2");
  for (int f : cfg.fold_subset)
    if (f < 0 || f >= cfg.folds) fail("fold_subset", "fold index out of range");
  for (int t : cfg.tau_grid)
    if (t < 1) fail("tau_grid", "entries must be at least 1");
  for (const NoisePoint& p : cfg.noise_grid)
    if (p.alpha < 0) fail("noise_grid", "alpha must not be negative");
  if (cfg.threads < 1) fail("threads", "must be at least 1");
  if (cfg.out.empty()) fail("out", "must not be empty");
}

}  // namespace fedfc::harness
