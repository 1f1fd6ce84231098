#include "fedfc/fed/strategy.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

#include "fedfc/adapt/align.hpp"
#include "fedfc/adapt/moe.hpp"
#include "fedfc/data/normalize.hpp"

namespace fedfc::fed {

namespace {

constexpr int kSingleHidden = 8;
constexpr int kPrivateHidden = 8;

SiteData build_site(const std::string& site_id,
                    const std::vector<const data::ConnectivityFeature*>& rows,
                    const std::map<std::string, data::NormStats>& stats) {
  SiteData sd;
  sd.site_id = site_id;
  sd.x.resize(static_cast<Index>(rows.size()), rows.front()->values.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    sd.x.row(static_cast<Index>(r)) =
        data::zscore_apply(stats, site_id, rows[r]->values).transpose();
    sd.y.push_back(rows[r]->label);
    sd.subject_of_row.push_back(rows[r]->subject_id);
  }
  return sd;
}

std::vector<SiteData> build_sites(
    const std::map<std::string, std::vector<const data::ConnectivityFeature*>>&
        by_site,
    const std::map<std::string, data::NormStats>& stats) {
  std::vector<SiteData> out;
  for (const auto& [site, rows] : by_site) {
    if (rows.empty() || !stats.count(site)) continue;
    out.push_back(build_site(site, rows, stats));
  }
  return out;
}

const SiteData* find_site(const std::vector<SiteData>& sites,
                          const std::string& id) {
  for (const SiteData& s : sites)
    if (s.site_id == id) return &s;
  return nullptr;
}

StrategyCell make_cell(Strategy s, const std::string& site,
                       const eval::FoldScore& score) {
  return {strategy_name(s), site,          score.subject_accuracy,
          score.window_accuracy, score.subjects, score.windows};
}

std::string resolve_single_arch(const StrategyConfig& cfg, Index dim) {
  return cfg.single_arch.empty() ? mlp_arch(dim, kSingleHidden)
                                 : cfg.single_arch;
}

}  // namespace

Strategy parse_strategy(const std::string& name) {
  if (name == "single") return Strategy::Single;
  if (name == "cross") return Strategy::Cross;
  if (name == "mix") return Strategy::Mix;
  if (name == "ensemble") return Strategy::Ensemble;
  if (name == "fed") return Strategy::Fed;
  if (name == "fed-moe") return Strategy::FedMoE;
  if (name == "fed-align") return Strategy::FedAlign;
  throw std::invalid_argument("unknown strategy: " + name);
}

std::string strategy_name(Strategy s) {
  switch (s) {
    case Strategy::Single: return "single";
    case Strategy::Cross: return "cross";
    case Strategy::Mix: return "mix";
    case Strategy::Ensemble: return "ensemble";
    case Strategy::Fed: return "fed";
    case Strategy::FedMoE: return "fed-moe";
    case Strategy::FedAlign: return "fed-align";
  }
  throw std::invalid_argument("unknown strategy enum");
}

std::string mlp_arch(Index input_dim, int hidden) {
  return "mlp:" + std::to_string(input_dim) + "-" + std::to_string(hidden) +
         "-2";
}

std::string largest_site(const std::vector<SiteData>& sites,
                         const std::string& exclude) {
  const SiteData* best = nullptr;
  for (const SiteData& s : sites) {
    if (s.site_id == exclude) continue;
    if (!best || s.x.rows() > best->x.rows() ||
        (s.x.rows() == best->x.rows() && s.site_id < best->site_id))
      best = &s;
  }
  if (!best) throw std::invalid_argument("largest_site: no eligible site");
  return best->site_id;
}

PreparedFold prepare_fold(const std::vector<data::ConnectivityFeature>& features,
                          const data::FoldSplit& split, int fold) {
  if (features.empty()) throw std::invalid_argument("prepare_fold: no features");
  std::vector<data::ConnectivityFeature> train_rows;
  std::map<std::string, std::vector<const data::ConnectivityFeature*>> train_by,
      test_by;
  for (const data::ConnectivityFeature& f : features) {
    if (split.fold_of(f.subject_id) == fold)
      test_by[f.site_id].push_back(&f);
    else
      train_rows.push_back(f);
  }
  for (const data::ConnectivityFeature& f : train_rows)
    train_by[f.site_id].push_back(&f);
  const auto stats = data::zscore_fit(train_rows);
  PreparedFold pf;
  pf.train = build_sites(train_by, stats);
  pf.test = build_sites(test_by, stats);
  return pf;
}

std::vector<SiteData> prepare_full(
    const std::vector<data::ConnectivityFeature>& features) {
  if (features.empty()) throw std::invalid_argument("prepare_full: no features");
  std::map<std::string, std::vector<data::ConnectivityFeature>> by_site;
  for (const data::ConnectivityFeature& f : features)
    by_site[f.site_id].push_back(f);
  std::vector<SiteData> out;
  for (const auto& [site, rows] : by_site) {
    const auto stats = data::zscore_fit(rows);
    std::vector<const data::ConnectivityFeature*> ptrs;
    for (const data::ConnectivityFeature& f : rows) ptrs.push_back(&f);
    out.push_back(build_site(site, ptrs, stats));
  }
  return out;
}

std::vector<StrategyCell> run_strategy(
    Strategy strategy, const std::vector<data::ConnectivityFeature>& features,
    const data::FoldSplit& split, int fold, const StrategyConfig& cfg,
    StrategyArtifacts* artifacts) {
  if (features.empty()) throw std::invalid_argument("run_strategy: no features");
  auto log_steps = [&](const std::vector<StepRecord>& steps) {
    if (artifacts)
      artifacts->telemetry.insert(artifacts->telemetry.end(), steps.begin(),
                                  steps.end());
  };
  const Index dim = features.front().values.size();
  std::vector<StrategyCell> cells;

  if (strategy == Strategy::Cross) {
    std::vector<SiteData> full = prepare_full(features);
    const std::string source =
        cfg.cross_site.empty() ? largest_site(full) : cfg.cross_site;
    const SiteData* src = find_site(full, source);
    if (!src)
      throw std::invalid_argument("run_strategy: unknown cross site " + source);
    FedConfig local = cfg.fed;
    local.arch = resolve_single_arch(cfg, dim);
    TrainResult trained = train_single(local, *src);
    log_steps(trained.telemetry);
    for (const SiteData& other : full) {
      if (other.site_id == source) continue;
      cells.push_back(make_cell(strategy, other.site_id,
                                score_model(trained.model, other)));
    }
    return cells;
  }

  PreparedFold pf = prepare_fold(features, split, fold);
  if (pf.train.empty() || pf.test.empty())
    throw std::invalid_argument("run_strategy: fold leaves a side empty");

  switch (strategy) {
    case Strategy::Single: {
      FedConfig local = cfg.fed;
      local.arch = resolve_single_arch(cfg, dim);
      for (const SiteData& tr : pf.train) {
        const SiteData* te = find_site(pf.test, tr.site_id);
        if (!te) continue;
        TrainResult trained = train_single(local, tr);
        log_steps(trained.telemetry);
        cells.push_back(
            make_cell(strategy, tr.site_id, score_model(trained.model, *te)));
      }
      break;
    }
    case Strategy::Mix: {
      SiteData pooled;
      pooled.site_id = "pooled";
      Index rows = 0;
      for (const SiteData& s : pf.train) rows += s.x.rows();
      pooled.x.resize(rows, dim);
      Index at = 0;
      for (const SiteData& s : pf.train) {
        pooled.x.middleRows(at, s.x.rows()) = s.x;
        pooled.y.insert(pooled.y.end(), s.y.begin(), s.y.end());
        pooled.subject_of_row.insert(pooled.subject_of_row.end(),
                                     s.subject_of_row.begin(),
                                     s.subject_of_row.end());
        at += s.x.rows();
      }
      TrainResult trained = train_single(cfg.fed, pooled);
      log_steps(trained.telemetry);
      for (const SiteData& te : pf.test)
        cells.push_back(
            make_cell(strategy, te.site_id, score_model(trained.model, te)));
      break;
    }
    case Strategy::Ensemble: {
      std::vector<SiteData> full = prepare_full(features);
      FedConfig local = cfg.fed;
      local.arch = resolve_single_arch(cfg, dim);
      std::map<std::string, nn::MlpModel> partner_models;
      for (const SiteData& tr : pf.train) {
        const SiteData* te = find_site(pf.test, tr.site_id);
        if (!te) continue;
        TrainResult own = train_single(local, tr);
        log_steps(own.telemetry);
        const std::string partner = largest_site(full, tr.site_id);
        if (!partner_models.count(partner)) {
          TrainResult part = train_single(local, *find_site(full, partner));
          log_steps(part.telemetry);
          partner_models.emplace(partner, std::move(part.model));
        }
        Matrix probs = 0.5 * (predict_probs(own.model, te->x) +
                              predict_probs(partner_models.at(partner), te->x));
        cells.push_back(
            make_cell(strategy, tr.site_id, score_probs(probs, *te)));
      }
      break;
    }
    case Strategy::Fed: {
      FedResult res = run_fed(cfg.fed, pf.train);
      log_steps(res.telemetry);
      for (const SiteData& te : pf.test)
        cells.push_back(
            make_cell(strategy, te.site_id, score_model(res.global, te)));
      break;
    }
    case Strategy::FedMoE: {
      adapt::MoEResult res =
          adapt::train_fed_moe(cfg.fed, cfg.moe_gate_on_output, kPrivateHidden,
                               pf.train, pf.test);
      log_steps(res.telemetry);
      for (const adapt::MoESiteResult& s : res.sites) {
        cells.push_back(make_cell(strategy, s.site, s.score));
        if (artifacts) artifacts->gate_values[s.site] = s.gate_values;
      }
      break;
    }
    case Strategy::FedAlign: {
      adapt::AlignConfig ac;
      ac.fed = cfg.fed;
      ac.warmup_epochs = cfg.align_warmup;
      ac.feature_noise = cfg.feature_noise;
      adapt::AlignResult res = adapt::run_fed_align(ac, pf.train);
      log_steps(res.telemetry);
      if (artifacts) {
        // probe features go through each site's own generator, before and
        // after the alignment phase; the probe fits on the training fold and
        // scores on the held-out fold
        auto capture = [&](const std::vector<SiteData>& part,
                           std::map<std::string, Matrix>& pre,
                           std::map<std::string, Matrix>& post) {
          for (const SiteData& sd : part) {
            const auto at = std::find(res.site_ids.begin(),
                                      res.site_ids.end(), sd.site_id);
            if (at == res.site_ids.end()) continue;
            const std::size_t i =
                static_cast<std::size_t>(at - res.site_ids.begin());
            pre[sd.site_id] =
                nn::forward(res.site_gens_pre[i], sd.x, nn::Mode::Eval);
            post[sd.site_id] =
                nn::forward(res.site_gens[i], sd.x, nn::Mode::Eval);
          }
        };
        capture(pf.train, artifacts->train_features_pre,
                artifacts->train_features_post);
        capture(pf.test, artifacts->features_pre, artifacts->features_post);
      }
      for (const SiteData& te : pf.test) {
        Matrix probs = adapt::align_predict(res.global_gen, res.global_cls, te.x);
        cells.push_back(make_cell(strategy, te.site_id, score_probs(probs, te)));
      }
      break;
    }
    case Strategy::Cross:
      break;  // handled above
  }
  return cells;
}

}  // namespace fedfc::fed
