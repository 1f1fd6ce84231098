#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "fedfc/data/csv_io.hpp"
#include "fedfc/data/features.hpp"
#include "fedfc/data/folds.hpp"
#include "fedfc/data/normalize.hpp"
#include "fedfc/data/synthetic.hpp"
#include "support/oracles.hpp"

using namespace fedfc;
using namespace fedfc::data;

TEST_CASE("window counts for the four cohort lengths") {
  Rng rng(1);
  for (auto [frames, expected] :
       std::vector<std::pair<int, int>>{{176, 145}, {296, 265}, {236, 205}, {116, 85}}) {
    Matrix series = oracles::random_matrix(frames, 3, rng);
    CHECK(sliding_windows(series, 32, 1).size() == static_cast<std::size_t>(expected));
  }
}

TEST_CASE("sliding windows slice with the given stride") {
  Matrix series(10, 2);
  for (Index r = 0; r < 10; ++r) {
    series(r, 0) = static_cast<double>(r);
    series(r, 1) = -static_cast<double>(r);
  }
  std::vector<Matrix> w = sliding_windows(series, 4, 3);
  REQUIRE(w.size() == 3);  // floor((10-4)/3)+1
  CHECK(w[0](0, 0) == 0.0);
  CHECK(w[1](0, 0) == 3.0);
  CHECK(w[2](0, 0) == 6.0);
  CHECK(w[2](3, 0) == 9.0);

  CHECK_THROWS_AS(sliding_windows(Matrix::Zero(5, 2), 6, 1), std::invalid_argument);
  CHECK_THROWS_AS(sliding_windows(series, 0, 1), std::invalid_argument);
  CHECK_THROWS_AS(sliding_windows(series, 4, 0), std::invalid_argument);
}

TEST_CASE("pearson correlation matches the direct formula") {
  Rng rng(7);
  Matrix w = oracles::random_matrix(32, 6, rng);
  Matrix corr = pearson_correlation(w);

  for (Index i = 0; i < 6; ++i) {
    CHECK(corr(i, i) == 1.0);
    for (Index j = 0; j < 6; ++j) {
      CHECK(corr(i, j) == corr(j, i));
      CHECK(std::abs(corr(i, j)) <= 1.0 + 1e-12);
      if (i == j) continue;
      double mi = w.col(i).mean(), mj = w.col(j).mean();
      double num = 0.0, di = 0.0, dj = 0.0;
      for (Index t = 0; t < 32; ++t) {
        num += (w(t, i) - mi) * (w(t, j) - mj);
        di += (w(t, i) - mi) * (w(t, i) - mi);
        dj += (w(t, j) - mj) * (w(t, j) - mj);
      }
      CHECK(corr(i, j) == doctest::Approx(num / std::sqrt(di * dj)).epsilon(1e-12));
    }
  }
}

TEST_CASE("pearson degenerate columns") {
  Rng rng(9);
  Matrix w(16, 3);
  for (Index t = 0; t < 16; ++t) {
    w(t, 0) = rng.normal();
    w(t, 1) = -w(t, 0);
    w(t, 2) = 2.5;  // constant
  }
  Matrix corr = pearson_correlation(w);
  CHECK(corr(0, 1) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(corr(0, 2) == 0.0);
  CHECK(corr(1, 2) == 0.0);
  CHECK(corr(2, 2) == 1.0);

  Matrix two(16, 2);
  two.col(0) = w.col(0);
  two.col(1) = w.col(0);
  CHECK(pearson_correlation(two)(0, 1) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("fisher transform values and clamping") {
  Matrix r(1, 4);
  r << 0.5, -0.3, 1.0, -1.0;
  Matrix z = fisher_z(r);
  CHECK(z(0, 0) == doctest::Approx(0.5493061443340548).epsilon(1e-12));
  CHECK(z(0, 1) == doctest::Approx(-0.30951960420311175).epsilon(1e-12));
  CHECK(z(0, 2) == doctest::Approx(8.405621390759132).epsilon(1e-9));
  CHECK(z(0, 3) == doctest::Approx(-8.405621390759132).epsilon(1e-9));
  CHECK(z.allFinite());
}

TEST_CASE("upper triangle flattening is row-major and invertible") {
  Matrix sym(3, 3);
  sym << 1.0, 0.1, 0.2,
         0.1, 1.0, 0.3,
         0.2, 0.3, 1.0;
  Vector flat = flatten_upper(sym);
  REQUIRE(flat.size() == 3);
  CHECK(flat(0) == 0.1);
  CHECK(flat(1) == 0.2);
  CHECK(flat(2) == 0.3);

  Matrix back = unflatten_upper(flat, 3);
  CHECK(back(0, 1) == 0.1);
  CHECK(back(2, 1) == 0.3);
  CHECK(back(1, 1) == 0.0);  // diagonal not represented

  CHECK(flatten_upper(Matrix::Identity(111, 111)).size() == 6105);
  CHECK(flatten_upper(Matrix::Identity(2, 2)).size() == 1);
  CHECK_THROWS_AS(flatten_upper(Matrix::Zero(2, 3)), std::invalid_argument);
  CHECK_THROWS_AS(unflatten_upper(flat, 4), std::invalid_argument);
}

TEST_CASE("subject feature pipeline shape") {
  RoiTimeSeries ts;
  ts.subject_id = "s1";
  ts.site_id = "a";
  ts.label = 1;
  Rng rng(3);
  ts.values = oracles::random_matrix(40, 8, rng);
  std::vector<ConnectivityFeature> feats = subject_features(ts, 32, 1);
  REQUIRE(feats.size() == 9);
  for (std::size_t i = 0; i < feats.size(); ++i) {
    CHECK(feats[i].window == static_cast<int>(i));
    CHECK(feats[i].values.size() == 28);
    CHECK(feats[i].values.allFinite());
    CHECK(feats[i].label == 1);
  }
}

TEST_CASE("zscore fits per site on training data only") {
  Rng rng(17);
  std::vector<ConnectivityFeature> train;
  for (int site = 0; site < 2; ++site)
    for (int i = 0; i < 20; ++i) {
      ConnectivityFeature f;
      f.subject_id = "s" + std::to_string(i);
      f.site_id = site == 0 ? "a" : "b";
      f.values = oracles::random_matrix(6, 1, rng, site == 0 ? 1.0 : 3.0).col(0);
      f.values.array() += site == 0 ? 0.0 : 5.0;
      train.push_back(f);
    }
  auto stats = zscore_fit(train);
  REQUIRE(stats.count("a") == 1);
  REQUIRE(stats.count("b") == 1);

  // oracle: two-pass population moments per site
  for (const std::string site : {"a", "b"}) {
    Vector sum = Vector::Zero(6), ss = Vector::Zero(6);
    int n = 0;
    for (const auto& f : train)
      if (f.site_id == site) {
        sum += f.values;
        ++n;
      }
    Vector mean = sum / n;
    for (const auto& f : train)
      if (f.site_id == site) ss += (f.values - mean).cwiseProduct(f.values - mean);
    Vector sd = (ss / n).cwiseSqrt();
    for (Index k = 0; k < 6; ++k) {
      CHECK(stats.at(site).mean(k) == doctest::Approx(mean(k)).epsilon(1e-12));
      CHECK(stats.at(site).std(k) == doctest::Approx(sd(k)).epsilon(1e-12));
    }
  }

  // applying the training stats to the training rows recenters them
  Vector acc = Vector::Zero(6);
  int n = 0;
  for (const auto& f : train)
    if (f.site_id == "a") {
      acc += zscore_apply(stats, "a", f.values);
      ++n;
    }
  CHECK((acc / n).cwiseAbs().maxCoeff() < 1e-12);

  // a held-out vector is normalized with the training statistics, not its own
  Vector probe = Vector::Constant(6, 100.0);
  Vector z = zscore_apply(stats, "a", probe);
  for (Index k = 0; k < 6; ++k)
    CHECK(z(k) == doctest::Approx((100.0 - stats.at("a").mean(k)) / stats.at("a").std(k))
                      .epsilon(1e-12));

  CHECK_THROWS_AS(zscore_apply(stats, "nowhere", probe), std::invalid_argument);
}

TEST_CASE("zscore floors tiny deviations") {
  std::vector<ConnectivityFeature> train;
  for (int i = 0; i < 5; ++i) {
    ConnectivityFeature f;
    f.site_id = "a";
    f.values = Vector::Constant(2, 3.0);  // zero variance
    train.push_back(f);
  }
  auto stats = zscore_fit(train);
  CHECK(stats.at("a").std(0) == 1e-8);
  Vector z = zscore_apply(stats, "a", Vector::Constant(2, 3.0));
  CHECK(z.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("subject kfold balance and determinism") {
  std::vector<SubjectInfo> subjects;
  for (int i = 0; i < 52; ++i)
    subjects.push_back({"s" + std::to_string(i), "usm", i % 2});

  FoldSplit split = subject_kfold(subjects, 5, 99);
  std::map<std::pair<int, int>, int> sizes;  // (label, fold) -> count
  for (const SubjectInfo& s : subjects) {
    const int f = split.fold_of(s.subject_id);
    CHECK(f >= 0);
    CHECK(f < 5);
    sizes[{s.label, f}] += 1;
  }
  for (int label = 0; label < 2; ++label) {
    int lo = 1 << 20, hi = 0;
    for (int f = 0; f < 5; ++f) {
      lo = std::min(lo, sizes[{label, f}]);
      hi = std::max(hi, sizes[{label, f}]);
    }
    CHECK(hi - lo <= 1);
  }

  FoldSplit again = subject_kfold(subjects, 5, 99);
  CHECK(split.assignment == again.assignment);
  FoldSplit other = subject_kfold(subjects, 5, 100);
  CHECK(split.assignment != other.assignment);

  CHECK_THROWS_AS(subject_kfold(subjects, 1, 0), std::invalid_argument);
  CHECK_THROWS_AS(subject_kfold({}, 5, 0), std::invalid_argument);
  CHECK_THROWS_AS(split.fold_of("missing"), std::invalid_argument);
}

TEST_CASE("kfold single-site class sizes for 52 subjects") {
  std::vector<SubjectInfo> subjects;
  for (int i = 0; i < 52; ++i) subjects.push_back({"s" + std::to_string(i), "usm", 0});
  FoldSplit split = subject_kfold(subjects, 5, 3);
  std::vector<int> counts(5, 0);
  for (const auto& [id, f] : split.assignment) counts[static_cast<std::size_t>(f)] += 1;
  std::multiset<int> got(counts.begin(), counts.end());
  CHECK(got == std::multiset<int>{10, 10, 10, 11, 11});
}

TEST_CASE("synthetic generator determinism and structure") {
  SynthConfig cfg;
  cfg.n_sites = 2;
  cfg.subjects_per_class = 3;
  cfg.rois = 12;
  cfg.frames = 20;
  cfg.signal_strength = 0.3;
  cfg.shift_strength = 0.2;
  cfg.informative_roi_count = 4;
  cfg.seed = 5;

  SynthDataset a = synth_generate(cfg);
  SynthDataset b = synth_generate(cfg);
  REQUIRE(a.subjects.size() == 12);
  CHECK(a.informative_rois == b.informative_rois);
  for (std::size_t i = 0; i < a.subjects.size(); ++i) {
    CHECK(a.subjects[i].subject_id == b.subjects[i].subject_id);
    CHECK((a.subjects[i].values - b.subjects[i].values).cwiseAbs().maxCoeff() == 0.0);
  }

  CHECK(a.informative_rois.size() == 4);
  CHECK(std::is_sorted(a.informative_rois.begin(), a.informative_rois.end()));
  std::set<int> unique(a.informative_rois.begin(), a.informative_rois.end());
  CHECK(unique.size() == 4);
  for (int roi : a.informative_rois) {
    CHECK(roi >= 0);
    CHECK(roi < 12);
  }

  int cases = 0;
  for (const RoiTimeSeries& ts : a.subjects) cases += ts.label;
  CHECK(cases == 6);

  // the planted contrast moves only informative pairs of the class template
  const Matrix diff = (a.class_templates[1] - a.class_templates[0]).cwiseAbs();
  std::set<int> planted(a.informative_rois.begin(), a.informative_rois.end());
  for (Index i = 0; i < 12; ++i)
    for (Index j = 0; j < 12; ++j) {
      if (planted.count(static_cast<int>(i)) && planted.count(static_cast<int>(j)) && i != j)
        CHECK(diff(i, j) > 0.01);
    }
}

TEST_CASE("zero shift makes sites identical, zero signal makes classes identical") {
  SynthConfig cfg;
  cfg.n_sites = 3;
  cfg.subjects_per_class = 2;
  cfg.rois = 10;
  cfg.frames = 16;
  cfg.signal_strength = 0.25;
  cfg.shift_strength = 0.0;
  cfg.seed = 11;

  SynthDataset d = synth_generate(cfg);
  for (int cls = 0; cls < 2; ++cls) {
    const Matrix& first = d.site_covariances.at({"site0", cls});
    for (int s = 1; s < 3; ++s) {
      const Matrix& other = d.site_covariances.at({"site" + std::to_string(s), cls});
      CHECK((first - other).cwiseAbs().maxCoeff() == 0.0);
    }
  }

  cfg.signal_strength = 0.0;
  SynthDataset e = synth_generate(cfg);
  CHECK((e.class_templates[0] - e.class_templates[1]).cwiseAbs().maxCoeff() == 0.0);

  cfg.shift_strength = 0.4;
  SynthDataset f = synth_generate(cfg);
  CHECK((f.site_covariances.at({"site0", 0}) - f.site_covariances.at({"site1", 0}))
            .cwiseAbs()
            .maxCoeff() > 1e-3);
}

TEST_CASE("site shift overrides apply per site") {
  SynthConfig cfg;
  cfg.n_sites = 2;
  cfg.subjects_per_class = 1;
  cfg.rois = 8;
  cfg.frames = 12;
  cfg.informative_roi_count = 3;
  cfg.shift_strength = 0.0;
  cfg.site_shift["site1"] = 0.8;
  cfg.seed = 2;
  SynthDataset d = synth_generate(cfg);
  CHECK((d.site_covariances.at({"site0", 0}) - d.class_templates[0]).cwiseAbs().maxCoeff() ==
        0.0);
  CHECK((d.site_covariances.at({"site1", 0}) - d.class_templates[0]).cwiseAbs().maxCoeff() >
        1e-3);
}

TEST_CASE("long series realize the target correlation") {
  SynthConfig cfg;
  cfg.n_sites = 1;
  cfg.subjects_per_class = 1;
  cfg.rois = 10;
  cfg.frames = 10000;
  cfg.signal_strength = 0.3;
  cfg.shift_strength = 0.0;
  cfg.informative_roi_count = 4;
  cfg.seed = 23;

  SynthDataset d = synth_generate(cfg);
  for (const RoiTimeSeries& ts : d.subjects) {
    Matrix emp = pearson_correlation(ts.values);
    const Matrix& target = d.class_templates[static_cast<std::size_t>(ts.label)];
    const double err = (emp - target).norm() / target.norm();
    CHECK(err < 0.05);
  }
}

TEST_CASE("synthetic generator rejects bad configs") {
  SynthConfig cfg;
  cfg.rois = 1;
  CHECK_THROWS_AS(synth_generate(cfg), std::invalid_argument);
  cfg.rois = 10;
  cfg.informative_roi_count = 11;
  CHECK_THROWS_AS(synth_generate(cfg), std::invalid_argument);
  cfg.informative_roi_count = 2;
  cfg.signal_strength = -0.1;
  CHECK_THROWS_AS(synth_generate(cfg), std::invalid_argument);
}

TEST_CASE("roi csv export and reload round trip") {
  namespace fs = std::filesystem;
  SynthConfig cfg;
  cfg.n_sites = 2;
  cfg.subjects_per_class = 2;
  cfg.rois = 6;
  cfg.frames = 10;
  cfg.informative_roi_count = 2;
  cfg.seed = 31;
  SynthDataset d = synth_generate(cfg);

  const fs::path dir = fs::temp_directory_path() / "fedfc_csv_roundtrip";
  fs::remove_all(dir);
  export_synth_dataset(d, dir.string());

  std::vector<RoiTimeSeries> series = load_roi_csv((dir / "roi").string());
  auto phenotype = load_phenotype_csv((dir / "phenotype.csv").string());
  int dropped = -1;
  std::vector<RoiTimeSeries> joined = join_phenotype(std::move(series), phenotype, &dropped);

  REQUIRE(joined.size() == d.subjects.size());
  CHECK(dropped == 0);
  for (const RoiTimeSeries& orig : d.subjects) {
    const RoiTimeSeries* found = nullptr;
    for (const RoiTimeSeries& got : joined)
      if (got.subject_id == orig.subject_id) found = &got;
    REQUIRE(found != nullptr);
    CHECK(found->site_id == orig.site_id);
    CHECK(found->label == orig.label);
    CHECK((found->values - orig.values).cwiseAbs().maxCoeff() == 0.0);
  }
  fs::remove_all(dir);
}

TEST_CASE("roi csv parsing errors and headers") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "fedfc_csv_bad";
  fs::create_directories(dir);

  {
    std::ofstream os(dir / "ragged.csv");
    os << "1.0,2.0\n3.0\n";
  }
  CHECK_THROWS_WITH_AS(load_roi_csv((dir / "ragged.csv").string()),
                       doctest::Contains("row 2"), std::runtime_error);

  {
    std::ofstream os(dir / "header.csv");
    os << "roi_a,roi_b\n1.0,2.0\n3.0,4.0\n";
  }
  std::vector<RoiTimeSeries> ok = load_roi_csv((dir / "header.csv").string());
  REQUIRE(ok.size() == 1);
  CHECK(ok[0].subject_id == "header");
  CHECK(ok[0].values.rows() == 2);
  CHECK(ok[0].values(1, 1) == 4.0);

  {
    std::ofstream os(dir / "midtext.csv");
    os << "1.0,2.0\nbad,4.0\n";
  }
  CHECK_THROWS_AS(load_roi_csv((dir / "midtext.csv").string()), std::runtime_error);

  {
    std::ofstream os(dir / "empty.csv");
  }
  CHECK_THROWS_AS(load_roi_csv((dir / "empty.csv").string()), std::runtime_error);
  fs::remove_all(dir);
}

TEST_CASE("phenotype parsing and join bookkeeping") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "fedfc_pheno";
  fs::create_directories(dir);

  {
    std::ofstream os(dir / "pheno.csv");
    os << "age,label,subject_id,site_id\n"
       << "41,ASD,p1,nyu\n"
       << "33,HC,p2,nyu\n"
       << "27,1,p3,um\n"
       << "29,0,p4,um\n";
  }
  auto pheno = load_phenotype_csv((dir / "pheno.csv").string());
  REQUIRE(pheno.size() == 4);
  CHECK(pheno.at("p1").label == 1);
  CHECK(pheno.at("p2").label == 0);
  CHECK(pheno.at("p3").label == 1);
  CHECK(pheno.at("p4").label == 0);
  CHECK(pheno.at("p3").site_id == "um");

  std::vector<RoiTimeSeries> series(3);
  series[0].subject_id = "p1";
  series[1].subject_id = "p2";
  series[2].subject_id = "stranger";
  for (RoiTimeSeries& ts : series) ts.values = Matrix::Zero(4, 2);

  int dropped = 0;
  std::vector<RoiTimeSeries> joined = join_phenotype(std::move(series), pheno, &dropped);
  REQUIRE(joined.size() == 2);
  CHECK(dropped == 3);  // one unmatched series, two unmatched phenotype rows
  CHECK(joined[0].site_id == "nyu");
  CHECK(joined[0].label == 1);

  {
    std::ofstream os(dir / "bad_label.csv");
    os << "subject_id,site_id,label\np1,nyu,maybe\n";
  }
  CHECK_THROWS_AS(load_phenotype_csv((dir / "bad_label.csv").string()), std::runtime_error);

  {
    std::ofstream os(dir / "no_col.csv");
    os << "subject_id,label\np1,1\n";
  }
  CHECK_THROWS_AS(load_phenotype_csv((dir / "no_col.csv").string()), std::runtime_error);

  {
    std::ofstream os(dir / "dup.csv");
    os << "subject_id,site_id,label\np1,nyu,1\np1,nyu,0\n";
  }
  CHECK_THROWS_AS(load_phenotype_csv((dir / "dup.csv").string()), std::runtime_error);
  fs::remove_all(dir);
}
