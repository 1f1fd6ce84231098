#include "fedfc/data/csv_io.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace fs = std::filesystem;

namespace fedfc::data {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    std::size_t comma = line.find(',', pos);
    std::string tok = line.substr(pos, comma == std::string::npos ? std::string::npos
                                                                  : comma - pos);
    while (!tok.empty() && (tok.back() == '\r' || tok.back() == ' ')) tok.pop_back();
    std::size_t first = tok.find_first_not_of(' ');
    out.push_back(first == std::string::npos ? std::string() : tok.substr(first));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

bool parse_double(const std::string& tok, double& out) {
  const char* begin = tok.data();
  const char* end = begin + tok.size();
  auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && ptr == end && !tok.empty();
}

RoiTimeSeries load_one_series(const fs::path& file) {
  std::ifstream is(file);
  if (!is) throw std::runtime_error("load_roi_csv: cannot open " + file.string());

  RoiTimeSeries ts;
  ts.subject_id = file.stem().string();

  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  std::size_t width = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    std::vector<std::string> toks = split_csv_line(line);
    std::vector<double> vals(toks.size());
    bool numeric = true;
    for (std::size_t i = 0; i < toks.size(); ++i)
      if (!parse_double(toks[i], vals[i])) {
        numeric = false;
        break;
      }
    if (!numeric) {
      if (rows.empty()) continue;  // header row
      throw std::runtime_error("load_roi_csv: non-numeric value at " + file.string() +
                               " row " + std::to_string(lineno));
    }
    if (width == 0) width = vals.size();
    if (vals.size() != width)
      throw std::runtime_error("load_roi_csv: ragged row at " + file.string() +
                               " row " + std::to_string(lineno) + " (expected " +
                               std::to_string(width) + " columns, got " +
                               std::to_string(vals.size()) + ")");
    rows.push_back(std::move(vals));
  }
  if (rows.empty())
    throw std::runtime_error("load_roi_csv: no data rows in " + file.string());

  ts.values = Matrix(static_cast<Index>(rows.size()), static_cast<Index>(width));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < width; ++c)
      ts.values(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
  return ts;
}

}  // namespace

std::vector<RoiTimeSeries> load_roi_csv(const std::string& path) {
  std::vector<RoiTimeSeries> out;
  if (fs::is_directory(path)) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(path))
      if (entry.is_regular_file() && entry.path().extension() == ".csv")
        files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    if (files.empty())
      throw std::runtime_error("load_roi_csv: no .csv files under " + path);
    for (const fs::path& f : files) out.push_back(load_one_series(f));
  } else {
    out.push_back(load_one_series(path));
  }
  return out;
}

std::map<std::string, PhenotypeRecord> load_phenotype_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("load_phenotype_csv: cannot open " + path);

  std::string line;
  if (!std::getline(is, line))
    throw std::runtime_error("load_phenotype_csv: empty file " + path);
  std::vector<std::string> header = split_csv_line(line);
  int id_col = -1, site_col = -1, label_col = -1;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == "subject_id") id_col = static_cast<int>(i);
    else if (header[i] == "site_id") site_col = static_cast<int>(i);
    else if (header[i] == "label") label_col = static_cast<int>(i);
  }
  if (id_col < 0 || site_col < 0 || label_col < 0)
    throw std::runtime_error(
        "load_phenotype_csv: header must contain subject_id, site_id and label (" +
        path + ")");

  std::map<std::string, PhenotypeRecord> out;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    std::vector<std::string> toks = split_csv_line(line);
    const std::size_t need =
        static_cast<std::size_t>(std::max({id_col, site_col, label_col})) + 1;
    if (toks.size() < need)
      throw std::runtime_error("load_phenotype_csv: short row " + std::to_string(lineno) +
                               " in " + path);
    PhenotypeRecord rec;
    rec.subject_id = toks[static_cast<std::size_t>(id_col)];
    rec.site_id = toks[static_cast<std::size_t>(site_col)];
    const std::string& lab = toks[static_cast<std::size_t>(label_col)];
    if (lab == "ASD" || lab == "1") rec.label = 1;
    else if (lab == "HC" || lab == "0") rec.label = 0;
    else
      throw std::runtime_error("load_phenotype_csv: bad label '" + lab + "' at row " +
                               std::to_string(lineno) + " in " + path);
    if (!out.emplace(rec.subject_id, rec).second)
      throw std::runtime_error("load_phenotype_csv: duplicate subject " + rec.subject_id +
                               " in " + path);
  }
  return out;
}

std::vector<RoiTimeSeries> join_phenotype(
    std::vector<RoiTimeSeries> series,
    const std::map<std::string, PhenotypeRecord>& phenotype, int* dropped) {
  std::vector<RoiTimeSeries> out;
  int missing = 0;
  std::map<std::string, bool> seen;
  for (RoiTimeSeries& ts : series) {
    auto it = phenotype.find(ts.subject_id);
    if (it == phenotype.end()) {
      ++missing;
      continue;
    }
    seen[ts.subject_id] = true;
    ts.site_id = it->second.site_id;
    ts.label = it->second.label;
    out.push_back(std::move(ts));
  }
  for (const auto& [id, rec] : phenotype)
    if (!seen.count(id)) ++missing;
  if (dropped) *dropped = missing;
  return out;
}

void save_roi_csv(const RoiTimeSeries& series, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("save_roi_csv: cannot open " + path + " for writing");
  char buf[32];
  for (Index r = 0; r < series.values.rows(); ++r) {
    for (Index c = 0; c < series.values.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", series.values(r, c));
      if (c) os << ',';
      os << buf;
    }
    os << '\n';
  }
  if (!os) throw std::runtime_error("save_roi_csv: write failed for " + path);
}

void export_synth_dataset(const SynthDataset& dataset, const std::string& dir) {
  fs::create_directories(fs::path(dir) / "roi");
  for (const RoiTimeSeries& ts : dataset.subjects)
    save_roi_csv(ts, (fs::path(dir) / "roi" / (ts.subject_id + ".csv")).string());

  {
    std::ofstream os(fs::path(dir) / "phenotype.csv");
    if (!os) throw std::runtime_error("export_synth_dataset: cannot write phenotype.csv");
    os << "subject_id,site_id,label\n";
    for (const RoiTimeSeries& ts : dataset.subjects)
      os << ts.subject_id << ',' << ts.site_id << ',' << ts.label << '\n';
  }
  {
    std::ofstream os(fs::path(dir) / "informative_rois.csv");
    if (!os)
      throw std::runtime_error("export_synth_dataset: cannot write informative_rois.csv");
    os << "roi_index\n";
    for (int roi : dataset.informative_rois) os << roi << '\n';
  }
}

}  // namespace fedfc::data
