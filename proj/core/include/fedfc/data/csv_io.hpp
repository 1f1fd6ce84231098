#pragma once

#include <map>
#include <string>
#include <vector>

#include "fedfc/data/features.hpp"
#include "fedfc/data/synthetic.hpp"

namespace fedfc::data {

struct PhenotypeRecord {
  std::string subject_id;
  std::string site_id;
  int label = 0;
};

// One row per time frame, one column per ROI, optional header row.  path may
// be a single file or a directory of *.csv files (one per subject, subject id
// taken from the file stem, sorted by name).  Ragged rows are an error that
// names the offending row.
std::vector<RoiTimeSeries> load_roi_csv(const std::string& path);

// Header with subject_id, site_id and label columns (any order, extra columns
// ignored).  Labels: "ASD"/1 -> 1, "HC"/0 -> 0.
std::map<std::string, PhenotypeRecord> load_phenotype_csv(const std::string& path);

// Attaches site and label to loaded series; subjects lacking a phenotype row
// are dropped and counted, as are phenotype rows without a series.
std::vector<RoiTimeSeries> join_phenotype(
    std::vector<RoiTimeSeries> series,
    const std::map<std::string, PhenotypeRecord>& phenotype, int* dropped);

void save_roi_csv(const RoiTimeSeries& series, const std::string& path);

// Writes roi/<subject>.csv per subject plus phenotype.csv and
// informative_rois.csv under dir, in the format load_roi_csv reads back.
void export_synth_dataset(const SynthDataset& dataset, const std::string& dir);

}  // namespace fedfc::data
