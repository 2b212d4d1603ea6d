#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "auggen/evalbench/evaluate.hpp"
#include "auggen/mixsearch/search.hpp"
#include "auggen/pipeline/config.hpp"

namespace auggen::pipeline {

std::string read_text(const std::filesystem::path& file);

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::string to_csv() const;
  std::string to_text() const;
};

struct NamedCurve {
  std::string name;
  std::string csv;  // first column x, third column loss
};

struct ReportInputs {
  std::vector<evalbench::EvalReport> eval;
  std::vector<evalbench::GenMetricsReport> gen;
  mixsearch::SearchReport grid;
  long orig_count = 0;
  long aug_count = 0;
  std::vector<double> fpr_targets;
  std::string benchmark = "B";
  double fidelity = 0;
  std::string weights;
  std::string roc_tsv;
  std::vector<NamedCurve> curves;
  std::string generator_curve;
};

// "<bench>-<fpr>" columns for each target.
std::vector<std::string> tar_columns(const std::string& benchmark, const std::vector<double>& fpr_targets);
// TAR cells (mean±std in percent over reports) in target order, then CV accuracy and rank-1.
std::vector<std::string> score_cells(const std::vector<const evalbench::EvalReport*>& reports,
                                     const std::vector<double>& fpr_targets);

// Rows D^orig and D^orig + D^aug; columns Method/Data, Aux, n^s, n^r, TAR columns, CV, TR1.
Table comparison_table(const ReportInputs& in);
// Baseline and AugGen rows of M-Inter / M-Intra / S-Intra, seed means.
Table dynamics_table(const ReportInputs& in);
Table gen_metrics_table(const ReportInputs& in);

// Per-seed direction counts and mean deltas, as text lines.
std::string direction_summary(const ReportInputs& in);

// Writes the files selected by `formats` (csv, txt, svg) into `dir`.
void write_report(const ReportInputs& in, const std::vector<std::string>& formats, const std::filesystem::path& dir);

}  // namespace auggen::pipeline
