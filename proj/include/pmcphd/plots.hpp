#pragma once

#include <string>
#include <vector>

namespace pmcphd {

/// Renders SVG figures from the CSVs written by run_experiment:
/// trajectories.svg (truth, measurements and estimates of run 0),
/// cardinality.svg (per-step mean cardinality estimate against the true
/// count) and ospa.svg (per-step mean OSPA). Each plot area records its data
/// extents in data-xmin/data-xmax/data-ymin/data-ymax attributes.
/// Returns the written paths. Throws Error listing any absent input files.
std::vector<std::string> emit_plots(const std::string& output_dir);

/// Minimal reader for the comma-separated files written by this library.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const;  // -1 when absent
};

CsvTable read_csv(const std::string& path);

}  // namespace pmcphd
