#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "vtseg/metrics.hpp"

namespace vtseg {

// A per-volume metric record tagged with the model that produced the
// prediction; the reporting layer keys its columns on this tag.
struct LabeledRecord {
  std::string model;
  MetricRecord record;
};

// Per-model summary: arithmetic mean and sample standard deviation
// (n-1 divisor) of each metric. Records whose surface distance is
// undefined are excluded from the distance aggregate and listed for
// footnoting; hd_n counts the entries that were aggregated.
struct AggregateRow {
  std::string model;
  std::size_t n = 0;
  double dice_mean = 0.0;
  double dice_std = 0.0;
  double hd_mean = 0.0;  // meaningful only when hd_n >= 1
  double hd_std = 0.0;
  std::size_t hd_n = 0;
  std::vector<std::string> hd_excluded;  // volume ids with undefined distance
  std::string hd_units;
  double ssim_mean = 0.0;
  double ssim_std = 0.0;
};

enum class ReportFormat { csv, json, markdown };

// Mean and sample standard deviation per metric over the given records.
// Values are sorted before summation, so the result is bit-identical under
// any permutation of the records. A single record yields std = 0 exactly.
// Throws on empty input or mixed distance units.
AggregateRow aggregate(const std::vector<MetricRecord>& records, const std::string& model);

// Render per-volume rows and per-model summary rows.
//   csv      — long format, one record per line:
//              volume_id, task_label, model, dice, hd, hd_units, hd_defined, ssim;
//              summary rows appended with volume_id "average" / "std".
//   json     — the same content with full-precision numbers (exact roundtrip);
//              undefined distances are null.
//   markdown — wide layout: one row per volume, a dice/hd/ssim column group
//              per model, a final "Average ± std" row, and a footnote for
//              any excluded undefined distances.
// Rows are emitted in a canonical order (volume id, then model) regardless
// of input order. Numbers print with 3 decimals (dice, ssim) and 2 (hd),
// locale-independent. Throws if both lists are empty.
std::string emit_table(const std::vector<AggregateRow>& rows,
                       const std::vector<LabeledRecord>& per_volume, ReportFormat format);

}  // namespace vtseg
