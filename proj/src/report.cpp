#include "vtseg/report.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <map>
#include <stdexcept>
#include <utility>

#include <json.hpp>

namespace vtseg {
namespace {

std::string format_fixed(double v, int decimals) {
  std::array<char, 64> buf;
  const auto res =
      std::to_chars(buf.data(), buf.data() + buf.size(), v, std::chars_format::fixed, decimals);
  return std::string(buf.data(), res.ptr);
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

// Sorting first makes both the mean and the deviation sums independent of
// the caller's record order, down to the last bit.
MeanStd mean_std(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  double sum = 0.0;
  for (double v : values) sum += v;
  MeanStd out;
  out.mean = sum / static_cast<double>(values.size());
  if (values.size() < 2) return out;
  double sq = 0.0;
  for (double v : values) {
    const double d = v - out.mean;
    sq += d * d;
  }
  out.std = std::sqrt(sq / static_cast<double>(values.size() - 1));
  return out;
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::string emit_csv(const std::vector<AggregateRow>& rows,
                     const std::vector<LabeledRecord>& per_volume) {
  std::string out = "volume_id,task_label,model,dice,hd,hd_units,hd_defined,ssim\n";
  for (const auto& lr : per_volume) {
    const auto& r = lr.record;
    out += csv_escape(r.volume_id) + ',' + csv_escape(r.task_label) + ',' +
           csv_escape(lr.model) + ',' + format_fixed(r.dice, 3) + ',' +
           (r.hd_defined ? format_fixed(r.hd, 2) : std::string()) + ',' +
           csv_escape(r.hd_units) + ',' + (r.hd_defined ? "true" : "false") + ',' +
           format_fixed(r.ssim, 3) + '\n';
  }
  for (const auto& a : rows) {
    const bool has_hd = a.hd_n >= 1;
    out += "average,," + csv_escape(a.model) + ',' + format_fixed(a.dice_mean, 3) + ',' +
           (has_hd ? format_fixed(a.hd_mean, 2) : std::string()) + ',' + csv_escape(a.hd_units) +
           ',' + (has_hd ? "true" : "false") + ',' + format_fixed(a.ssim_mean, 3) + '\n';
    out += "std,," + csv_escape(a.model) + ',' + format_fixed(a.dice_std, 3) + ',' +
           (has_hd ? format_fixed(a.hd_std, 2) : std::string()) + ',' + csv_escape(a.hd_units) +
           ',' + (has_hd ? "true" : "false") + ',' + format_fixed(a.ssim_std, 3) + '\n';
  }
  return out;
}

std::string emit_json(const std::vector<AggregateRow>& rows,
                      const std::vector<LabeledRecord>& per_volume) {
  nlohmann::json doc;
  doc["per_volume"] = nlohmann::json::array();
  for (const auto& lr : per_volume) {
    const auto& r = lr.record;
    nlohmann::json row;
    row["volume_id"] = r.volume_id;
    row["task_label"] = r.task_label;
    row["model"] = lr.model;
    row["dice"] = r.dice;
    if (r.hd_defined)
      row["hd"] = r.hd;
    else
      row["hd"] = nullptr;
    row["hd_units"] = r.hd_units;
    row["hd_defined"] = r.hd_defined;
    row["ssim"] = r.ssim;
    doc["per_volume"].push_back(std::move(row));
  }
  doc["aggregates"] = nlohmann::json::array();
  for (const auto& a : rows) {
    nlohmann::json row;
    row["model"] = a.model;
    row["n"] = a.n;
    row["dice_mean"] = a.dice_mean;
    row["dice_std"] = a.dice_std;
    if (a.hd_n >= 1) {
      row["hd_mean"] = a.hd_mean;
      row["hd_std"] = a.hd_std;
    } else {
      row["hd_mean"] = nullptr;
      row["hd_std"] = nullptr;
    }
    row["hd_n"] = a.hd_n;
    row["hd_excluded"] = a.hd_excluded;
    row["hd_units"] = a.hd_units;
    row["ssim_mean"] = a.ssim_mean;
    row["ssim_std"] = a.ssim_std;
    doc["aggregates"].push_back(std::move(row));
  }
  return doc.dump(2) + "\n";
}

std::string emit_markdown(const std::vector<AggregateRow>& rows,
                          const std::vector<LabeledRecord>& per_volume) {
  // Column groups: one dice/hd/ssim triple per model, models sorted by name.
  std::vector<std::string> models;
  for (const auto& a : rows) models.push_back(a.model);
  for (const auto& lr : per_volume)
    if (std::find(models.begin(), models.end(), lr.model) == models.end())
      models.push_back(lr.model);
  std::sort(models.begin(), models.end());
  models.erase(std::unique(models.begin(), models.end()), models.end());

  std::map<std::string, const AggregateRow*> agg_of;
  for (const auto& a : rows) agg_of[a.model] = &a;

  std::map<std::pair<std::string, std::string>, const MetricRecord*> rec_of;
  std::vector<std::pair<std::string, std::string>> volumes;  // id, task label
  for (const auto& lr : per_volume) {
    const auto key = std::make_pair(lr.record.volume_id, lr.model);
    if (!rec_of.count(key)) rec_of[key] = &lr.record;
    if (std::none_of(volumes.begin(), volumes.end(),
                     [&](const auto& v) { return v.first == lr.record.volume_id; }))
      volumes.emplace_back(lr.record.volume_id, lr.record.task_label);
  }
  std::sort(volumes.begin(), volumes.end());

  auto units_of = [&](const std::string& model) -> std::string {
    if (auto it = agg_of.find(model); it != agg_of.end()) return it->second->hd_units;
    for (const auto& lr : per_volume)
      if (lr.model == model) return lr.record.hd_units;
    return "";
  };

  std::string out = "| Volume | Task |";
  std::string sep = "| --- | --- |";
  for (const auto& m : models) {
    out += " " + m + " Dice | " + m + " HD (" + units_of(m) + ") | " + m + " SSIM |";
    sep += " --- | --- | --- |";
  }
  out += '\n';
  out += sep + '\n';

  bool any_undefined = false;
  for (const auto& [vid, task] : volumes) {
    out += "| " + vid + " | " + task + " |";
    for (const auto& m : models) {
      const auto it = rec_of.find({vid, m});
      if (it == rec_of.end()) {
        out += " - | - | - |";
        continue;
      }
      const MetricRecord& r = *it->second;
      out += " " + format_fixed(r.dice, 3) + " |";
      if (r.hd_defined) {
        out += " " + format_fixed(r.hd, 2) + " |";
      } else {
        out += " n/a* |";
        any_undefined = true;
      }
      out += " " + format_fixed(r.ssim, 3) + " |";
    }
    out += '\n';
  }

  if (!rows.empty()) {
    out += "| Average ± std | |";
    for (const auto& m : models) {
      const auto it = agg_of.find(m);
      if (it == agg_of.end()) {
        out += " - | - | - |";
        continue;
      }
      const AggregateRow& a = *it->second;
      out += " " + format_fixed(a.dice_mean, 3) + " ± " + format_fixed(a.dice_std, 3) + " |";
      if (a.hd_n >= 1) {
        out += " " + format_fixed(a.hd_mean, 2) + " ± " + format_fixed(a.hd_std, 2);
        if (!a.hd_excluded.empty()) {
          out += "*";
          any_undefined = true;
        }
        out += " |";
      } else {
        out += " n/a* |";
        any_undefined = true;
      }
      out += " " + format_fixed(a.ssim_mean, 3) + " ± " + format_fixed(a.ssim_std, 3) + " |";
    }
    out += '\n';
  }

  if (any_undefined)
    out += "\n\\* surface distance undefined for an empty mask; excluded from the average\n";
  return out;
}

}  // namespace

AggregateRow aggregate(const std::vector<MetricRecord>& records, const std::string& model) {
  if (records.empty()) throw std::invalid_argument("cannot aggregate zero metric records");
  const std::string& units = records.front().hd_units;
  for (const auto& r : records)
    if (r.hd_units != units)
      throw std::invalid_argument("mixed distance units in one aggregate: '" + units +
                                  "' vs '" + r.hd_units + "'");

  AggregateRow row;
  row.model = model;
  row.n = records.size();
  row.hd_units = units;

  std::vector<double> dice_vals, hd_vals, ssim_vals;
  for (const auto& r : records) {
    dice_vals.push_back(r.dice);
    ssim_vals.push_back(r.ssim);
    if (r.hd_defined)
      hd_vals.push_back(r.hd);
    else
      row.hd_excluded.push_back(r.volume_id);
  }
  std::sort(row.hd_excluded.begin(), row.hd_excluded.end());

  const auto dice_ms = mean_std(std::move(dice_vals));
  row.dice_mean = dice_ms.mean;
  row.dice_std = dice_ms.std;
  const auto ssim_ms = mean_std(std::move(ssim_vals));
  row.ssim_mean = ssim_ms.mean;
  row.ssim_std = ssim_ms.std;
  row.hd_n = hd_vals.size();
  if (!hd_vals.empty()) {
    const auto hd_ms = mean_std(std::move(hd_vals));
    row.hd_mean = hd_ms.mean;
    row.hd_std = hd_ms.std;
  }
  return row;
}

std::string emit_table(const std::vector<AggregateRow>& rows,
                       const std::vector<LabeledRecord>& per_volume, ReportFormat format) {
  if (rows.empty() && per_volume.empty())
    throw std::invalid_argument("nothing to report: no records and no aggregates");

  std::vector<LabeledRecord> recs = per_volume;
  std::sort(recs.begin(), recs.end(), [](const LabeledRecord& a, const LabeledRecord& b) {
    if (a.record.volume_id != b.record.volume_id) return a.record.volume_id < b.record.volume_id;
    return a.model < b.model;
  });
  std::vector<AggregateRow> aggs = rows;
  std::sort(aggs.begin(), aggs.end(),
            [](const AggregateRow& a, const AggregateRow& b) { return a.model < b.model; });

  switch (format) {
    case ReportFormat::csv:
      return emit_csv(aggs, recs);
    case ReportFormat::json:
      return emit_json(aggs, recs);
    case ReportFormat::markdown:
      return emit_markdown(aggs, recs);
  }
  throw std::logic_error("unreachable report format");
}

}  // namespace vtseg
