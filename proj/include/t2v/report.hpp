#pragma once

// Aggregation of per-image quality metrics into mean / standard deviation
// cells, one row per image set (O-VIS, O-THM, G-VIS).

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "t2v/quality.hpp"

namespace t2v {

struct MetricStats {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
};

struct SetSummary {
  std::string name;
  std::size_t count = 0;
  std::array<MetricStats, quality::kMetricCount> stats{};
};

struct AggregateReport {
  std::vector<SetSummary> sets;
};

SetSummary summarize(const std::string& name, const std::vector<quality::QualityVector>& values);

// Combines two summaries of disjoint samples.
SetSummary pool(const std::string& name, const SetSummary& a, const SetSummary& b);

struct ImageQualityRow {
  std::string path;
  std::string set;
  quality::QualityVector metrics;
};

std::string per_image_csv_header();
std::string per_image_csv_row(const ImageQualityRow& row);

std::string aggregate_csv(const AggregateReport& report);

// Aligned text table: sets as rows, metrics as columns, "mean (±std)".
std::string format_table(const AggregateReport& report);

}  // namespace t2v
