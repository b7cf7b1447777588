#include "t2v/report.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include <fmt/format.h>

#include "t2v/errors.hpp"

namespace t2v {

SetSummary summarize(const std::string& name, const std::vector<quality::QualityVector>& values) {
  if (values.empty()) throw ContractError("report: cannot summarise an empty set " + name);
  SetSummary s;
  s.name = name;
  s.count = values.size();
  const auto n = static_cast<double>(values.size());
  for (std::size_t m = 0; m < quality::kMetricCount; ++m) {
    // Shifted by the first sample so constant sets give exactly mean = value, std = 0.
    const double origin = quality::as_array(values.front())[m];
    double sum = 0.0;
    for (const auto& v : values) sum += quality::as_array(v)[m] - origin;
    const double shift = sum / n;
    const double mean = origin + shift;
    double sq = 0.0;
    for (const auto& v : values) {
      const double d = quality::as_array(v)[m] - origin - shift;
      sq += d * d;
    }
    s.stats[m] = {mean, std::sqrt(sq / n)};
  }
  return s;
}

SetSummary pool(const std::string& name, const SetSummary& a, const SetSummary& b) {
  SetSummary s;
  s.name = name;
  s.count = a.count + b.count;
  if (s.count == 0) throw ContractError("report: cannot pool two empty summaries");
  const double na = static_cast<double>(a.count);
  const double nb = static_cast<double>(b.count);
  const double n = na + nb;
  for (std::size_t m = 0; m < quality::kMetricCount; ++m) {
    const auto& x = a.stats[m];
    const auto& y = b.stats[m];
    const double mean = (na * x.mean + nb * y.mean) / n;
    const double second = (na * (x.std * x.std + x.mean * x.mean) + nb * (y.std * y.std + y.mean * y.mean)) / n;
    s.stats[m] = {mean, std::sqrt(std::max(0.0, second - mean * mean))};
  }
  return s;
}

std::string per_image_csv_header() {
  std::string h = "path,set";
  for (const char* k : quality::metric_keys()) h += std::string(",") + k;
  return h;
}

std::string per_image_csv_row(const ImageQualityRow& row) {
  std::string line = row.path + "," + row.set;
  for (double v : quality::as_array(row.metrics)) line += fmt::format(",{:.6f}", v);
  return line;
}

std::string aggregate_csv(const AggregateReport& report) {
  std::string out = "set,count";
  for (const char* k : quality::metric_keys()) out += fmt::format(",{0}_mean,{0}_std", k);
  out += "\n";
  for (const auto& s : report.sets) {
    out += fmt::format("{},{}", s.name, s.count);
    for (const auto& st : s.stats) out += fmt::format(",{:.6f},{:.6f}", st.mean, st.std);
    out += "\n";
  }
  return out;
}

std::string format_table(const AggregateReport& report) {
  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> header{""};
  for (const char* n : quality::metric_names()) header.emplace_back(n);
  cells.push_back(header);
  for (const auto& s : report.sets) {
    std::vector<std::string> row{s.name};
    for (std::size_t m = 0; m < quality::kMetricCount; ++m) {
      row.push_back(fmt::format("{:.3f} (±{:.3f})", s.stats[m].mean, s.stats[m].std));
    }
    cells.push_back(std::move(row));
  }
  // "±" is two bytes but one column wide.
  auto width = [](const std::string& s) {
    std::size_t w = 0;
    for (unsigned char c : s) w += (c & 0xC0) != 0x80;
    return w;
  };
  std::vector<std::size_t> widths(header.size(), 0);
  for (const auto& row : cells)
    for (std::size_t c = 0; c < row.size(); ++c) widths[c] = std::max(widths[c], width(row[c]));
  std::string out;
  for (const auto& row : cells) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c > 0) out += " | ";
      out += row[c] + std::string(widths[c] - width(row[c]), ' ');
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    out += "\n";
  }
  return out;
}

}  // namespace t2v
