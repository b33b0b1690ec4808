#include "harness/metrics.hpp"

#include <sstream>

#include "core/config.hpp"
#include "core/error.hpp"

namespace pdistill {

MetricsWriter::MetricsWriter(const std::filesystem::path& path, std::vector<std::string> columns)
    : path_(path), width_(columns.size()) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  out_.open(path, std::ios::trunc);
  timing_.open(timing_path(path), std::ios::trunc);
  if (!out_ || !timing_) fail(ErrorCode::kIo, "cannot write metrics to " + path.string());
  for (std::size_t i = 0; i < columns.size(); ++i) out_ << (i ? "," : "") << columns[i];
  out_ << '\n';
  timing_ << "step,wall_ms\n";
}

void MetricsWriter::row(std::uint64_t step, const std::vector<double>& values, double wall_ms) {
  require(values.size() + 1 == width_, "metrics row has the wrong number of columns");
  out_ << step;
  for (const double v : values) out_ << ',' << format_double(v);
  out_ << '\n';
  out_.flush();
  timing_ << step << ',' << format_double(wall_ms) << '\n';
  timing_.flush();
}

std::filesystem::path MetricsWriter::timing_path(const std::filesystem::path& path) {
  std::filesystem::path p = path;
  p.replace_extension(".timing.csv");
  return p;
}

std::vector<double> MetricsTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i] != name) continue;
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(r[i]);
    return out;
  }
  fail(ErrorCode::kInvalidArgument, "no metrics column named " + name);
}

MetricsTable read_metrics(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot read " + path.string());
  MetricsTable table;
  std::string line;
  if (!std::getline(in, line)) fail(ErrorCode::kIo, path.string() + " is empty");
  std::stringstream header(line);
  for (std::string cell; std::getline(header, cell, ',');) table.columns.push_back(cell);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) row.push_back(std::stod(cell));
    if (row.size() != table.columns.size()) fail(ErrorCode::kIo, path.string() + " has a ragged row");
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace pdistill
