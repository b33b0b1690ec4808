#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace pdistill {

inline const std::vector<std::string> kTeacherColumns{"step", "nll"};
inline const std::vector<std::string> kClassifierColumns{"step", "loss"};
inline const std::vector<std::string> kDistillColumns{"step", "kl", "ce", "h", "power", "perceptual",
                                                      "contrastive", "total"};

// CSV with a fixed header row. Wall-clock times go to a sidecar
// `<stem>.timing.csv` (step,wall_ms) so the main file stays byte-identical
// across seeded runs.
class MetricsWriter {
 public:
  MetricsWriter(const std::filesystem::path& path, std::vector<std::string> columns);

  // `values` excludes the step column.
  void row(std::uint64_t step, const std::vector<double>& values, double wall_ms);
  const std::filesystem::path& path() const { return path_; }
  static std::filesystem::path timing_path(const std::filesystem::path& path);

 private:
  std::filesystem::path path_;
  std::size_t width_;
  std::ofstream out_;
  std::ofstream timing_;
};

// Rows of a metrics CSV written by MetricsWriter, header excluded.
struct MetricsTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  std::vector<double> column(const std::string& name) const;
};

MetricsTable read_metrics(const std::filesystem::path& path);

}  // namespace pdistill
