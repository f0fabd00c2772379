#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace trama {

struct MetricRow {
  std::int64_t step = 0;
  std::int64_t episode = 0;
  std::string name;
  double value = 0.0;
};

/// Append-only (env step, episode, name, value) rows, optionally mirrored
/// to a CSV file as they arrive.
class MetricStream {
 public:
  MetricStream() = default;

  /// Opens `path` for writing. With `keep_rows` >= 0 an existing file is
  /// read back and truncated to its first `keep_rows` rows (resume).
  void attach(const std::string& path, std::int64_t keep_rows = -1);
  void flush();

  /// Throws InvariantError when `step` decreases for the same metric.
  void append(std::int64_t step, std::int64_t episode, const std::string& name, double value);

  const std::vector<MetricRow>& rows() const { return rows_; }
  std::vector<std::pair<std::int64_t, double>> series(const std::string& name) const;

  static std::string header();
  static std::string format(const MetricRow& r);
  static std::vector<MetricRow> read_csv(std::istream& in);

 private:
  std::vector<MetricRow> rows_;
  std::map<std::string, std::int64_t> last_step_;
  std::string path_;
  std::size_t written_ = 0;
};

/// Trapezoid area under (step, return) divided by max_return * (last step - first step).
/// Throws PreconditionError with fewer than two samples or a zero span.
double cumulative_return(const std::vector<std::pair<std::int64_t, double>>& series, double max_return = 20.0);

}  // namespace trama
