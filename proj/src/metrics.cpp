#include "trama/metrics.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <sstream>

#include "trama/errors.hpp"

namespace trama {

namespace {

std::string shortest(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

}  // namespace

std::string MetricStream::header() { return "step,episode,name,value"; }

std::string MetricStream::format(const MetricRow& r) {
  return std::to_string(r.step) + "," + std::to_string(r.episode) + "," + r.name + "," + shortest(r.value);
}

std::vector<MetricRow> MetricStream::read_csv(std::istream& in) {
  std::vector<MetricRow> rows;
  std::string line;
  if (!std::getline(in, line)) return rows;
  if (line != header()) throw InvariantError("metrics csv: unexpected header '" + line + "'");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string step, episode, name, value;
    if (!std::getline(ss, step, ',') || !std::getline(ss, episode, ',') || !std::getline(ss, name, ',') ||
        !std::getline(ss, value)) {
      throw InvariantError("metrics csv: malformed row '" + line + "'");
    }
    MetricRow r;
    r.step = std::stoll(step);
    r.episode = std::stoll(episode);
    r.name = name;
    std::from_chars(value.data(), value.data() + value.size(), r.value);
    rows.push_back(std::move(r));
  }
  return rows;
}

void MetricStream::attach(const std::string& path, std::int64_t keep_rows) {
  path_ = path;
  rows_.clear();
  last_step_.clear();
  if (keep_rows >= 0) {
    std::ifstream in(path);
    if (in) rows_ = read_csv(in);
    if (static_cast<std::int64_t>(rows_.size()) < keep_rows) {
      throw InvariantError("metrics csv " + path + " has fewer rows than the checkpoint recorded");
    }
    rows_.resize(static_cast<std::size_t>(keep_rows));
    for (const auto& r : rows_) last_step_[r.name] = r.step;
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << header() << '\n';
  for (const auto& r : rows_) out << format(r) << '\n';
  written_ = rows_.size();
}

void MetricStream::append(std::int64_t step, std::int64_t episode, const std::string& name, double value) {
  auto it = last_step_.find(name);
  if (it != last_step_.end() && step < it->second) {
    throw InvariantError("metric " + name + ": step " + std::to_string(step) + " after " + std::to_string(it->second));
  }
  last_step_[name] = step;
  rows_.push_back(MetricRow{step, episode, name, value});
}

void MetricStream::flush() {
  if (path_.empty() || written_ == rows_.size()) return;
  std::ofstream out(path_, std::ios::app);
  if (!out) throw std::runtime_error("cannot write " + path_);
  for (; written_ < rows_.size(); ++written_) out << format(rows_[written_]) << '\n';
}

std::vector<std::pair<std::int64_t, double>> MetricStream::series(const std::string& name) const {
  std::vector<std::pair<std::int64_t, double>> out;
  for (const auto& r : rows_) {
    if (r.name == name) out.emplace_back(r.step, r.value);
  }
  return out;
}

double cumulative_return(const std::vector<std::pair<std::int64_t, double>>& s, double max_return) {
  if (s.size() < 2) throw PreconditionError("cumulative_return: need at least two samples");
  const double span = static_cast<double>(s.back().first - s.front().first);
  if (span <= 0.0) throw PreconditionError("cumulative_return: zero step span");
  double area = 0.0;
  for (std::size_t i = 1; i < s.size(); ++i) {
    area += 0.5 * (s[i].second + s[i - 1].second) * static_cast<double>(s[i].first - s[i - 1].first);
  }
  return area / (max_return * span);
}

}  // namespace trama
