#include "sapo/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace sapo::metrics {

std::vector<double> smooth(std::span<const double> series, std::size_t window) {
  if (window == 0) throw std::invalid_argument("smoothing window must be at least 1");
  std::vector<double> out(series.size());
  for (std::size_t i = 0; i < series.size(); ++i) {
    const std::size_t lo = i + 1 >= window ? i + 1 - window : 0;
    double sum = 0.0;
    for (std::size_t k = lo; k <= i; ++k) sum += series[k];
    out[i] = sum / static_cast<double>(i + 1 - lo);
  }
  return out;
}

double oscillation(std::span<const double> curve) {
  if (curve.size() < 3) return 0.0;
  std::vector<double> d(curve.size() - 1);
  for (std::size_t i = 0; i + 1 < curve.size(); ++i) d[i] = curve[i + 1] - curve[i];
  double mean = 0.0;
  for (double x : d) mean += x;
  mean /= static_cast<double>(d.size());
  double var = 0.0;
  for (double x : d) var += (x - mean) * (x - mean);
  return var / static_cast<double>(d.size());
}

std::vector<std::string> MetricsTable::configs() const {
  std::vector<std::string> out;
  for (const auto& r : rows_)
    if (std::find(out.begin(), out.end(), r.config) == out.end()) out.push_back(r.config);
  return out;
}

std::vector<std::uint64_t> MetricsTable::seeds(const std::string& config) const {
  std::vector<std::uint64_t> out;
  for (const auto& r : rows_)
    if (r.config == config && std::find(out.begin(), out.end(), r.seed) == out.end()) out.push_back(r.seed);
  return out;
}

std::vector<std::vector<double>> MetricsTable::node_series(const std::string& config, std::uint64_t seed) const {
  std::map<int, std::map<std::uint64_t, double>> by_node;
  for (const auto& r : rows_)
    if (r.config == config && r.seed == seed) by_node[r.node][r.round] = r.mean_reward;
  std::vector<std::vector<double>> out;
  for (const auto& [node, rounds] : by_node) {
    std::vector<double> series;
    std::uint64_t expect = 0;
    for (const auto& [round, value] : rounds) {
      if (round != expect++) {
        throw std::invalid_argument("config " + config + " seed " + std::to_string(seed) + " node " +
                                    std::to_string(node) + " is missing round " + std::to_string(expect - 1));
      }
      series.push_back(value);
    }
    if (!out.empty() && series.size() != out.front().size()) {
      throw std::invalid_argument("config " + config + " seed " + std::to_string(seed) +
                                  " has nodes with different round counts");
    }
    out.push_back(std::move(series));
  }
  return out;
}

std::size_t MetricsTable::rounds(const std::string& config, std::uint64_t seed) const {
  const auto s = node_series(config, seed);
  return s.empty() ? 0 : s.front().size();
}

double MetricsTable::cumulative_total(const std::string& config, std::uint64_t seed) const {
  double total = 0.0;
  for (const auto& series : node_series(config, seed))
    for (double x : series) total += x;
  return total;
}

Envelope MetricsTable::agent_envelope(const std::string& config, std::uint64_t seed, std::size_t window) const {
  const auto series = node_series(config, seed);
  Envelope env;
  if (series.empty()) return env;
  std::vector<std::vector<double>> smoothed;
  for (const auto& s : series) smoothed.push_back(smooth(s, window));
  const auto n = smoothed.front().size();
  env.mean.assign(n, 0.0);
  env.min.assign(n, 0.0);
  env.max.assign(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    double sum = 0.0, lo = smoothed.front()[t], hi = lo;
    for (const auto& s : smoothed) {
      sum += s[t];
      lo = std::min(lo, s[t]);
      hi = std::max(hi, s[t]);
    }
    env.mean[t] = sum / static_cast<double>(smoothed.size());
    env.min[t] = lo;
    env.max[t] = hi;
  }
  return env;
}

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(17);
  return out;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  return cells;
}

template <class T>
T parse_number(const std::string& s, const std::string& what) {
  T value{};
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, value);
  if (ec != std::errc() || ptr != end) throw std::invalid_argument("bad " + what + " '" + s + "'");
  return value;
}

}  // namespace

void MetricsTable::write_raw_csv(const std::filesystem::path& path) const {
  auto out = open_out(path);
  out << "config,seed,node,round,mean_reward\n";
  for (const auto& r : rows_) out << r.config << ',' << r.seed << ',' << r.node << ',' << r.round << ',' << r.mean_reward << '\n';
}

MetricsTable MetricsTable::read_raw_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "config,seed,node,round,mean_reward") {
    throw std::invalid_argument(path.string() + " is not a raw metrics file");
  }
  MetricsTable t;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto c = split_csv(line);
    if (c.size() != 5) throw std::invalid_argument("malformed row: " + line);
    t.add({c[0], parse_number<std::uint64_t>(c[1], "seed"), parse_number<int>(c[2], "node"),
           parse_number<std::uint64_t>(c[3], "round"), parse_number<double>(c[4], "reward")});
  }
  return t;
}

void MetricsTable::write_smoothed_csv(const std::filesystem::path& path, std::size_t window) const {
  auto out = open_out(path);
  out << "config,seed,round,mean,min,max\n";
  for (const auto& config : configs()) {
    for (auto seed : seeds(config)) {
      const auto env = agent_envelope(config, seed, window);
      for (std::size_t t = 0; t < env.mean.size(); ++t)
        out << config << ',' << seed << ',' << t << ',' << env.mean[t] << ',' << env.min[t] << ',' << env.max[t] << '\n';
    }
  }
}

}  // namespace sapo::metrics
