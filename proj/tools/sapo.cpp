// Command-line front end: sweeps, smoothing, comparison, judge curves.

#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "sapo/experiment.hpp"
#include "sapo/judge.hpp"
#include "sapo/metrics.hpp"
#include "sapo/taskgen.hpp"

namespace {

using namespace sapo;

std::vector<double> read_series(std::istream& in) {
  std::vector<double> out;
  std::string token;
  while (in >> token) {
    for (char& c : token)
      if (c == ',') c = ' ';
    std::istringstream parts(token);
    double x;
    while (parts >> x) out.push_back(x);
  }
  return out;
}

int cmd_run(const std::string& config_path, const std::string& output_override, bool quiet) {
  auto config = experiment::load_config(config_path);
  if (!output_override.empty()) config.output_dir = output_override;
  experiment::RunOptions opts;
  if (!quiet) opts.log = [](const std::string& line) { std::cerr << line << '\n'; };
  const auto result = experiment::run_sweep(config, opts);
  for (const auto& run : result.runs) {
    double total = 0.0;
    for (const auto& n : run.nodes)
      for (const auto& r : n.reports) total += r.mean_reward;
    std::cout << run.split.name() << " seed " << run.seed << " total " << total
              << (run.complete() ? "" : " INCOMPLETE") << '\n';
    for (const auto& n : run.nodes)
      if (n.crashed) std::cout << "  " << n.node_id << " crashed: " << n.error << '\n';
  }
  std::cout << "results in " << config.output_dir.string() << '\n';
  return result.complete() ? 0 : 2;
}

int cmd_smooth(const std::string& input, std::size_t window) {
  std::vector<double> series;
  if (input == "-") {
    series = read_series(std::cin);
  } else {
    std::ifstream in(input);
    if (!in) throw std::runtime_error("cannot open " + input);
    series = read_series(in);
  }
  std::cout.precision(17);
  for (double x : metrics::smooth(series, window)) std::cout << x << '\n';
  return 0;
}

int cmd_compare(const std::string& raw, const std::string& baseline, std::size_t window, const std::string& out) {
  const auto table = metrics::MetricsTable::read_raw_csv(raw);
  const auto report = experiment::compare_configs(table, baseline, window);
  const auto text = report.to_json();
  if (out.empty()) {
    std::cout << text;
  } else {
    std::ofstream f(out, std::ios::trunc);
    f << text;
  }
  for (const auto& c : report.configs) {
    std::cerr << c.config << ": total " << c.mean_total << " [" << c.min_total << ", " << c.max_total << "]";
    if (c.improvement_floor) std::cerr << ", " << *c.improvement_floor << "% vs " << report.baseline;
    std::cerr << '\n';
  }
  return 0;
}

int cmd_judge_curve(const std::string& log_path, const std::string& node) {
  const auto records = judge::read_log(log_path);
  std::vector<std::string> nodes;
  if (!node.empty()) {
    nodes.push_back(node);
  } else {
    for (const auto& r : records)
      if (std::find(nodes.begin(), nodes.end(), r.node_id) == nodes.end()) nodes.push_back(r.node_id);
  }
  std::cout.precision(17);
  std::cout << "node_id,normalized_round,cumulative_mean\n";
  for (const auto& id : nodes)
    for (const auto& [round, mean] : judge::cumulative_curve(records, id)) std::cout << id << ',' << round << ',' << mean << '\n';
  return 0;
}

int cmd_golden(const std::string& out) {
  const auto text = taskgen::golden_to_jsonl(taskgen::golden_suite());
  if (out.empty() || out == "-") {
    std::cout << text;
  } else {
    std::ofstream f(out, std::ios::trunc);
    f << text;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Swarm sampling policy optimization at desk scale"};
  app.require_subcommand(1);

  std::string config_path, output_dir;
  bool quiet = false;
  auto* run = app.add_subcommand("run", "Run a sweep described by a config file");
  run->add_option("config", config_path, "Config file (JSON, comments allowed)")->required()->check(CLI::ExistingFile);
  run->add_option("-o,--output", output_dir, "Override output_dir");
  run->add_flag("-q,--quiet", quiet, "No progress output");

  std::string series_path = "-";
  std::size_t window = 100;
  auto* smooth = app.add_subcommand("smooth", "Trailing moving average of a number series");
  smooth->add_option("input", series_path, "File of numbers separated by whitespace or commas, - for stdin");
  smooth->add_option("-w,--window", window, "Window size")->check(CLI::PositiveNumber);

  std::string raw_path, baseline, compare_out;
  std::size_t compare_window = 100;
  auto* compare = app.add_subcommand("compare", "Compare configurations in a raw.csv");
  compare->add_option("raw", raw_path, "raw.csv from a sweep")->required()->check(CLI::ExistingFile);
  compare->add_option("-b,--baseline", baseline, "Baseline configuration, e.g. 8/0");
  compare->add_option("-w,--window", compare_window, "Smoothing window")->check(CLI::PositiveNumber);
  compare->add_option("-o,--output", compare_out, "Write the report here instead of stdout");

  std::string judge_log, judge_node;
  auto* curve = app.add_subcommand("judge-curve", "Cumulative mean judge score per node");
  curve->add_option("log", judge_log, "judge.jsonl")->required()->check(CLI::ExistingFile);
  curve->add_option("-n,--node", judge_node, "Only this node");

  std::string golden_out;
  auto* golden = app.add_subcommand("golden", "Write the verifier golden suite as JSON lines");
  golden->add_option("-o,--output", golden_out, "Output file, default stdout");

  app.add_subcommand("config-template", "Print a commented config with every default");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(config_path, output_dir, quiet);
    if (*smooth) return cmd_smooth(series_path, window);
    if (*compare) return cmd_compare(raw_path, baseline, compare_window, compare_out);
    if (*curve) return cmd_judge_curve(judge_log, judge_node);
    if (*golden) return cmd_golden(golden_out);
    std::cout << experiment::config_template();
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
