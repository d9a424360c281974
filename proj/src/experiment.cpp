#include "sapo/experiment.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <thread>

#include "json.hpp"
#include "sapo/judge.hpp"
#include "sapo/socket_transport.hpp"
#include "sapo/swarmnet.hpp"

namespace sapo::experiment {

using ordered_json = nlohmann::ordered_json;

node::NodeConfig node_config(const ExperimentConfig& config, const Split& split, std::uint64_t seed, int index) {
  node::NodeConfig n;
  n.node_id = "node-" + std::to_string(index);
  n.specialties = config.active_specialties();
  n.batch_size = config.batch_size;
  n.completions_per_question = config.completions_per_question;
  n.local_samples = split.local;
  n.external_samples = split.external;
  n.share_fraction = config.share_fraction;
  n.grpo = config.grpo;
  // Independent of the split, so every configuration sees the same question
  // stream for a given seed and node.
  n.seed = derive_seed(seed, {static_cast<std::uint64_t>(index)});
  n.temperature = config.temperature;
  n.max_new_tokens = config.max_new_tokens;
  return n;
}

PolicyState base_policy(const ExperimentConfig& config) {
  auto state = PolicyState::initialize(config.arch, config.init_seed);
  if (config.warmstart_steps == 0) return state;
  WarmstartConfig w;
  w.specialties = config.active_specialties();
  w.steps = config.warmstart_steps;
  w.questions_per_step = config.warmstart_questions;
  w.learning_rate = config.warmstart_learning_rate;
  w.truth_fraction = config.warmstart_truth_fraction;
  w.seed = config.init_seed;
  return warmstart(std::move(state), w);
}

bool RunOutcome::complete() const {
  return std::none_of(nodes.begin(), nodes.end(), [](const NodeOutcome& n) { return n.crashed; });
}

bool SweepResult::complete() const {
  return std::all_of(runs.begin(), runs.end(), [](const RunOutcome& r) { return r.complete(); });
}

namespace {

std::filesystem::path run_dir(const ExperimentConfig& config, const Split& split, std::uint64_t seed) {
  return config.output_dir / (std::to_string(split.local) + "-" + std::to_string(split.external)) /
         ("seed-" + std::to_string(seed));
}

struct Swarm {
  std::vector<std::shared_ptr<swarm::SwarmPool>> pools;
  swarm::InMemoryTransport memory;
  std::vector<std::unique_ptr<swarm::SocketEndpoint>> endpoints;
  std::vector<std::unique_ptr<node::SapoNode>> nodes;

  void drop(std::size_t i) {
    memory.detach(nodes[i]->config().node_id);
    if (!endpoints.empty()) endpoints[i]->stop();
  }
};

}  // namespace

RunOutcome run_swarm(const ExperimentConfig& config, const Split& split, std::uint64_t seed, const PolicyState& base,
                     const RunOptions& options) {
  config.validate();
  const auto n = static_cast<std::size_t>(config.num_nodes);
  const bool phased = config.scheduler == Scheduler::phased;
  const bool spread_nodes = phased && omp_get_max_threads() > 1 && n > 1;

  Swarm sw;
  for (std::size_t i = 0; i < n; ++i) {
    auto nc = node_config(config, split, seed, static_cast<int>(i));
    nc.execution = spread_nodes || !phased ? Execution::serial : Execution::parallel;
    auto pool = std::make_shared<swarm::SwarmPool>(config.staleness_window, config.capacity_per_sender);
    swarm::Transport* transport = nullptr;
    if (config.transport == TransportKind::inmemory) {
      sw.memory.attach(nc.node_id, pool);
      transport = &sw.memory;
    } else {
      sw.endpoints.push_back(std::make_unique<swarm::SocketEndpoint>(nc.node_id, pool));
      transport = sw.endpoints.back().get();
    }
    sw.pools.push_back(pool);
    sw.nodes.push_back(std::make_unique<node::SapoNode>(std::move(nc), base, pool, transport));
  }
  if (!sw.endpoints.empty()) {
    std::vector<swarm::PeerAddress> peers;
    for (const auto& e : sw.endpoints) peers.push_back({e->node_id(), "127.0.0.1", e->port()});
    for (auto& e : sw.endpoints) e->set_peers(peers);
  }

  std::optional<judge::Judge> jd;
  if (config.judge) jd.emplace(judge::JudgeConfig{config.judge_seed, config.active_specialties()});

  RunOutcome out;
  out.split = split;
  out.seed = seed;
  out.nodes.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.nodes[i].node_id = sw.nodes[i]->config().node_id;

  auto crash = [&](std::size_t i, const std::string& what) {
    out.nodes[i].crashed = true;
    out.nodes[i].error = what;
  };
  auto evaluate = [&](std::size_t i) {
    if (!jd) return;
    const auto rounds_done = sw.nodes[i]->completed_rounds();
    judge::PolicyHandle h(out.nodes[i].node_id, sw.nodes[i]->state(), rounds_done, config.max_new_tokens);
    jd->evaluate(h);
  };
  auto log = [&](const std::string& line) {
    if (options.log) options.log(line);
  };

  if (phased) {
    for (std::uint64_t r = 0; r < config.rounds; ++r) {
#pragma omp parallel for schedule(dynamic, 1) if (spread_nodes)
      for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
        if (out.nodes[i].crashed) continue;
        try {
          if (options.fault) options.fault(out.nodes[i].node_id, r);
          sw.nodes[i]->generate_and_share(r);
        } catch (const std::exception& e) {
          crash(i, e.what());
        }
      }
#pragma omp parallel for schedule(dynamic, 1) if (spread_nodes)
      for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
        if (out.nodes[i].crashed) continue;
        try {
          out.nodes[i].reports.push_back(sw.nodes[i]->train(r));
          evaluate(i);
        } catch (const std::exception& e) {
          crash(i, e.what());
        }
      }
      for (std::size_t i = 0; i < n; ++i)
        if (out.nodes[i].crashed && out.nodes[i].reports.size() == r) sw.drop(i);
      if ((r + 1) % 25 == 0 || r + 1 == config.rounds) {
        double sum = 0.0;
        std::size_t alive = 0;
        for (const auto& o : out.nodes)
          if (!o.crashed && !o.reports.empty()) {
            sum += o.reports.back().mean_reward;
            ++alive;
          }
        log(split.name() + " seed " + std::to_string(seed) + " round " + std::to_string(r + 1) +
            " mean reward " + std::to_string(alive ? sum / static_cast<double>(alive) : 0.0));
      }
    }
  } else {
    std::vector<std::thread> threads;
    for (std::size_t i = 0; i < n; ++i) {
      threads.emplace_back([&, i] {
        for (std::uint64_t r = 0; r < config.rounds; ++r) {
          try {
            if (options.fault) options.fault(out.nodes[i].node_id, r);
            out.nodes[i].reports.push_back(sw.nodes[i]->run_round(r));
            evaluate(i);
          } catch (const std::exception& e) {
            crash(i, e.what());
            sw.drop(i);
            return;
          }
        }
      });
    }
    for (auto& t : threads) t.join();
    log(split.name() + " seed " + std::to_string(seed) + " finished");
  }
  for (auto& e : sw.endpoints) e->stop();

  if (options.write_files) {
    const auto dir = run_dir(config, split, seed);
    std::filesystem::create_directories(dir);
    for (const auto& o : out.nodes) {
      std::ofstream f(dir / (o.node_id + ".jsonl"), std::ios::trunc);
      for (const auto& rep : o.reports) f << rep.to_json_line();
    }
    if (jd) jd->write_log(dir / "judge.jsonl");
  }
  return out;
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
}

}  // namespace

SweepResult run_sweep(const ExperimentConfig& config, const RunOptions& options) {
  config.validate();
  if (options.write_files) std::filesystem::create_directories(config.output_dir);
  const auto base = base_policy(config);

  SweepResult result;
  for (const auto& split : config.splits) {
    for (auto seed : config.seeds) {
      auto run = run_swarm(config, split, seed, base, options);
      for (std::size_t i = 0; i < run.nodes.size(); ++i)
        for (const auto& rep : run.nodes[i].reports)
          result.table.add({split.name(), seed, static_cast<int>(i), rep.round, rep.mean_reward});
      result.runs.push_back(std::move(run));
    }
  }
  if (!options.write_files) return result;

  result.table.write_raw_csv(config.output_dir / "raw.csv");
  ordered_json summary;
  summary["complete"] = result.complete();
  summary["num_nodes"] = config.num_nodes;
  summary["rounds"] = config.rounds;
  summary["runs"] = ordered_json::array();
  for (const auto& run : result.runs) {
    ordered_json r;
    r["config"] = run.split.name();
    r["seed"] = run.seed;
    r["complete"] = run.complete();
    double total = 0.0;
    for (const auto& nd : run.nodes)
      for (const auto& rep : nd.reports) total += rep.mean_reward;
    r["cumulative_total"] = total;
    ordered_json crashed = ordered_json::array();
    for (const auto& nd : run.nodes)
      if (nd.crashed) crashed.push_back({{"node", nd.node_id}, {"error", nd.error}, {"rounds", nd.reports.size()}});
    r["crashed_nodes"] = crashed;
    summary["runs"].push_back(r);
  }
  ordered_json incomplete = ordered_json::array();
  for (const auto& split : config.splits) {
    const bool bad = std::any_of(result.runs.begin(), result.runs.end(),
                                 [&](const RunOutcome& r) { return r.split == split && !r.complete(); });
    if (bad) incomplete.push_back(split.name());
  }
  summary["incomplete_configurations"] = incomplete;

  if (result.complete()) {
    result.table.write_smoothed_csv(config.output_dir / "smoothed.csv");
    ordered_json totals;
    for (const auto& name : result.table.configs()) {
      std::vector<double> t;
      for (auto s : result.table.seeds(name)) t.push_back(result.table.cumulative_total(name, s));
      double mean = 0.0;
      for (double x : t) mean += x;
      mean /= static_cast<double>(t.size());
      totals[name] = {{"mean", mean},
                      {"min", *std::min_element(t.begin(), t.end())},
                      {"max", *std::max_element(t.begin(), t.end())}};
    }
    summary["cumulative_totals"] = totals;
    if (config.splits.size() >= 2 && config.seeds.size() >= 3) {
      write_text(config.output_dir / "comparison.json", compare_configs(result.table).to_json());
    }
  }
  write_text(config.output_dir / "summary.json", summary.dump(2) + "\n");
  return result;
}

std::optional<double> improvement_percent(double value, double baseline) {
  if (baseline == 0.0) return std::nullopt;
  return (value - baseline) / baseline * 100.0;
}

ComparisonReport compare_configs(const metrics::MetricsTable& table, const std::string& baseline,
                                 std::size_t window) {
  const auto names = table.configs();
  if (names.size() < 2) throw std::invalid_argument("comparison needs at least two configurations");

  ComparisonReport report;
  std::optional<std::pair<std::string, std::size_t>> reference;
  for (const auto& name : names) {
    const auto seeds = table.seeds(name);
    if (seeds.size() < 3) {
      throw std::invalid_argument("configuration " + name + " has " + std::to_string(seeds.size()) +
                                  " seeds; comparison needs at least 3");
    }
    for (auto s : seeds) {
      const auto rounds = table.rounds(name, s);
      if (!reference) {
        reference = {name, rounds};
      } else if (rounds != reference->second) {
        throw std::invalid_argument("configurations " + reference->first + " and " + name +
                                    " have different round counts (" + std::to_string(reference->second) +
                                    " vs " + std::to_string(rounds) + ")");
      }
    }
  }
  report.rounds = reference->second;

  if (!baseline.empty()) {
    if (std::find(names.begin(), names.end(), baseline) == names.end()) {
      throw std::invalid_argument("baseline " + baseline + " is not in the table");
    }
    report.baseline = baseline;
  } else {
    auto it = std::find_if(names.begin(), names.end(),
                           [](const std::string& s) { return s.size() > 2 && s.ends_with("/0"); });
    report.baseline = it != names.end() ? *it : names.front();
  }

  for (const auto& name : names) {
    ConfigSummary c;
    c.config = name;
    c.seeds = table.seeds(name);
    for (auto s : c.seeds) {
      c.totals.push_back(table.cumulative_total(name, s));
      c.oscillation.push_back(metrics::oscillation(table.agent_envelope(name, s, window).mean));
    }
    const auto k = static_cast<double>(c.totals.size());
    for (double t : c.totals) c.mean_total += t;
    c.mean_total /= k;
    c.min_total = *std::min_element(c.totals.begin(), c.totals.end());
    c.max_total = *std::max_element(c.totals.begin(), c.totals.end());
    for (double o : c.oscillation) c.mean_oscillation += o;
    c.mean_oscillation /= k;
    report.configs.push_back(std::move(c));
  }
  const auto& base = *std::find_if(report.configs.begin(), report.configs.end(),
                                   [&](const ConfigSummary& c) { return c.config == report.baseline; });
  const double base_mean = base.mean_total;
  for (auto& c : report.configs) {
    c.improvement = improvement_percent(c.mean_total, base_mean);
    // Tolerates rounding error just below an integer.
    if (c.improvement) c.improvement_floor = static_cast<long long>(std::floor(*c.improvement + 1e-9));
  }

  for (std::size_t i = 0; i < report.configs.size(); ++i) {
    for (std::size_t j = i + 1; j < report.configs.size(); ++j) {
      const auto& a = report.configs[i];
      const auto& b = report.configs[j];
      std::vector<double> x, y, pct;
      for (std::size_t si = 0; si < a.seeds.size(); ++si) {
        const auto it = std::find(b.seeds.begin(), b.seeds.end(), a.seeds[si]);
        if (it == b.seeds.end()) continue;
        const double bt = b.totals[static_cast<std::size_t>(it - b.seeds.begin())];
        x.push_back(a.totals[si]);
        y.push_back(bt);
        if (auto p = improvement_percent(a.totals[si], bt)) pct.push_back(*p);
      }
      PairComparison pc;
      pc.a = a.config;
      pc.b = b.config;
      pc.test = stats::wilcoxon_signed_rank(x, y);
      for (double p : pct) pc.mean_improvement += p;
      if (!pct.empty()) pc.mean_improvement /= static_cast<double>(pct.size());
      report.pairs.push_back(pc);
    }
  }
  return report;
}

std::string ComparisonReport::to_json() const {
  ordered_json j;
  j["baseline"] = baseline;
  j["rounds"] = rounds;
  j["configs"] = ordered_json::array();
  for (const auto& c : configs) {
    ordered_json o;
    o["config"] = c.config;
    o["seeds"] = c.seeds;
    o["cumulative_totals"] = c.totals;
    o["mean_total"] = c.mean_total;
    o["min_total"] = c.min_total;
    o["max_total"] = c.max_total;
    o["improvement_percent"] = c.improvement ? ordered_json(*c.improvement) : ordered_json(nullptr);
    o["improvement_percent_floor"] = c.improvement_floor ? ordered_json(*c.improvement_floor) : ordered_json(nullptr);
    o["oscillation"] = c.oscillation;
    o["mean_oscillation"] = c.mean_oscillation;
    j["configs"].push_back(o);
  }
  j["pairs"] = ordered_json::array();
  for (const auto& p : pairs) {
    j["pairs"].push_back({{"a", p.a},
                          {"b", p.b},
                          {"n", p.test.n},
                          {"w_plus", p.test.w_plus},
                          {"w_minus", p.test.w_minus},
                          {"statistic", p.test.statistic},
                          {"p_value", p.test.p_value},
                          {"exact", p.test.exact},
                          {"degenerate", p.test.degenerate},
                          {"mean_improvement_percent", p.mean_improvement}});
  }
  return j.dump(2) + "\n";
}

}  // namespace sapo::experiment
