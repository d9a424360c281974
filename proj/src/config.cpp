#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "sapo/experiment.hpp"

namespace sapo::experiment {

using json = nlohmann::json;

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (num_nodes < 1) fail("num_nodes must be at least 1");
  if (rounds < 1) fail("rounds must be at least 1");
  if (splits.empty()) fail("configurations must not be empty");
  for (const auto& s : splits) {
    if (s.local < 1) fail("configuration " + s.name() + ": local samples must be at least 1");
    if (s.external < 0) fail("configuration " + s.name() + ": external samples must be non-negative");
    if (s.local + s.external != batch_size) {
      fail("configuration " + s.name() + " does not add up to batch_size " + std::to_string(batch_size));
    }
  }
  if (seeds.empty()) fail("seeds must not be empty");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) fail("seeds must be distinct");
  if (completions_per_question < 2) fail("completions_per_question must be at least 2");
  if (!(share_fraction >= 0.0 && share_fraction <= 1.0)) fail("share_fraction must lie in [0, 1]");
  if (!(temperature > 0.0)) fail("temperature must be positive");
  if (max_new_tokens < 1) fail("max_new_tokens must be positive");
  if (capacity_per_sender < 1) fail("capacity_per_sender must be positive");
  if (arch.layers < 1 || arch.hidden < 1 || arch.embedding < 1 || arch.context < 2) fail("bad policy architecture");
  if (warmstart_steps < 0 || warmstart_questions < 1) fail("bad warm start schedule");
  if (!(warmstart_learning_rate > 0.0)) fail("warmstart learning_rate must be positive");
  if (!(warmstart_truth_fraction >= 0.0 && warmstart_truth_fraction <= 1.0)) {
    fail("warmstart truth_fraction must lie in [0, 1]");
  }
  try {
    grpo.validate();
  } catch (const grpo::GrpoError& e) {
    fail(std::string("grpo: ") + e.what());
  }
}

std::vector<taskgen::Specialty> ExperimentConfig::active_specialties() const {
  if (!specialties.empty()) return specialties;
  std::vector<taskgen::Specialty> all;
  for (auto id : taskgen::kAllSpecialties) all.emplace_back(id);
  return all;
}

namespace {

// Reads fields out of one JSON object and complains about leftovers.
class Reader {
 public:
  Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + " must be an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->get<T>();
    } catch (const json::exception&) {
      throw ConfigError(where_ + "." + key + " has the wrong type");
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError("unknown key " + where_ + "." + it.key());
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

taskgen::Specialty parse_specialty(const json& j) {
  try {
    if (j.is_string()) return taskgen::Specialty(taskgen::specialty_from_string(j.get<std::string>()));
    if (j.is_object()) {
      const auto id = taskgen::specialty_from_string(j.at("id").get<std::string>());
      if (j.contains("difficulty")) return taskgen::Specialty(id, j.at("difficulty").get<int>());
      return taskgen::Specialty(id);
    }
  } catch (const taskgen::TaskError& e) {
    throw ConfigError(std::string("specialties: ") + e.what());
  } catch (const json::exception&) {
  }
  throw ConfigError("specialties entries must be a name or {\"id\": name, \"difficulty\": n}");
}

}  // namespace

ExperimentConfig parse_config(std::string_view text) {
  json root;
  try {
    root = json::parse(text, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig c;
  Reader top(root, "config");
  top.get("num_nodes", c.num_nodes);
  top.get("rounds", c.rounds);
  top.get("seeds", c.seeds);
  std::string out_dir = c.output_dir.string();
  top.get("output_dir", out_dir);
  c.output_dir = out_dir;

  if (const auto* splits = top.child("configurations")) {
    if (!splits->is_array()) throw ConfigError("configurations must be a list of [local, external] pairs");
    c.splits.clear();
    for (const auto& s : *splits) {
      if (!s.is_array() || s.size() != 2 || !s[0].is_number_integer() || !s[1].is_number_integer()) {
        throw ConfigError("configurations must be a list of [local, external] pairs");
      }
      c.splits.push_back({s[0].get<int>(), s[1].get<int>()});
    }
  }
  std::string transport = "inmemory";
  top.get("transport", transport);
  if (transport == "inmemory") c.transport = TransportKind::inmemory;
  else if (transport == "socket") c.transport = TransportKind::socket;
  else throw ConfigError("transport must be \"inmemory\" or \"socket\", not \"" + transport + "\"");
  std::string scheduler = "phased";
  top.get("scheduler", scheduler);
  if (scheduler == "phased") c.scheduler = Scheduler::phased;
  else if (scheduler == "free") c.scheduler = Scheduler::free;
  else throw ConfigError("scheduler must be \"phased\" or \"free\", not \"" + scheduler + "\"");
  if (const auto* specs = top.child("specialties")) {
    if (!specs->is_array()) throw ConfigError("specialties must be a list");
    for (const auto& s : *specs) c.specialties.push_back(parse_specialty(s));
  }

  if (const auto* n = top.child("node")) {
    Reader r(*n, "node");
    r.get("batch_size", c.batch_size);
    r.get("completions_per_question", c.completions_per_question);
    r.get("share_fraction", c.share_fraction);
    r.get("temperature", c.temperature);
    r.get("max_new_tokens", c.max_new_tokens);
    r.finish();
  }
  if (const auto* g = top.child("grpo")) {
    Reader r(*g, "grpo");
    r.get("eps_low", c.grpo.eps_low);
    r.get("eps_high", c.grpo.eps_high);
    r.get("kl_weight", c.grpo.kl_weight);
    r.get("learning_rate", c.grpo.learning_rate);
    r.get("adam_beta1", c.grpo.adam_beta1);
    r.get("adam_beta2", c.grpo.adam_beta2);
    r.get("adam_eps", c.grpo.adam_eps);
    r.get("std_floor", c.grpo.std_floor);
    r.finish();
  }
  if (const auto* s = top.child("swarm")) {
    Reader r(*s, "swarm");
    r.get("staleness_window", c.staleness_window);
    r.get("capacity_per_sender", c.capacity_per_sender);
    r.finish();
  }
  if (const auto* p = top.child("policy")) {
    Reader r(*p, "policy");
    r.get("layers", c.arch.layers);
    r.get("hidden", c.arch.hidden);
    r.get("embedding", c.arch.embedding);
    r.get("context", c.arch.context);
    r.get("init_seed", c.init_seed);
    r.finish();
  }
  if (const auto* w = top.child("warmstart")) {
    Reader r(*w, "warmstart");
    r.get("steps", c.warmstart_steps);
    r.get("questions_per_step", c.warmstart_questions);
    r.get("learning_rate", c.warmstart_learning_rate);
    r.get("truth_fraction", c.warmstart_truth_fraction);
    r.finish();
  }
  if (const auto* j = top.child("judge")) {
    Reader r(*j, "judge");
    r.get("enabled", c.judge);
    r.get("seed", c.judge_seed);
    r.finish();
  }
  top.finish();
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string config_template() {
  const ExperimentConfig d;
  std::ostringstream o;
  o << R"({
  // Swarm size and length.
  "num_nodes": )" << d.num_nodes << R"(,
  "rounds": )" << d.rounds << R"(,
  // [local, external] groups per round; each pair must sum to node.batch_size.
  "configurations": [[8, 0], [6, 2], [4, 4], [2, 6]],
  "seeds": [1, 2, 3, 4, 5],
  // "inmemory" or "socket" (loopback TCP, one listener per node).
  "transport": "inmemory",
  // "phased" is reproducible; "free" runs every node on its own thread.
  "scheduler": "phased",
  // Names or {"id": name, "difficulty": n}. Empty means all five.
  "specialties": ["base_conversion", "basic_arithmetic", "fraction_simplification",
                  "decimal_arithmetic", "binary_matrix"],
  "output_dir": "runs",

  "node": {
    "batch_size": )" << d.batch_size << R"(,
    "completions_per_question": )" << d.completions_per_question << R"(,
    "share_fraction": )" << d.share_fraction << R"(,
    "temperature": )" << d.temperature << R"(,
    "max_new_tokens": )" << d.max_new_tokens << R"(
  },
  "grpo": {
    "eps_low": )" << d.grpo.eps_low << R"(,
    "eps_high": )" << d.grpo.eps_high << R"(,
    // Only 0 is supported.
    "kl_weight": 0,
    "learning_rate": )" << d.grpo.learning_rate << R"(,
    "adam_beta1": )" << d.grpo.adam_beta1 << R"(,
    "adam_beta2": )" << d.grpo.adam_beta2 << R"(,
    "adam_eps": 1e-8,
    "std_floor": 1e-4
  },
  "swarm": {
    "staleness_window": )" << d.staleness_window << R"(,
    "capacity_per_sender": )" << d.capacity_per_sender << R"(
  },
  "policy": {
    "layers": )" << d.arch.layers << R"(,
    "hidden": )" << d.arch.hidden << R"(,
    "embedding": )" << d.arch.embedding << R"(,
    "context": )" << d.arch.context << R"(,
    "init_seed": )" << d.init_seed << R"(
  },
  // Supervised prior applied once to the initial policy shared by all nodes.
  "warmstart": {
    "steps": )" << d.warmstart_steps << R"(,
    "questions_per_step": )" << d.warmstart_questions << R"(,
    "learning_rate": )" << d.warmstart_learning_rate << R"(,
    "truth_fraction": )" << d.warmstart_truth_fraction << R"(
  },
  // Greedy pass@1 evaluation of every node after every round.
  "judge": {
    "enabled": false,
    "seed": 0
  }
}
)";
  return o.str();
}

}  // namespace sapo::experiment
