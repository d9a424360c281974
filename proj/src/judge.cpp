#include "sapo/judge.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "sapo/rng.hpp"

namespace sapo::judge {

using ordered_json = nlohmann::ordered_json;

std::string EvalRecord::to_json_line() const {
  ordered_json j;
  j["node_id"] = node_id;
  j["normalized_round"] = normalized_round;
  j["specialty"] = std::string(taskgen::to_string(specialty));
  j["instance_seed"] = instance_seed;
  j["score"] = score ? ordered_json(*score) : ordered_json(nullptr);
  j["timestamp"] = timestamp;
  if (!score) j["timeout"] = true;
  return j.dump() + '\n';
}

EvalRecord EvalRecord::from_json_line(std::string_view line) {
  try {
    const auto j = ordered_json::parse(line);
    EvalRecord r;
    r.node_id = j.at("node_id").get<std::string>();
    r.normalized_round = j.at("normalized_round").get<std::uint64_t>();
    r.specialty = taskgen::specialty_from_string(j.at("specialty").get<std::string>());
    r.instance_seed = j.at("instance_seed").get<std::uint64_t>();
    if (!j.at("score").is_null()) r.score = j.at("score").get<double>();
    r.timestamp = j.at("timestamp").get<std::uint64_t>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw JudgeError(std::string("bad judge log line: ") + e.what());
  }
}

PolicyHandle::PolicyHandle(std::string node_id, const PolicyState& state, const std::uint64_t& completed_rounds,
                           int max_new_tokens)
    : node_id_(std::move(node_id)), state_(&state), rounds_(&completed_rounds), max_new_tokens_(max_new_tokens) {}

std::optional<std::string> PolicyHandle::answer(const std::string& prompt) {
  ++requests_;
  SamplingOptions opts;
  opts.count = 1;
  opts.greedy = true;
  opts.max_new_tokens = max_new_tokens_;
  return sample_completions(*state_, prompt, opts).front().completion_text;
}

Judge::Judge(JudgeConfig config) : config_(std::move(config)) {
  if (config_.specialties.empty()) throw JudgeError("judge needs at least one specialty");
}

taskgen::Question Judge::question_for(const std::string& node_id, std::uint64_t normalized_round,
                                      std::uint64_t index) const {
  Rng rng(derive_seed(config_.seed, {hash_string(node_id), normalized_round, index}));
  const auto& spec = config_.specialties[uniform_below(rng, config_.specialties.size())];
  return taskgen::generate(spec, rng());
}

Judge::NodeSlot& Judge::slot(const std::string& node_id) {
  std::lock_guard lock(mutex_);
  auto& s = slots_[node_id];
  if (!s) s = std::make_unique<NodeSlot>();
  return *s;
}

EvalRecord Judge::evaluate(NodeHandle& node) {
  const auto id = node.node_id();
  auto& s = slot(id);
  std::lock_guard busy(s.busy);

  const auto round = node.completed_rounds();
  if (s.last_round && round < *s.last_round) {
    throw JudgeError("normalized round of " + id + " went backwards (" + std::to_string(round) + " after " +
                     std::to_string(*s.last_round) + ")");
  }
  if (s.last_round != round) s.index_in_round = 0;
  const auto question = question_for(id, round, s.index_in_round++);
  s.last_round = round;

  EvalRecord rec;
  rec.node_id = id;
  rec.normalized_round = round;
  rec.specialty = question.specialty.id();
  rec.instance_seed = question.instance_seed;
  if (const auto text = node.answer(question.prompt)) rec.score = taskgen::verify(question, *text).score;

  std::lock_guard lock(mutex_);
  rec.timestamp = clock_++;
  log_.push_back(rec);
  return rec;
}

std::vector<EvalRecord> Judge::log() const {
  std::lock_guard lock(mutex_);
  return log_;
}

void Judge::write_log(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw JudgeError("cannot write " + path.string());
  for (const auto& r : log()) out << r.to_json_line();
}

std::vector<std::pair<std::uint64_t, double>> cumulative_curve(const std::vector<EvalRecord>& records,
                                                               const std::string& node_id) {
  std::vector<const EvalRecord*> mine;
  for (const auto& r : records)
    if (r.node_id == node_id && r.score) mine.push_back(&r);
  std::stable_sort(mine.begin(), mine.end(), [](const EvalRecord* a, const EvalRecord* b) {
    return a->normalized_round < b->normalized_round;
  });
  std::vector<std::pair<std::uint64_t, double>> curve;
  curve.reserve(mine.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < mine.size(); ++i) {
    sum += *mine[i]->score;
    curve.emplace_back(mine[i]->normalized_round, sum / static_cast<double>(i + 1));
  }
  return curve;
}

std::vector<EvalRecord> read_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw JudgeError("cannot open " + path.string());
  std::vector<EvalRecord> out;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(EvalRecord::from_json_line(line));
  return out;
}

}  // namespace sapo::judge
