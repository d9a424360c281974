#include <filesystem>
#include <thread>

#include "doctest.h"
#include "sapo/judge.hpp"
#include "sapo/judge_server.hpp"
#include "support.hpp"

using namespace sapo;
using namespace sapo::judge;

namespace {

std::vector<taskgen::Specialty> easy() { return {taskgen::Specialty(taskgen::SpecialtyId::basic_arithmetic, 2)}; }

// Answers every question with the same number.
class ConstantNode final : public NodeHandle {
 public:
  explicit ConstantNode(std::string id, std::uint64_t rounds = 0) : id_(std::move(id)), rounds_(rounds) {}
  std::string node_id() const override { return id_; }
  std::uint64_t completed_rounds() const override { return rounds_; }
  std::optional<std::string> answer(const std::string&) override { return taskgen::wrap_answer("8"); }
  std::uint64_t rounds_;

 private:
  std::string id_;
};

class SilentNode final : public NodeHandle {
 public:
  std::string node_id() const override { return "silent"; }
  std::uint64_t completed_rounds() const override { return 0; }
  std::optional<std::string> answer(const std::string&) override { return std::nullopt; }
};

EvalRecord rec(const std::string& node, std::uint64_t round, std::optional<double> score) {
  EvalRecord r;
  r.node_id = node;
  r.normalized_round = round;
  r.score = score;
  return r;
}

}  // namespace

TEST_CASE("a frozen node gets the same scores from identically seeded judges") {
  const auto state = testing::small_base(easy());
  const std::uint64_t rounds = 0;
  std::vector<std::vector<std::optional<double>>> runs;
  for (int k = 0; k < 2; ++k) {
    Judge judge({7, easy()});
    PolicyHandle node("node-0", state, rounds, 24);
    std::vector<std::optional<double>> scores;
    for (int i = 0; i < 50; ++i) scores.push_back(judge.evaluate(node).score);
    CHECK(node.requests() == 50);
    runs.push_back(scores);
  }
  CHECK(runs[0] == runs[1]);
}

TEST_CASE("questions come from the judge's own stream") {
  Judge a({1, easy()}), b({1, easy()}), c({2, easy()});
  CHECK(a.question_for("n", 3, 0) == b.question_for("n", 3, 0));
  CHECK(a.question_for("n", 3, 0) != a.question_for("n", 3, 1));
  CHECK(a.question_for("n", 3, 0) != a.question_for("m", 3, 0));
  CHECK(a.question_for("n", 3, 0) != c.question_for("n", 3, 0));
  ConstantNode n("n", 3);
  const auto r0 = a.evaluate(n);
  const auto r1 = a.evaluate(n);
  CHECK(r0.instance_seed == a.question_for("n", 3, 0).instance_seed);
  CHECK(r1.instance_seed == a.question_for("n", 3, 1).instance_seed);
  CHECK(r1.timestamp > r0.timestamp);
}

TEST_CASE("normalized rounds may not go backwards") {
  Judge judge({1, easy()});
  ConstantNode n("n", 5);
  judge.evaluate(n);
  n.rounds_ = 5;
  CHECK_NOTHROW(judge.evaluate(n));
  n.rounds_ = 4;
  CHECK_THROWS_AS(judge.evaluate(n), JudgeError);
}

TEST_CASE("no answer is logged as a timeout") {
  Judge judge({1, easy()});
  SilentNode n;
  const auto r = judge.evaluate(n);
  CHECK(r.timed_out());
  CHECK(judge.log().size() == 1);
}

TEST_CASE("cumulative curve matches hand-computed running means") {
  const std::vector<EvalRecord> log{rec("a", 2, 1.0), rec("b", 0, 1.0),     rec("a", 0, 0.0),
                                    rec("a", 1, 1.0), rec("a", 1, std::nullopt), rec("a", 0, 1.0)};
  const auto curve = cumulative_curve(log, "a");
  // Ordered by round, stable within a round: (0,0) (0,1) (1,1) (2,1).
  REQUIRE(curve.size() == 4);
  const std::vector<std::pair<std::uint64_t, double>> want{{0, 0.0}, {0, 0.5}, {1, 2.0 / 3.0}, {2, 0.75}};
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(curve[i].first == want[i].first);
    CHECK(curve[i].second == doctest::Approx(want[i].second).epsilon(1e-12));
  }
  CHECK(cumulative_curve(log, "b").size() == 1);
  CHECK(cumulative_curve(log, "zzz").empty());
}

TEST_CASE("log lines round-trip") {
  Judge judge({4, easy()});
  ConstantNode n("n", 1);
  SilentNode s;
  judge.evaluate(n);
  judge.evaluate(s);
  const auto path = std::filesystem::temp_directory_path() / "sapo_judge_test.jsonl";
  judge.write_log(path);
  CHECK(read_log(path) == judge.log());
  std::filesystem::remove(path);
  CHECK(EvalRecord::from_json_line(judge.log()[1].to_json_line()).timed_out());
}

TEST_CASE("judge exchange over loopback") {
  Judge judge({9, easy()});
  JudgeServer server(judge, 0, std::chrono::milliseconds(300));
  const auto expected = judge.question_for("remote", 4, 0);
  const auto score = request_evaluation("127.0.0.1", server.port(), "remote", 4, [&](const std::string& prompt) {
    CHECK(prompt == expected.prompt);
    return taskgen::wrap_answer(expected.ground_truth);
  });
  REQUIRE(score.has_value());
  CHECK(*score == 1.0);

  const auto wrong = request_evaluation("127.0.0.1", server.port(), "remote", 4,
                                        [](const std::string&) { return std::string("<answer>x</answer>"); });
  CHECK(wrong == 0.0);

  const auto slow = request_evaluation(
      "127.0.0.1", server.port(), "sleepy", 0,
      [](const std::string&) {
        std::this_thread::sleep_for(std::chrono::milliseconds(800));
        return std::string("<answer>1</answer>");
      },
      std::chrono::milliseconds(2000));
  CHECK_FALSE(slow.has_value());
  server.stop();
  const auto log = judge.log();
  REQUIRE(log.size() == 3);
  CHECK(log[2].node_id == "sleepy");
  CHECK(log[2].timed_out());
}
