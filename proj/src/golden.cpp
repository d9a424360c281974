#include "json.hpp"

#include "sapo/rng.hpp"
#include "sapo/taskgen.hpp"

namespace sapo::taskgen {

namespace {

using nlohmann::ordered_json;

void add_specialty_cases(std::vector<GoldenCase>& out, SpecialtyId id) {
  const Specialty specialty(id);
  for (std::uint64_t i = 0; i < 4; ++i) {
    const auto q = generate(specialty, derive_seed(0x601de, {static_cast<std::uint64_t>(id), i}));
    out.push_back({q, "Working it out. " + wrap_answer(q.ground_truth), 1.0});
    out.push_back({q, wrap_answer(corrupt_final_digit(q.ground_truth)), 0.0});
  }
  const auto q = generate(specialty, derive_seed(0x601de, {static_cast<std::uint64_t>(id), 99}));
  const auto wrong = corrupt_final_digit(q.ground_truth);
  out.push_back({q, "<answer>  " + q.ground_truth + "\n</answer>", 1.0});
  out.push_back({q, wrap_answer(wrong) + " no wait " + wrap_answer(q.ground_truth), 1.0});
  out.push_back({q, wrap_answer(q.ground_truth) + " no wait " + wrap_answer(wrong), 0.0});
  out.push_back({q, q.ground_truth, 0.0});
  out.push_back({q, "<answer>" + q.ground_truth, 0.0});
  out.push_back({q, "<answer></answer>", 0.0});
}

}  // namespace

std::vector<GoldenCase> golden_suite() {
  std::vector<GoldenCase> cases;
  for (auto id : kAllSpecialties) add_specialty_cases(cases, id);

  const auto arith = build::arithmetic("3 + 4 * 2");
  cases.push_back({arith, wrap_answer("11"), 1.0});
  cases.push_back({arith, wrap_answer("011"), 1.0});
  cases.push_back({arith, wrap_answer("+11"), 1.0});
  cases.push_back({arith, wrap_answer("14"), 0.0});
  cases.push_back({build::arithmetic("2 - 7"), wrap_answer("-5"), 1.0});

  const auto base = build::base_conversion(42, 10, 2);
  cases.push_back({base, wrap_answer("101010"), 1.0});
  cases.push_back({base, wrap_answer("00101010"), 1.0});
  cases.push_back({base, "no tags at all 101010", 0.0});
  const auto hex = build::base_conversion(255, 10, 16);
  cases.push_back({hex, wrap_answer("FF"), 1.0});
  cases.push_back({hex, wrap_answer("fe"), 0.0});

  const auto frac = build::fraction(24, 36);
  cases.push_back({frac, wrap_answer("2/3"), 1.0});
  cases.push_back({frac, wrap_answer(" 2 / 3 "), 1.0});
  cases.push_back({frac, wrap_answer("4/6"), 0.0});
  cases.push_back({frac, wrap_answer("24/36"), 0.0});
  cases.push_back({frac, wrap_answer("0.667"), 0.0});

  const auto dec = build::decimal("1.5 + 2.5 * 2");
  cases.push_back({dec, wrap_answer("6.5"), 1.0});
  cases.push_back({dec, wrap_answer("6.50"), 1.0});
  cases.push_back({dec, wrap_answer("06.5"), 1.0});
  cases.push_back({dec, wrap_answer("8"), 0.0});
  cases.push_back({build::decimal("0.5 - 1.5"), wrap_answer("-1"), 1.0});

  const auto mat = build::binary_matrix({{1, 0, 1}, {1, 1, 1}, {0, 1, 1}});
  cases.push_back({mat, wrap_answer("1 0 1\n1 1 2\n0 1 2"), 1.0});
  cases.push_back({mat, wrap_answer("1 0 1;1 1 2;0 1 2"), 1.0});
  cases.push_back({mat, wrap_answer("1 0 1\n1 1 2"), 0.0});
  cases.push_back({mat, wrap_answer("1 0 1\n1 1 1\n0 1 1"), 0.0});
  return cases;
}

std::string golden_to_jsonl(const std::vector<GoldenCase>& cases) {
  std::string out;
  for (const auto& c : cases) {
    ordered_json j;
    j["specialty"] = std::string(c.question.specialty.name());
    j["instance_seed"] = c.question.instance_seed;
    j["prompt"] = c.question.prompt;
    j["ground_truth"] = c.question.ground_truth;
    j["completion"] = c.completion;
    j["expected_score"] = c.expected_score;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<GoldenCase> golden_from_jsonl(std::string_view text) {
  std::vector<GoldenCase> cases;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    const auto line = text.substr(start, end - start);
    start = end + 1;
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    const auto id = specialty_from_string(j.at("specialty").get<std::string>());
    Question q{Specialty(id), j.at("prompt").get<std::string>(), j.at("ground_truth").get<std::string>(),
               j.at("instance_seed").get<std::uint64_t>(), VerifierMetadata{verifier_id_for(id), "answer"}};
    cases.push_back({std::move(q), j.at("completion").get<std::string>(), j.at("expected_score").get<double>()});
  }
  return cases;
}

}  // namespace sapo::taskgen
