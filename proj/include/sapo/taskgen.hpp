#pragma once

// Procedurally generated reasoning micro-tasks with rule-based verifiers.
//
// Every question is a pure function of (specialty, difficulty, instance_seed).
// Completions are scored by extracting the last <answer>...</answer> span,
// canonicalizing it for the specialty, and comparing with the ground truth.
// Rewards are binary.

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace sapo::taskgen {

class TaskError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class SpecialtyId {
  base_conversion,
  basic_arithmetic,
  fraction_simplification,
  decimal_arithmetic,
  binary_matrix,
};

inline constexpr std::array<SpecialtyId, 5> kAllSpecialties{
    SpecialtyId::base_conversion, SpecialtyId::basic_arithmetic,
    SpecialtyId::fraction_simplification, SpecialtyId::decimal_arithmetic,
    SpecialtyId::binary_matrix};

std::string_view to_string(SpecialtyId id);

/// Throws TaskError naming the specialty when it is not registered.
SpecialtyId specialty_from_string(std::string_view name);

struct DifficultyRange {
  int min;
  int max;
  int fallback;  // default level
};

/// base_conversion: bit width of the value. basic/decimal arithmetic: operand
/// count. fraction_simplification: magnitude tier. binary_matrix: side length.
DifficultyRange difficulty_range(SpecialtyId id);

class Specialty {
 public:
  explicit Specialty(SpecialtyId id);
  /// Throws TaskError when difficulty is out of bounds.
  Specialty(SpecialtyId id, int difficulty);

  SpecialtyId id() const { return id_; }
  int difficulty() const { return difficulty_; }
  std::string_view name() const { return to_string(id_); }

  friend bool operator==(const Specialty&, const Specialty&) = default;

 private:
  SpecialtyId id_;
  int difficulty_;
};

/// How a completion is parsed. Travels as `verifier_id` on the wire.
struct VerifierMetadata {
  std::string verifier_id;
  std::string answer_tag = "answer";

  friend bool operator==(const VerifierMetadata&, const VerifierMetadata&) = default;
};

struct Question {
  Specialty specialty{SpecialtyId::basic_arithmetic};
  std::string prompt;
  std::string ground_truth;
  std::uint64_t instance_seed = 0;
  VerifierMetadata metadata;

  friend bool operator==(const Question&, const Question&) = default;
};

struct VerifierResult {
  double score = 0.0;
  std::optional<std::string> parsed_answer;
};

inline constexpr std::string_view kFormatInstruction = "Answer inside <answer>...</answer>.";

Question generate(Specialty specialty, std::uint64_t instance_seed);

/// Never throws on malformed completions; they score 0.
/// Throws TaskError if the question's metadata names no known verifier.
VerifierResult verify(const Question& question, std::string_view completion);

/// Verifier id for a specialty, e.g. "basic_arithmetic/v1".
std::string verifier_id_for(SpecialtyId id);

/// Looks up the specialty a verifier id belongs to.
std::optional<SpecialtyId> specialty_for_verifier(std::string_view verifier_id);

/// Places `answer` inside the answer span.
std::string wrap_answer(std::string_view answer);

/// Text of the last complete <tag>...</tag> span, untrimmed.
std::optional<std::string> extract_answer(std::string_view completion, std::string_view tag = "answer");

/// Canonical form of an answer for a specialty, or nullopt if unparseable.
std::optional<std::string> canonicalize(SpecialtyId id, std::string_view answer);

/// Increments the final digit of an answer ('9' wraps to '0', 'f' to '0').
std::string corrupt_final_digit(std::string_view answer);

// Fixed-instance builders. These bypass the seed and are used where a
// specific instance is needed (tests, golden fixtures).
namespace build {
Question arithmetic(std::string_view expression);
Question base_conversion(std::uint64_t value, int from_base, int to_base);
Question fraction(std::int64_t numerator, std::int64_t denominator);
Question decimal(std::string_view expression);
Question binary_matrix(const std::vector<std::vector<int>>& cells);
}  // namespace build

// ---- golden suite -------------------------------------------------------

struct GoldenCase {
  Question question;
  std::string completion;
  double expected_score = 0.0;
};

/// Deterministically constructed fixture cases, >= 10 per specialty.
std::vector<GoldenCase> golden_suite();

/// One JSON object per line: {specialty, instance_seed, prompt, ground_truth,
/// completion, expected_score}.
std::string golden_to_jsonl(const std::vector<GoldenCase>& cases);
std::vector<GoldenCase> golden_from_jsonl(std::string_view text);

}  // namespace sapo::taskgen
