#include "sapo/taskgen.hpp"

#include <algorithm>
#include <cctype>
#include <deque>
#include <numeric>
#include <sstream>

#include "sapo/rng.hpp"

namespace sapo::taskgen {

namespace {

constexpr std::string_view kDigits = "0123456789abcdefghijklmnopqrstuvwxyz";

std::string_view trim(std::string_view s) {
  const auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_any(std::string_view s, std::string_view seps) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || seps.find(s[i]) != std::string_view::npos) {
      if (i > start) out.push_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

std::string strip_leading_zeros(std::string_view digits) {
  std::size_t i = 0;
  while (i + 1 < digits.size() && digits[i] == '0') ++i;
  return std::string(digits.substr(i));
}

bool all_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

// ---- canonical forms -------------------------------------------------------

std::optional<std::string> canonical_integer(std::string_view s) {
  s = trim(s);
  bool negative = false;
  if (!s.empty() && (s.front() == '-' || s.front() == '+')) {
    negative = s.front() == '-';
    s.remove_prefix(1);
  }
  if (!all_digits(s)) return std::nullopt;
  auto digits = strip_leading_zeros(s);
  if (digits == "0") negative = false;
  return negative ? "-" + digits : digits;
}

std::optional<std::string> canonical_base_digits(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  std::string lowered;
  for (char c : s) {
    const char l = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (kDigits.find(l) == std::string_view::npos) return std::nullopt;
    lowered.push_back(l);
  }
  return strip_leading_zeros(lowered);
}

std::optional<std::string> canonical_fraction(std::string_view s) {
  s = trim(s);
  const auto slash = s.find('/');
  if (slash == std::string_view::npos) return std::nullopt;
  auto num = canonical_integer(s.substr(0, slash));
  auto den = canonical_integer(s.substr(slash + 1));
  if (!num || !den || den->front() == '-' || *den == "0") return std::nullopt;
  return *num + "/" + *den;
}

std::optional<std::string> canonical_decimal(std::string_view s) {
  s = trim(s);
  bool negative = false;
  if (!s.empty() && (s.front() == '-' || s.front() == '+')) {
    negative = s.front() == '-';
    s.remove_prefix(1);
  }
  const auto dot = s.find('.');
  std::string_view whole = s.substr(0, dot);
  std::string_view frac = dot == std::string_view::npos ? std::string_view{} : s.substr(dot + 1);
  if (whole.empty() && frac.empty()) return std::nullopt;
  if (!whole.empty() && !all_digits(whole)) return std::nullopt;
  if (!frac.empty() && !all_digits(frac)) return std::nullopt;
  if (dot != std::string_view::npos && frac.empty() && whole.empty()) return std::nullopt;
  std::string w = whole.empty() ? "0" : strip_leading_zeros(whole);
  std::string f(frac);
  while (!f.empty() && f.back() == '0') f.pop_back();
  if (w == "0" && f.empty()) negative = false;
  std::string out = negative ? "-" : "";
  out += w;
  if (!f.empty()) out += "." + f;
  return out;
}

std::optional<std::string> canonical_matrix(std::string_view s) {
  s = trim(s);
  std::string out;
  std::size_t width = 0;
  bool first_row = true;
  for (auto row : split_any(s, "\n;")) {
    row = trim(row);
    if (row.empty()) continue;
    auto cells = split_any(row, " \t,");
    if (cells.empty()) return std::nullopt;
    if (first_row) {
      width = cells.size();
    } else if (cells.size() != width) {
      return std::nullopt;
    }
    if (!first_row) out += '\n';
    for (std::size_t i = 0; i < cells.size(); ++i) {
      auto v = canonical_integer(cells[i]);
      if (!v) return std::nullopt;
      if (i) out += ' ';
      out += *v;
    }
    first_row = false;
  }
  if (first_row) return std::nullopt;
  return out;
}

// ---- exact arithmetic ------------------------------------------------------

// Fixed-point value: mantissa * 10^-scale.
struct Decimal {
  std::int64_t mantissa = 0;
  int scale = 0;
};

std::int64_t pow10(int n) {
  std::int64_t p = 1;
  while (n-- > 0) p *= 10;
  return p;
}

Decimal add(Decimal a, Decimal b, bool subtract) {
  const int scale = std::max(a.scale, b.scale);
  const auto am = a.mantissa * pow10(scale - a.scale);
  const auto bm = b.mantissa * pow10(scale - b.scale);
  return {subtract ? am - bm : am + bm, scale};
}

Decimal mul(Decimal a, Decimal b) { return {a.mantissa * b.mantissa, a.scale + b.scale}; }

std::string format_decimal(Decimal d) {
  const bool negative = d.mantissa < 0;
  auto m = negative ? -d.mantissa : d.mantissa;
  std::string digits = std::to_string(m);
  if (static_cast<int>(digits.size()) <= d.scale) digits.insert(0, d.scale + 1 - digits.size(), '0');
  std::string whole = digits.substr(0, digits.size() - d.scale);
  std::string frac = digits.substr(digits.size() - d.scale);
  std::string raw = (negative ? "-" : "") + whole + (frac.empty() ? "" : "." + frac);
  return *canonical_decimal(raw);
}

Decimal parse_decimal_literal(std::string_view s) {
  const auto dot = s.find('.');
  Decimal d;
  std::string digits(s.substr(0, dot));
  if (dot != std::string_view::npos) {
    digits += s.substr(dot + 1);
    d.scale = static_cast<int>(s.size() - dot - 1);
  }
  if (!all_digits(digits)) throw TaskError("bad operand '" + std::string(s) + "'");
  d.mantissa = std::stoll(digits);
  return d;
}

// Evaluates "a op b op c" with * binding tighter than + and -.
Decimal evaluate_expression(std::string_view expression) {
  auto tokens = split_any(expression, " ");
  if (tokens.empty() || tokens.size() % 2 == 0) {
    throw TaskError("malformed expression '" + std::string(expression) + "'");
  }
  std::vector<Decimal> terms{parse_decimal_literal(tokens[0])};
  std::vector<char> signs{'+'};
  for (std::size_t i = 1; i < tokens.size(); i += 2) {
    if (tokens[i].size() != 1) throw TaskError("bad operator in '" + std::string(expression) + "'");
    const char op = tokens[i][0];
    const auto operand = parse_decimal_literal(tokens[i + 1]);
    if (op == '*') {
      terms.back() = mul(terms.back(), operand);
    } else if (op == '+' || op == '-') {
      terms.push_back(operand);
      signs.push_back(op);
    } else {
      throw TaskError("bad operator in '" + std::string(expression) + "'");
    }
  }
  Decimal acc{};
  for (std::size_t i = 0; i < terms.size(); ++i) acc = add(acc, terms[i], signs[i] == '-');
  return acc;
}

std::string format_in_base(std::uint64_t value, int base) {
  if (value == 0) return "0";
  std::string out;
  while (value) {
    out.push_back(kDigits[value % base]);
    value /= base;
  }
  std::reverse(out.begin(), out.end());
  return out;
}

std::string base_name(int base) { return "base-" + std::to_string(base); }

std::string with_instruction(std::string_view task) {
  std::string prompt(kFormatInstruction);
  prompt += '\n';
  prompt += task;
  return prompt;
}

Question make_question(SpecialtyId id, int difficulty, std::uint64_t seed, std::string task,
                       std::string truth) {
  return Question{Specialty(id, difficulty), with_instruction(task), std::move(truth), seed,
                  VerifierMetadata{verifier_id_for(id), "answer"}};
}

std::vector<std::vector<int>> nearest_zero_distances(const std::vector<std::vector<int>>& cells) {
  const auto rows = cells.size();
  const auto cols = cells.front().size();
  std::vector<std::vector<int>> dist(rows, std::vector<int>(cols, -1));
  std::deque<std::pair<std::size_t, std::size_t>> frontier;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      if (cells[r][c] == 0) {
        dist[r][c] = 0;
        frontier.emplace_back(r, c);
      }
  while (!frontier.empty()) {
    auto [r, c] = frontier.front();
    frontier.pop_front();
    const int dr[] = {-1, 1, 0, 0};
    const int dc[] = {0, 0, -1, 1};
    for (int k = 0; k < 4; ++k) {
      const auto nr = static_cast<std::ptrdiff_t>(r) + dr[k];
      const auto nc = static_cast<std::ptrdiff_t>(c) + dc[k];
      if (nr < 0 || nc < 0 || nr >= static_cast<std::ptrdiff_t>(rows) ||
          nc >= static_cast<std::ptrdiff_t>(cols))
        continue;
      if (dist[nr][nc] != -1) continue;
      dist[nr][nc] = dist[r][c] + 1;
      frontier.emplace_back(nr, nc);
    }
  }
  return dist;
}

std::string join_matrix(const std::vector<std::vector<int>>& m, char row_sep) {
  std::string out;
  for (std::size_t r = 0; r < m.size(); ++r) {
    if (r) out += row_sep;
    for (std::size_t c = 0; c < m[r].size(); ++c) {
      if (c) out += ' ';
      out += std::to_string(m[r][c]);
    }
  }
  return out;
}

std::string random_expression(Rng& rng, int operands, bool decimal) {
  static constexpr std::string_view kOps = "+-*";
  std::string expr;
  for (int i = 0; i < operands; ++i) {
    if (i) {
      expr += ' ';
      expr += kOps[uniform_below(rng, kOps.size())];
      expr += ' ';
    }
    if (decimal) {
      const auto tenths = uniform_int(rng, 1, 99);
      expr += std::to_string(tenths / 10) + "." + std::to_string(tenths % 10);
    } else {
      expr += std::to_string(uniform_int(rng, 0, 9));
    }
  }
  return expr;
}

}  // namespace

// ---- registry --------------------------------------------------------------

std::string_view to_string(SpecialtyId id) {
  switch (id) {
    case SpecialtyId::base_conversion: return "base_conversion";
    case SpecialtyId::basic_arithmetic: return "basic_arithmetic";
    case SpecialtyId::fraction_simplification: return "fraction_simplification";
    case SpecialtyId::decimal_arithmetic: return "decimal_arithmetic";
    case SpecialtyId::binary_matrix: return "binary_matrix";
  }
  return "unknown";
}

SpecialtyId specialty_from_string(std::string_view name) {
  for (auto id : kAllSpecialties)
    if (to_string(id) == name) return id;
  throw TaskError("unknown specialty '" + std::string(name) + "'");
}

DifficultyRange difficulty_range(SpecialtyId id) {
  switch (id) {
    case SpecialtyId::base_conversion: return {4, 12, 5};
    case SpecialtyId::basic_arithmetic: return {2, 4, 2};
    case SpecialtyId::fraction_simplification: return {1, 3, 1};
    case SpecialtyId::decimal_arithmetic: return {2, 4, 2};
    case SpecialtyId::binary_matrix: return {2, 4, 3};
  }
  throw TaskError("unregistered specialty");
}

Specialty::Specialty(SpecialtyId id) : Specialty(id, difficulty_range(id).fallback) {}

Specialty::Specialty(SpecialtyId id, int difficulty) : id_(id), difficulty_(difficulty) {
  const auto range = difficulty_range(id);
  if (difficulty < range.min || difficulty > range.max) {
    throw TaskError("difficulty " + std::to_string(difficulty) + " for " + std::string(to_string(id)) +
                    " outside [" + std::to_string(range.min) + ", " + std::to_string(range.max) + "]");
  }
}

std::string verifier_id_for(SpecialtyId id) { return std::string(to_string(id)) + "/v1"; }

std::optional<SpecialtyId> specialty_for_verifier(std::string_view verifier_id) {
  for (auto id : kAllSpecialties)
    if (verifier_id_for(id) == verifier_id) return id;
  return std::nullopt;
}

// ---- generation ------------------------------------------------------------

Question generate(Specialty specialty, std::uint64_t instance_seed) {
  Rng rng(derive_seed(instance_seed, {static_cast<std::uint64_t>(specialty.id()),
                                      static_cast<std::uint64_t>(specialty.difficulty())}));
  const int d = specialty.difficulty();
  switch (specialty.id()) {
    case SpecialtyId::basic_arithmetic: {
      auto q = build::arithmetic(random_expression(rng, d, false));
      q.specialty = specialty;
      q.instance_seed = instance_seed;
      return q;
    }
    case SpecialtyId::decimal_arithmetic: {
      auto q = build::decimal(random_expression(rng, d, true));
      q.specialty = specialty;
      q.instance_seed = instance_seed;
      return q;
    }
    case SpecialtyId::base_conversion: {
      static constexpr int kBases[] = {2, 8, 10, 16};
      const auto from = kBases[uniform_below(rng, 4)];
      auto to = kBases[uniform_below(rng, 3)];
      if (to == from) to = kBases[3];
      const auto value = static_cast<std::uint64_t>(uniform_int(rng, 2, (std::int64_t{1} << d) - 1));
      auto q = build::base_conversion(value, from, to);
      q.specialty = specialty;
      q.instance_seed = instance_seed;
      return q;
    }
    case SpecialtyId::fraction_simplification: {
      const std::int64_t top = 9 * d;
      std::int64_t p, q;
      do {
        p = uniform_int(rng, 1, top);
        q = uniform_int(rng, 2, top);
      } while (p == q || std::gcd(p, q) != 1);
      const auto k = uniform_int(rng, 2, 4 * d + 1);
      auto question = build::fraction(p * k, q * k);
      question.specialty = specialty;
      question.instance_seed = instance_seed;
      return question;
    }
    case SpecialtyId::binary_matrix: {
      std::vector<std::vector<int>> cells(d, std::vector<int>(d));
      bool has_zero = false;
      for (auto& row : cells)
        for (auto& cell : row) {
          cell = uniform_below(rng, 3) == 0 ? 0 : 1;
          has_zero |= cell == 0;
        }
      if (!has_zero) cells[uniform_below(rng, d)][uniform_below(rng, d)] = 0;
      auto q = build::binary_matrix(cells);
      q.specialty = specialty;
      q.instance_seed = instance_seed;
      return q;
    }
  }
  throw TaskError("unregistered specialty");
}

namespace build {

Question arithmetic(std::string_view expression) {
  const auto value = evaluate_expression(expression);
  const int operands = static_cast<int>(split_any(expression, " ").size() + 1) / 2;
  const auto range = difficulty_range(SpecialtyId::basic_arithmetic);
  return make_question(SpecialtyId::basic_arithmetic, std::clamp(operands, range.min, range.max), 0,
                       "Calculate: " + std::string(expression), std::to_string(value.mantissa));
}

Question decimal(std::string_view expression) {
  const auto value = evaluate_expression(expression);
  const int operands = static_cast<int>(split_any(expression, " ").size() + 1) / 2;
  const auto range = difficulty_range(SpecialtyId::decimal_arithmetic);
  return make_question(SpecialtyId::decimal_arithmetic, std::clamp(operands, range.min, range.max), 0,
                       "Calculate exactly: " + std::string(expression), format_decimal(value));
}

Question base_conversion(std::uint64_t value, int from_base, int to_base) {
  if (from_base < 2 || from_base > 36 || to_base < 2 || to_base > 36) {
    throw TaskError("base outside [2, 36]");
  }
  int bits = 1;
  while ((value >> bits) != 0) ++bits;
  const auto range = difficulty_range(SpecialtyId::base_conversion);
  return make_question(SpecialtyId::base_conversion, std::clamp(bits, range.min, range.max), 0,
                       "Convert the " + base_name(from_base) + " number " + format_in_base(value, from_base) +
                           " to " + base_name(to_base) + ".",
                       format_in_base(value, to_base));
}

Question fraction(std::int64_t numerator, std::int64_t denominator) {
  if (denominator <= 0 || numerator < 0) throw TaskError("fraction needs numerator >= 0, denominator > 0");
  const auto g = std::gcd(numerator, denominator);
  return make_question(SpecialtyId::fraction_simplification,
                       difficulty_range(SpecialtyId::fraction_simplification).fallback, 0,
                       "Simplify the fraction " + std::to_string(numerator) + "/" +
                           std::to_string(denominator) + " to lowest terms.",
                       std::to_string(numerator / g) + "/" + std::to_string(denominator / g));
}

Question binary_matrix(const std::vector<std::vector<int>>& cells) {
  if (cells.empty() || cells.front().empty()) throw TaskError("empty matrix");
  bool has_zero = false;
  for (const auto& row : cells) {
    if (row.size() != cells.front().size()) throw TaskError("ragged matrix");
    for (int v : row) {
      if (v != 0 && v != 1) throw TaskError("matrix cells must be 0 or 1");
      has_zero |= v == 0;
    }
  }
  if (!has_zero) throw TaskError("matrix needs at least one 0");
  const auto range = difficulty_range(SpecialtyId::binary_matrix);
  const int side = static_cast<int>(std::max(cells.size(), cells.front().size()));
  return make_question(SpecialtyId::binary_matrix, std::clamp(side, range.min, range.max), 0,
                       "Give the distance from each cell to the nearest 0:\n" + join_matrix(cells, '\n'),
                       join_matrix(nearest_zero_distances(cells), '\n'));
}

}  // namespace build

// ---- verification ----------------------------------------------------------

std::string wrap_answer(std::string_view answer) {
  return "<answer>" + std::string(answer) + "</answer>";
}

std::optional<std::string> extract_answer(std::string_view completion, std::string_view tag) {
  const std::string open = "<" + std::string(tag) + ">";
  const std::string close = "</" + std::string(tag) + ">";
  const auto end = completion.rfind(close);
  if (end == std::string_view::npos) return std::nullopt;
  const auto begin = completion.substr(0, end).rfind(open);
  if (begin == std::string_view::npos) return std::nullopt;
  const auto start = begin + open.size();
  return std::string(completion.substr(start, end - start));
}

std::optional<std::string> canonicalize(SpecialtyId id, std::string_view answer) {
  switch (id) {
    case SpecialtyId::basic_arithmetic: return canonical_integer(answer);
    case SpecialtyId::base_conversion: return canonical_base_digits(answer);
    case SpecialtyId::fraction_simplification: return canonical_fraction(answer);
    case SpecialtyId::decimal_arithmetic: return canonical_decimal(answer);
    case SpecialtyId::binary_matrix: return canonical_matrix(answer);
  }
  return std::nullopt;
}

VerifierResult verify(const Question& question, std::string_view completion) {
  const auto id = specialty_for_verifier(question.metadata.verifier_id);
  if (!id) throw TaskError("no verifier named '" + question.metadata.verifier_id + "'");
  VerifierResult result;
  auto span = extract_answer(completion, question.metadata.answer_tag);
  if (!span) return result;
  result.parsed_answer = std::string(trim(*span));
  const auto got = canonicalize(*id, *result.parsed_answer);
  const auto want = canonicalize(*id, question.ground_truth);
  if (got && want && *got == *want) result.score = 1.0;
  return result;
}

std::string corrupt_final_digit(std::string_view answer) {
  std::string out(answer);
  for (auto it = out.rbegin(); it != out.rend(); ++it) {
    const char c = *it;
    if (c >= '0' && c <= '8') {
      *it = static_cast<char>(c + 1);
      return out;
    }
    if (c == '9') {
      *it = '0';
      return out;
    }
    const char l = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (l >= 'a' && l <= 'e') {
      *it = static_cast<char>(c + 1);
      return out;
    }
    if (l == 'f') {
      *it = '0';
      return out;
    }
  }
  return out;
}

}  // namespace sapo::taskgen
