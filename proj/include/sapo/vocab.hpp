#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sapo {

using Token = std::int32_t;

/// Character-level vocabulary: PAD, BOS, EOS, newline, then printable ASCII
/// 0x20..0x7e. Anything else is unencodable.
class Vocab {
 public:
  static constexpr Token kPad = 0;
  static constexpr Token kBos = 1;
  static constexpr Token kEos = 2;
  static constexpr Token kNewline = 3;
  static constexpr Token kFirstPrintable = 4;
  static constexpr int kSize = kFirstPrintable + (0x7e - 0x20 + 1);

  static constexpr int size() { return kSize; }

  static bool is_special(Token t) { return t == kPad || t == kBos || t == kEos; }

  static std::optional<Token> encode_char(char c);

  /// Throws std::invalid_argument on the first unencodable byte.
  static std::vector<Token> encode(std::string_view text);
  static std::optional<std::vector<Token>> try_encode(std::string_view text);

  /// Special tokens decode to nothing.
  static std::string decode(std::span<const Token> tokens);
};

}  // namespace sapo
