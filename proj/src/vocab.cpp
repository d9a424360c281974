#include "sapo/vocab.hpp"

#include <stdexcept>

namespace sapo {

std::optional<Token> Vocab::encode_char(char c) {
  if (c == '\n') return kNewline;
  const auto u = static_cast<unsigned char>(c);
  if (u >= 0x20 && u <= 0x7e) return static_cast<Token>(kFirstPrintable + (u - 0x20));
  return std::nullopt;
}

std::optional<std::vector<Token>> Vocab::try_encode(std::string_view text) {
  std::vector<Token> out;
  out.reserve(text.size());
  for (char c : text) {
    const auto t = encode_char(c);
    if (!t) return std::nullopt;
    out.push_back(*t);
  }
  return out;
}

std::vector<Token> Vocab::encode(std::string_view text) {
  std::vector<Token> out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    const auto t = encode_char(text[i]);
    if (!t) {
      throw std::invalid_argument("unencodable byte 0x" +
                                  std::to_string(static_cast<unsigned char>(text[i])) + " at offset " +
                                  std::to_string(i));
    }
    out.push_back(*t);
  }
  return out;
}

std::string Vocab::decode(std::span<const Token> tokens) {
  std::string out;
  out.reserve(tokens.size());
  for (Token t : tokens) {
    if (t == kNewline) {
      out.push_back('\n');
    } else if (t >= kFirstPrintable && t < kSize) {
      out.push_back(static_cast<char>(0x20 + (t - kFirstPrintable)));
    }
  }
  return out;
}

}  // namespace sapo
