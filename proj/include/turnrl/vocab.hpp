#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace turnrl {

using TokenId = std::uint16_t;

// Fixed word-level vocabulary shared by every environment. Ids are stable:
// they are part of the trajectory dump and checkpoint formats.
namespace tok {
inline constexpr TokenId kPad = 0;
inline constexpr TokenId kBegin = 1;  // start of a query block
inline constexpr TokenId kEnd = 2;    // end-of-response marker
inline constexpr TokenId kAct = 3;    // prompt marker closing each query
}  // namespace tok

class Vocabulary {
 public:
  static const Vocabulary& get();

  std::size_t size() const { return words_.size(); }
  bool contains(std::string_view word) const;
  TokenId id(std::string_view word) const;  // throws std::out_of_range
  const std::string& word(TokenId id) const;

  // Whitespace-delimited. Unknown words throw std::out_of_range.
  std::vector<TokenId> tokenize(std::string_view text) const;
  std::string detokenize(std::span<const TokenId> tokens) const;

  TokenId digit(int d) const;
  // Decimal digits of n, one token each ("1 0" for 10).
  std::vector<TokenId> number(unsigned n) const;

 private:
  Vocabulary();
  std::vector<std::string> words_;
};

}  // namespace turnrl
