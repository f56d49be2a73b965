#include "turnrl/vocab.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace turnrl {

namespace {

constexpr const char* kWords[] = {
    // specials
    "<pad>", "<bos>", "<eos>", "<act>",
    // sokoban grid symbols
    "#", "_", "O", "X", "√", "P", "S", "/",
    // moves
    "up", "down", "left", "right",
    // digits
    "0", "1", "2", "3", "4", "5", "6", "7", "8", "9",
    // query scaffolding
    "budget", "grid", "goal", "under", "results", "page", "product", "of",
    "phase", "empty",
    // shop verbs
    "search", "click", "next", "prev", "buy",
    // shop categories
    "shirt", "shoe", "hat", "bag", "watch",
    // shop colors
    "red", "blue", "green", "black", "white",
    // shop sizes
    "small", "medium", "large", "xl",
    // free-form reasoning filler
    "think", "hmm", "so", "then", "maybe", "push", "box", "target", "wall",
    "move", "first", "ok", "done", "need", "go", "the", "to", "a", "is",
    "not", "and", "it"};

}  // namespace

Vocabulary::Vocabulary() : words_(std::begin(kWords), std::end(kWords)) {
  if (words_.size() > 128) throw std::logic_error("vocabulary exceeds 128 words");
}

const Vocabulary& Vocabulary::get() {
  static const Vocabulary vocab;
  return vocab;
}

bool Vocabulary::contains(std::string_view word) const {
  return std::find(words_.begin(), words_.end(), word) != words_.end();
}

TokenId Vocabulary::id(std::string_view word) const {
  auto it = std::find(words_.begin(), words_.end(), word);
  if (it == words_.end())
    throw std::out_of_range("unknown word '" + std::string(word) + "'");
  return static_cast<TokenId>(it - words_.begin());
}

const std::string& Vocabulary::word(TokenId id) const {
  if (id >= words_.size())
    throw std::out_of_range("token id " + std::to_string(id) + " out of vocabulary");
  return words_[id];
}

std::vector<TokenId> Vocabulary::tokenize(std::string_view text) const {
  std::vector<TokenId> out;
  std::istringstream in{std::string(text)};
  std::string w;
  while (in >> w) out.push_back(id(w));
  return out;
}

std::string Vocabulary::detokenize(std::span<const TokenId> tokens) const {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += word(tokens[i]);
  }
  return out;
}

TokenId Vocabulary::digit(int d) const {
  if (d < 0 || d > 9) throw std::out_of_range("digit out of range");
  return static_cast<TokenId>(id("0") + d);
}

std::vector<TokenId> Vocabulary::number(unsigned n) const {
  std::vector<TokenId> out;
  for (char c : std::to_string(n)) out.push_back(digit(c - '0'));
  return out;
}

}  // namespace turnrl
