// Closed-vocabulary tokenizer: lowercase, split on whitespace, punctuation
// characters become single tokens, [a-z0-9_] runs become word tokens.
// Ids 0..4 are reserved for PAD/UNK/BOS/SEP/ANS.
#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace kga {

using TokenId = std::uint32_t;

inline constexpr TokenId kPadId = 0;
inline constexpr TokenId kUnkId = 1;
inline constexpr TokenId kBosId = 2;
inline constexpr TokenId kSepId = 3;
inline constexpr TokenId kAnsId = 4;
inline constexpr std::size_t kNumReserved = 5;

// Lowercase + collapse runs of whitespace to single spaces + strip
// surrounding punctuation. Used for entity-name matching as well.
std::string normalize_text(std::string_view text);

// Normalized surface units in order: word runs and single punctuation marks.
std::vector<std::string> split_units(std::string_view text);

class Vocab {
 public:
  Vocab();

  // Adds the token if unseen and returns its id.
  TokenId add(const std::string& token);

  // Id lookup; kUnkId for out-of-vocabulary tokens.
  TokenId id_of(const std::string& token) const;

  const std::string& token_of(TokenId id) const;
  bool contains(const std::string& token) const;
  std::size_t size() const { return tokens_.size(); }

  // Build from whitespace/punctuation units of the given texts, first-seen order.
  static Vocab build(const std::vector<std::string>& texts);

  void save(const std::string& path) const;   // UTF-8 lines "token<TAB>id"
  static Vocab load(const std::string& path);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> ids_;
};

// Empty text gives an empty sequence; OOV units map to UNK.
std::vector<TokenId> tokenize(std::string_view text, const Vocab& vocab);

// Joins token surface forms with single spaces (reserved tokens excluded).
std::string detokenize(const std::vector<TokenId>& ids, const Vocab& vocab);

}  // namespace kga
