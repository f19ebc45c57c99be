#include "kga/vocab.hpp"

#include <cctype>
#include <fstream>
#include <stdexcept>

namespace kga {

namespace {

bool is_word_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_';
}

bool is_space_char(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

const char* reserved_name(TokenId id) {
  switch (id) {
    case kPadId: return "<pad>";
    case kUnkId: return "<unk>";
    case kBosId: return "<bos>";
    case kSepId: return "<sep>";
    case kAnsId: return "<ans>";
    default: return nullptr;
  }
}

}  // namespace

std::string normalize_text(std::string_view text) {
  std::string lowered;
  lowered.reserve(text.size());
  for (char c : text) lowered.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));

  // Strip surrounding punctuation/whitespace.
  std::size_t begin = 0, end = lowered.size();
  auto is_strippable = [](char c) { return !is_word_char(c); };
  while (begin < end && is_strippable(lowered[begin])) ++begin;
  while (end > begin && is_strippable(lowered[end - 1])) --end;

  std::string out;
  out.reserve(end - begin);
  bool pending_space = false;
  for (std::size_t i = begin; i < end; ++i) {
    if (is_space_char(lowered[i])) {
      pending_space = true;
      continue;
    }
    if (pending_space && !out.empty()) out.push_back(' ');
    pending_space = false;
    out.push_back(lowered[i]);
  }
  return out;
}

std::vector<std::string> split_units(std::string_view text) {
  std::vector<std::string> units;
  std::string current;
  for (char raw : text) {
    const char c = static_cast<char>(std::tolower(static_cast<unsigned char>(raw)));
    if (is_word_char(c)) {
      current.push_back(c);
      continue;
    }
    if (!current.empty()) {
      units.push_back(std::move(current));
      current.clear();
    }
    if (!is_space_char(c)) units.emplace_back(1, c);  // punctuation is its own token
  }
  if (!current.empty()) units.push_back(std::move(current));
  return units;
}

Vocab::Vocab() {
  for (TokenId id = 0; id < kNumReserved; ++id) {
    tokens_.emplace_back(reserved_name(id));
    ids_.emplace(tokens_.back(), id);
  }
}

TokenId Vocab::add(const std::string& token) {
  auto it = ids_.find(token);
  if (it != ids_.end()) return it->second;
  const TokenId id = static_cast<TokenId>(tokens_.size());
  tokens_.push_back(token);
  ids_.emplace(token, id);
  return id;
}

TokenId Vocab::id_of(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnkId : it->second;
}

const std::string& Vocab::token_of(TokenId id) const {
  if (id >= tokens_.size()) throw std::out_of_range("Vocab: id " + std::to_string(id) + " out of range");
  return tokens_[id];
}

bool Vocab::contains(const std::string& token) const { return ids_.count(token) != 0; }

Vocab Vocab::build(const std::vector<std::string>& texts) {
  Vocab v;
  for (const auto& text : texts) {
    for (auto& unit : split_units(text)) v.add(unit);
  }
  return v;
}

void Vocab::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("Vocab::save: cannot open " + path);
  for (std::size_t id = 0; id < tokens_.size(); ++id) {
    out << tokens_[id] << '\t' << id << '\n';
  }
  if (!out) throw std::runtime_error("Vocab::save: write failed for " + path);
}

Vocab Vocab::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("Vocab::load: cannot open " + path);
  Vocab v;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw std::runtime_error("Vocab::load: malformed line in " + path);
    const std::string token = line.substr(0, tab);
    const TokenId id = static_cast<TokenId>(std::stoul(line.substr(tab + 1)));
    if (id < kNumReserved) continue;  // reserved rows are fixed by construction
    const TokenId got = v.add(token);
    if (got != id) {
      throw std::runtime_error("Vocab::load: non-contiguous id " + std::to_string(id) + " in " + path);
    }
  }
  return v;
}

std::vector<TokenId> tokenize(std::string_view text, const Vocab& vocab) {
  std::vector<TokenId> ids;
  for (auto& unit : split_units(text)) ids.push_back(vocab.id_of(unit));
  return ids;
}

std::string detokenize(const std::vector<TokenId>& ids, const Vocab& vocab) {
  std::string out;
  for (TokenId id : ids) {
    if (id < kNumReserved) continue;
    if (!out.empty()) out.push_back(' ');
    out += vocab.token_of(id);
  }
  return out;
}

}  // namespace kga
