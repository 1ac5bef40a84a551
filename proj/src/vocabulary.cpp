#include "reslm/vocabulary.hpp"

#include <algorithm>
#include <fstream>
#include <map>

namespace reslm {

namespace {
bool is_special(const std::string& t) {
  return t == Vocabulary::kBosToken || t == Vocabulary::kEosToken ||
         t == Vocabulary::kUnkToken;
}
}  // namespace

Vocabulary Vocabulary::build(const std::vector<std::vector<std::string>>& lines,
                             int min_freq) {
  if (min_freq < 1) throw Error("build_vocabulary: min_freq must be >= 1");
  if (lines.empty()) throw Error("build_vocabulary: empty input");

  // std::map keeps the frequency pass order-independent of line permutation.
  std::map<std::string, int64_t> freq;
  for (const auto& line : lines)
    for (const auto& tok : line)
      if (!is_special(tok)) ++freq[tok];

  std::vector<std::pair<std::string, int64_t>> kept;
  kept.reserve(freq.size());
  for (const auto& [tok, f] : freq)
    if (f >= min_freq) kept.emplace_back(tok, f);
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  Vocabulary v;
  v.min_freq_ = min_freq;
  v.add(kBosToken);
  v.add(kEosToken);
  v.add(kUnkToken);
  for (const auto& [tok, f] : kept) v.add(tok);
  v.finalize();
  return v;
}

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& tokens) {
  Vocabulary v;
  v.add(kBosToken);
  v.add(kEosToken);
  v.add(kUnkToken);
  for (const auto& tok : tokens) {
    if (is_special(tok)) continue;
    if (v.token_to_id_.count(tok))
      throw Error("from_tokens: duplicate token '" + tok + "'");
    v.add(tok);
  }
  v.finalize();
  return v;
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open vocabulary file: " + path);
  Vocabulary v;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) throw ParseError(lineno, "empty token in vocabulary file");
    if (v.token_to_id_.count(line))
      throw ParseError(lineno, "duplicate token '" + line + "'");
    v.add(line);
  }
  if (v.id_to_token_.size() < 3 || v.id_to_token_[0] != kBosToken ||
      v.id_to_token_[1] != kEosToken || v.id_to_token_[2] != kUnkToken)
    throw ParseError(0, "vocabulary file must start with <s>, </s>, <unk>");
  v.finalize();
  return v;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open vocabulary file for writing: " + path);
  for (const auto& tok : id_to_token_) out << tok << '\n';
  if (!out) throw IoError("write failed: " + path);
}

int Vocabulary::id_or_unk(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? unk_id() : it->second;
}

std::optional<int> Vocabulary::lookup(const std::string& token) const {
  auto it = token_to_id_.find(token);
  if (it == token_to_id_.end()) return std::nullopt;
  return it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size())
    throw Error("token id out of range: " + std::to_string(id));
  return id_to_token_[static_cast<size_t>(id)];
}

void Vocabulary::add(const std::string& token) {
  token_to_id_.emplace(token, static_cast<int>(id_to_token_.size()));
  id_to_token_.push_back(token);
}

void Vocabulary::finalize() {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& tok : id_to_token_) {
    h = fnv1a64(tok, h);
    h = fnv1a64("\n", h);
  }
  hash_ = h;
}

}  // namespace reslm
