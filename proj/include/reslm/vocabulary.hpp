#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "reslm/common.hpp"

namespace reslm {

/// Bidirectional token <-> id map with reserved special tokens.
///
/// Ids are dense 0..V-1 with the specials first: <s>=0, </s>=1, <unk>=2.
/// Remaining ids are assigned by descending training frequency, ties broken
/// lexicographically, so the same corpus always yields the same vocabulary.
/// This is the single index space shared by the n-gram tables and the neural
/// logits; both models address token w by the same integer.
class Vocabulary {
 public:
  static constexpr const char* kBosToken = "<s>";
  static constexpr const char* kEosToken = "</s>";
  static constexpr const char* kUnkToken = "<unk>";

  /// Builds from tokenized lines, keeping tokens with frequency >= min_freq.
  /// Throws Error on empty input (an empty vocabulary is never produced).
  static Vocabulary build(const std::vector<std::vector<std::string>>& lines,
                          int min_freq);

  /// Builds from an explicit token list (specials prepended). Used for
  /// synthetic corpora where the alphabet is known in advance.
  static Vocabulary from_tokens(const std::vector<std::string>& tokens);

  static Vocabulary load(const std::string& path);
  void save(const std::string& path) const;

  int size() const { return static_cast<int>(id_to_token_.size()); }
  int bos_id() const { return 0; }
  int eos_id() const { return 1; }
  int unk_id() const { return 2; }

  /// Token -> id; out-of-vocabulary tokens map to the UNK id.
  int id_or_unk(const std::string& token) const;
  std::optional<int> lookup(const std::string& token) const;
  const std::string& token(int id) const;

  int min_freq() const { return min_freq_; }

  /// FNV hash over the token list; identifies the index space so models
  /// built against different vocabularies can be rejected early.
  uint64_t hash() const { return hash_; }

  bool operator==(const Vocabulary& other) const {
    return id_to_token_ == other.id_to_token_;
  }

 private:
  Vocabulary() = default;
  void add(const std::string& token);
  void finalize();

  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, int> token_to_id_;
  int min_freq_ = 1;
  uint64_t hash_ = 0;
};

}  // namespace reslm
