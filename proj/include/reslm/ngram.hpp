#pragma once

#include <Eigen/Core>
#include <array>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "reslm/common.hpp"
#include "reslm/corpus.hpp"
#include "reslm/vocabulary.hpp"

namespace reslm {

/// Id sequences are packed into u32strings so the per-order tables can use
/// standard hashing; substr/compare give suffix and prefix handling for free.
using IdKey = std::u32string;

IdKey make_key(const int* ids, size_t len);
IdKey make_key(const std::vector<int>& ids);
std::vector<int> key_to_ids(const IdKey& key);

constexpr double kDefaultProbFloor = 1e-10;

// ---------------------------------------------------------------------------
// Counting
// ---------------------------------------------------------------------------

/// Raw k-gram counts for k = 1..n, collected from BOS-padded sentences.
/// Every k-gram ends at a real token (EOS included); BOS appears only in
/// context positions.
class CountTable {
 public:
  CountTable(int order, int bos_id) : order_(order), bos_id_(bos_id), tables_(static_cast<size_t>(order)) {}

  int order() const { return order_; }
  int bos_id() const { return bos_id_; }
  uint64_t total_tokens() const { return total_tokens_; }

  const std::unordered_map<IdKey, uint64_t>& at_order(int k) const {
    return tables_[static_cast<size_t>(k - 1)];
  }
  std::unordered_map<IdKey, uint64_t>& at_order(int k) {
    return tables_[static_cast<size_t>(k - 1)];
  }
  void add_tokens(uint64_t n) { total_tokens_ += n; }

 private:
  int order_;
  int bos_id_;
  uint64_t total_tokens_ = 0;
  std::vector<std::unordered_map<IdKey, uint64_t>> tables_;
};

CountTable count_ngrams(const TokenizedCorpus& corpus, int n, int bos_id);

// ---------------------------------------------------------------------------
// Adjusted counts
// ---------------------------------------------------------------------------

/// Per-context tallies over one order's adjusted counts: the number of
/// distinct continuations with adjusted count 1, 2, >=3, and the sum of
/// adjusted counts (the shared denominator of Eq-style U and b).
struct ContextTally {
  uint64_t n1 = 0, n2 = 0, n3p = 0;
  uint64_t denom = 0;
};

/// Highest order keeps raw counts; each lower-order key's count becomes the
/// number of distinct observed single-token left-extensions, except keys
/// beginning with BOS, which can never be suffix-extended and keep raw
/// counts. Also carries counts-of-counts n1..n4 per order and per-context
/// tallies, both computed from the adjusted values.
class AdjustedCounts {
 public:
  explicit AdjustedCounts(int order, int bos_id)
      : order_(order), bos_id_(bos_id),
        adjusted_(static_cast<size_t>(order)),
        counts_of_counts_(static_cast<size_t>(order), {0, 0, 0, 0}),
        contexts_(static_cast<size_t>(order)) {}

  int order() const { return order_; }
  int bos_id() const { return bos_id_; }

  const std::unordered_map<IdKey, uint64_t>& at_order(int k) const {
    return adjusted_[static_cast<size_t>(k - 1)];
  }
  std::unordered_map<IdKey, uint64_t>& at_order(int k) {
    return adjusted_[static_cast<size_t>(k - 1)];
  }

  /// n1..n4 for grams of order k.
  const std::array<uint64_t, 4>& counts_of_counts(int k) const {
    return counts_of_counts_[static_cast<size_t>(k - 1)];
  }

  /// Tallies for contexts of order-k grams (context length k-1).
  const std::unordered_map<IdKey, ContextTally>& contexts(int k) const {
    return contexts_[static_cast<size_t>(k - 1)];
  }

  void finalize();  // recomputes counts-of-counts and context tallies

 private:
  int order_;
  int bos_id_;
  std::vector<std::unordered_map<IdKey, uint64_t>> adjusted_;
  std::vector<std::array<uint64_t, 4>> counts_of_counts_;
  std::vector<std::unordered_map<IdKey, ContextTally>> contexts_;
};

AdjustedCounts adjust_counts(const CountTable& counts);

// ---------------------------------------------------------------------------
// Discounts
// ---------------------------------------------------------------------------

/// Three absolute discounts per order, selected by adjusted count (1, 2, >=3).
struct OrderDiscounts {
  double d1 = 0.5, d2 = 0.5, d3p = 0.5;
  bool fallback = false;  // sparse counts-of-counts forced the 0.5 default

  double select(uint64_t adjusted) const {
    return adjusted == 1 ? d1 : adjusted == 2 ? d2 : d3p;
  }
};

struct DiscountSet {
  std::vector<OrderDiscounts> per_order;  // index k-1

  const OrderDiscounts& at_order(int k) const {
    return per_order[static_cast<size_t>(k - 1)];
  }
};

/// Closed-form count-of-count discounts with Y = n1/(n1+2*n2):
///   D1 = 1 - 2*Y*n2/n1, D2 = 2 - 3*Y*n3/n2, D3+ = 3 - 4*Y*n4/n3,
/// each clamped to [eps, i - eps] with eps = 1e-6. Any zero denominator
/// (n1, n2 or n3) switches the whole order to the 0.5 fallback.
DiscountSet estimate_discounts(const AdjustedCounts& adjusted);

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

/// Interpolated modified Kneser-Ney model.
///
/// Stored probabilities are the fully interpolated values
///   P(w|h) = max(a(hw) - D(a(hw)), 0)/denom(h) + b(h) * P(w|h')
/// with the uniform distribution over predictable tokens (all but BOS) as
/// the base below unigrams. Queries use longest-suffix lookup with stored
/// log backoff weights, which reproduces the recursion exactly: an entry hit
/// returns the stored value, otherwise the context's backoff (1 when the
/// context was never observed) multiplies the next-shorter query. The
/// unigram table is dense over predictable tokens, so queries never fall
/// through past order 1. BOS is context-only and never predicted.
class KneserNeyModel {
 public:
  int order() const { return order_; }
  int vocab_size() const { return vocab_size_; }
  int bos_id() const { return bos_id_; }
  uint64_t vocab_hash() const { return vocab_hash_; }
  const DiscountSet& discounts() const { return discounts_; }

  /// Natural-log probability of `word` after `context` (any length; only the
  /// last n-1 ids matter). Throws if word is the BOS id.
  double logprob(int word, const std::vector<int>& context) const;
  double logprob(int word, const int* context, size_t len) const;

  /// Natural-log distribution over the full vocabulary: component w equals
  /// logprob(w, context) for w != BOS; the BOS slot carries log(prob_floor).
  Eigen::VectorXd full_distribution(const std::vector<int>& context,
                                    double prob_floor = kDefaultProbFloor) const;
  Eigen::VectorXd full_distribution(const int* context, size_t len,
                                    double prob_floor = kDefaultProbFloor) const;

  /// exp(-(1/L) * sum_k log P(x_k | BOS-padded context)); L counts EOS.
  double sentence_ppl(const std::vector<int>& sentence) const;

  void save(const std::string& path) const;
  static KneserNeyModel load(const std::string& path);

  /// Byte-stable serialization (used for isolation checks and hashing).
  std::string serialize() const;

  // Table access for the ARPA codec; contexts(len) maps contexts of the given
  // length to natural-log backoff weights.
  const std::unordered_map<IdKey, double>& grams(int k) const {
    return logprob_[static_cast<size_t>(k - 1)];
  }
  const std::unordered_map<IdKey, double>& contexts(int len) const {
    return backoff_log_[static_cast<size_t>(len)];
  }
  const std::vector<double>& unigram_logprob() const { return unigram_logprob_; }

 private:
  friend KneserNeyModel estimate_model(const AdjustedCounts&, const DiscountSet&,
                                       const Vocabulary&);
  friend KneserNeyModel import_arpa(const std::string&, const Vocabulary&);
  KneserNeyModel() = default;

  int order_ = 0;
  int vocab_size_ = 0;
  int bos_id_ = 0;
  uint64_t vocab_hash_ = 0;
  DiscountSet discounts_;
  // logprob_[k-1]: keys of length k (context + word), natural-log stored
  // probabilities; order 1 lives in the dense unigram array instead.
  std::vector<std::unordered_map<IdKey, double>> logprob_;
  // backoff_log_[len]: contexts of the given length -> natural-log backoff.
  // Length 0 (the empty context) is kept as estimation metadata only.
  std::vector<std::unordered_map<IdKey, double>> backoff_log_;
  std::vector<double> unigram_logprob_;  // dense over V; BOS slot unused
};

KneserNeyModel estimate_model(const AdjustedCounts& adjusted,
                              const DiscountSet& discounts,
                              const Vocabulary& vocab);

/// Convenience: count + adjust + discount + estimate.
KneserNeyModel train_kneser_ney(const TokenizedCorpus& corpus, int n,
                                const Vocabulary& vocab);

/// Unbounded memo of full_distribution vectors keyed by truncated context.
/// Confine an instance to one worker; results are identical with or without
/// it. Clear once per corpus pass to bound memory.
class DistributionCache {
 public:
  DistributionCache(const KneserNeyModel& model, double prob_floor = kDefaultProbFloor)
      : model_(&model), prob_floor_(prob_floor) {}

  std::shared_ptr<const Eigen::VectorXd> get(const int* context, size_t len);
  void clear() { cache_.clear(); }
  size_t size() const { return cache_.size(); }
  const KneserNeyModel& model() const { return *model_; }

 private:
  const KneserNeyModel* model_;
  double prob_floor_;
  std::unordered_map<IdKey, std::shared_ptr<const Eigen::VectorXd>> cache_;
};

}  // namespace reslm
