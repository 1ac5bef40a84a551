#pragma once

#include <Eigen/Core>
#include <functional>
#include <map>
#include <vector>

#include "reslm/corpus.hpp"
#include "reslm/vocabulary.hpp"

namespace reslm::oracle {

/// Brute-force interpolated modified-KN scorer used only to check the
/// production query path. Counts, adjusted counts, discounts and the
/// recursion are all recomputed here with plain ordered maps and a literal
/// top-down evaluation of U + b * P_lower; no tables of interpolated
/// probabilities, no longest-match shortcut, no caching. Shares only the
/// Vocabulary (and the written-down estimation rules) with production code.
class ReferenceKN {
 public:
  ReferenceKN(const TokenizedCorpus& corpus, int n, const Vocabulary& vocab);

  /// Natural-log probability by literal recursion. O(n) map lookups per
  /// level; intended for corpora of at most ~10k tokens.
  double ref_logprob(int word, const std::vector<int>& context) const;

  /// Sum of exp(ref_logprob) over all predictable tokens, for normalization
  /// self-checks.
  double distribution_sum(const std::vector<int>& context) const;

  struct Discounts {
    double d1, d2, d3p;
  };
  const Discounts& discounts(int k) const { return discounts_[static_cast<size_t>(k - 1)]; }

 private:
  double prob(int word, const int* context, size_t len) const;

  int n_;
  int vocab_size_;
  int bos_id_;
  // adjusted_[k-1]: gram -> adjusted count; tallies_[k-1]: context -> {denom, n1, n2, n3p}
  struct Tally {
    uint64_t denom = 0, n1 = 0, n2 = 0, n3p = 0;
  };
  std::vector<std::map<std::vector<int>, uint64_t>> adjusted_;
  std::vector<std::map<std::vector<int>, Tally>> tallies_;
  std::vector<Discounts> discounts_;
};

/// Perplexity of a corpus under the exact generating chain (the entropy
/// floor for any learned model, up to sampling noise). Sentences are decoded
/// back to regular-token indices through the vocabulary; the deterministic
/// EOS position contributes zero NLL.
double ref_generator_ppl(const MarkovGenerator& gen, const TokenizedCorpus& corpus,
                         const Vocabulary& vocab);

/// Central finite-difference gradient of f at x (step eps per coordinate).
Eigen::ArrayXd fd_gradient(const std::function<double(const Eigen::ArrayXd&)>& f,
                           const Eigen::ArrayXd& x, double eps = 1e-5);

/// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor).
double max_rel_error(const Eigen::ArrayXd& a, const Eigen::ArrayXd& b,
                     double floor = 1e-3);

}  // namespace reslm::oracle
