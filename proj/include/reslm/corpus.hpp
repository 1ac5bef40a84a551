#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "reslm/common.hpp"
#include "reslm/vocabulary.hpp"

namespace reslm {

/// A corpus encoded to id sequences. Each sentence ends with exactly one EOS
/// id and never contains BOS in its body (BOS is supplied as left context by
/// consumers). All ids are < V.
struct TokenizedCorpus {
  std::vector<std::vector<int>> sentences;
  std::string source_path;
  uint64_t vocab_hash = 0;

  size_t size() const { return sentences.size(); }
  /// Total token count including EOS, excluding BOS.
  int64_t token_count() const;
};

/// Encodes one tokenized line: OOV tokens map to UNK, EOS is appended, BOS is
/// never embedded. Literal "<s>"/"</s>" tokens in the body map to UNK so the
/// corpus invariants hold unconditionally. Total function.
std::vector<int> encode(const std::vector<std::string>& line,
                        const Vocabulary& vocab);

/// Splits a line of text on whitespace runs.
std::vector<std::string> split_tokens(const std::string& line);

/// Loads a one-sentence-per-line UTF-8 corpus file. Empty lines encode to an
/// EOS-only sentence.
TokenizedCorpus load_corpus(const std::string& path, const Vocabulary& vocab);

TokenizedCorpus corpus_from_lines(const std::vector<std::vector<std::string>>& lines,
                                  const Vocabulary& vocab,
                                  const std::string& source = "<memory>");

// ---------------------------------------------------------------------------
// Batching
// ---------------------------------------------------------------------------

/// One padded batch of next-token prediction rows.
///
/// Row r holds a prefix of one sentence: input[r][t] is the token fed at step
/// t (position 0 is always BOS), target[r][t] the token to predict, and
/// loss_mask[r][t] marks the positions that contribute to the loss. Sentences
/// longer than max_len are split at max_len boundaries; a later segment's row
/// repeats the sentence prefix with the prefix positions masked out, so
/// context never leaks across sentences and every corpus token is a loss
/// position in exactly one batch slot.
struct Batch {
  int rows = 0;
  int cols = 0;
  std::vector<int> input;         // rows*cols, row-major
  std::vector<int> target;        // rows*cols, row-major
  std::vector<uint8_t> loss_mask; // rows*cols, row-major
  std::vector<int> sentence_of_row;

  int at(const std::vector<int>& v, int r, int t) const { return v[static_cast<size_t>(r) * cols + t]; }
  int64_t unmasked_count() const;
};

/// Deterministic given seed: sentence order is shuffled once, segments of a
/// sentence stay consecutive, rows are packed batch_size at a time.
std::vector<Batch> make_batches(const TokenizedCorpus& corpus, int batch_size,
                                int max_len, uint64_t seed, int bos_id);

// ---------------------------------------------------------------------------
// Synthetic corpora
// ---------------------------------------------------------------------------

/// Fixed random order-k Markov chain over m regular tokens w0..w{m-1}.
///
/// Sentences have exactly sentence_len regular tokens followed by EOS, so the
/// true model predicts EOS with probability 1 at the final position. States
/// are the last k tokens with a BOS sentinel for unseen prefix slots; each
/// state's transition row is a sparse mixture derived deterministically from
/// the seed (see row()). Per-token cross-entropy of the generator is computed
/// exactly by propagating the state distribution position by position.
class MarkovGenerator {
 public:
  MarkovGenerator(uint64_t seed, int num_tokens, int order, int sentence_len,
                  int branching);

  /// Domain variant: rows are (1-divergence)*base_row + divergence*own_row,
  /// where the base rows come from a shared seed.
  MarkovGenerator(uint64_t seed, uint64_t base_seed, double divergence,
                  int num_tokens, int order, int sentence_len, int branching);

  /// Uniform chain: every state transitions uniformly over all m tokens.
  static MarkovGenerator uniform(int num_tokens, int order, int sentence_len);

  /// Transition distribution over the m regular tokens for the state given by
  /// the last `order` emitted token indices (use -1 for BOS slots).
  Eigen::VectorXd row(const std::vector<int>& state) const;

  /// Samples `num_sentences` sentences as token-string lines.
  std::vector<std::vector<std::string>> sample(uint64_t stream_seed,
                                               int num_sentences) const;

  /// Exact per-regular-token cross-entropy (nats) of the generator on its own
  /// output, from the transition table.
  double step_cross_entropy() const;

  /// Exact per-token cross-entropy including the deterministic EOS position:
  /// sentence_len * H_step / (sentence_len + 1).
  double token_cross_entropy() const;

  int num_tokens() const { return num_tokens_; }
  int order() const { return order_; }
  int sentence_len() const { return sentence_len_; }
  std::vector<std::string> token_strings() const;

  /// Scores a corpus of regular-token index sequences with the exact
  /// generating distribution; returns perplexity. Tokens outside a state's
  /// support yield +inf. `sentences` are regular-token indices (no EOS);
  /// the deterministic EOS position contributes zero NLL over len+1 tokens.
  double score_ppl(const std::vector<std::vector<int>>& sentences) const;

 private:
  int state_index(const std::vector<int>& state) const;
  Eigen::VectorXd pure_row(uint64_t seed, int state_idx) const;

  uint64_t seed_ = 0;
  uint64_t base_seed_ = 0;
  double divergence_ = 1.0;  // weight on the own table; 0 = pure base
  bool uniform_ = false;
  int num_tokens_ = 0;
  int order_ = 1;
  int sentence_len_ = 0;
  int branching_ = 0;
};

/// Generator description returned with synthetic corpora; everything a test
/// needs to compute the entropy floor.
struct GeneratorInfo {
  int order = 0;
  int num_tokens = 0;
  int sentence_len = 0;
  int branching = 0;
  uint64_t seed = 0;
  double step_cross_entropy = 0;   // nats per regular token
  double token_cross_entropy = 0;  // nats per token incl. deterministic EOS
  double generator_ppl = 0;        // exp(token_cross_entropy)
  std::string note;
};

struct SynthCorpus {
  TokenizedCorpus train, valid, test;
  Vocabulary vocab;
  MarkovGenerator generator;
  GeneratorInfo info;
};

/// Deterministic synthetic corpus from a fixed random order-k Markov chain.
/// vocab_size counts the full vocabulary including the 3 specials, so the
/// chain runs over vocab_size - 3 regular tokens. order must be in {1,2,3}.
SynthCorpus synth_markov(uint64_t seed, int vocab_size, int order,
                         int num_sentences, int sentence_len,
                         int branching = 8);

struct SynthDomains {
  SynthCorpus domain_a, domain_b;  // share one vocabulary
};

/// Two domains whose transition tables interpolate between a shared base
/// table and independent random tables with weight `divergence` in (0,1].
SynthDomains synth_domains(uint64_t seed, int vocab_size, double divergence,
                           int order = 2, int num_sentences = 2000,
                           int sentence_len = 20, int branching = 8);

}  // namespace reslm
