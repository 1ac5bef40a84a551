#pragma once

#include <memory>
#include <string>
#include <vector>

#include "reslm/corpus.hpp"
#include "reslm/fusion.hpp"
#include "reslm/neural_lm.hpp"
#include "reslm/ngram.hpp"

namespace reslm {

/// Per-sentence negative log-likelihoods and token counts for one corpus.
struct ScoreResult {
  std::vector<double> sentence_nll;
  std::vector<int64_t> sentence_tokens;
  double total_nll = 0;
  int64_t total_tokens = 0;

  double corpus_ppl() const;
  std::vector<double> sentence_ppl() const;
};

/// A frozen model that can assign per-token log probabilities to a corpus.
class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual std::string id() const = 0;
  virtual uint64_t vocab_hash() const = 0;
  virtual ScoreResult score(const TokenizedCorpus& corpus) const = 0;
};

class NgramOnlyScorer : public Scorer {
 public:
  explicit NgramOnlyScorer(const KneserNeyModel& model) : model_(&model) {}
  std::string id() const override { return "ngram-only"; }
  uint64_t vocab_hash() const override { return model_->vocab_hash(); }
  ScoreResult score(const TokenizedCorpus& corpus) const override;

 private:
  const KneserNeyModel* model_;
};

/// Batched neural scoring; `mode` selects vanilla log-softmax, logits-level
/// fusion at a fixed alpha, or probability interpolation. Multi-domain
/// routing: sentence_domain[i] picks the n-gram model for corpus sentence i
/// (empty = all sentences use model 0).
class NeuralScorer : public Scorer {
 public:
  enum class Mode { kVanilla, kFused, kProbInter };

  NeuralScorer(const NeuralLM& model, Mode mode = Mode::kVanilla,
               std::vector<const KneserNeyModel*> ngrams = {},
               std::vector<int> sentence_domain = {}, double alpha = 0,
               double lambda = 0.5, double prob_floor = kDefaultProbFloor);

  std::string id() const override;
  uint64_t vocab_hash() const override { return model_->vocab_hash(); }
  ScoreResult score(const TokenizedCorpus& corpus) const override;

 private:
  const NeuralLM* model_;
  Mode mode_;
  std::vector<const KneserNeyModel*> ngrams_;
  std::vector<int> sentence_domain_;
  double alpha_;
  double lambda_;
  double prob_floor_;
};

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

struct EvalReport {
  double corpus_ppl = 0;
  std::vector<double> sentence_ppl;
  int64_t token_count = 0;
  std::string scorer_id;
  std::string corpus_source;
  std::string config_hash;

  std::string to_csv() const;   // rows: scorer,corpus,metric,value,config_hash
  std::string to_text() const;
};

EvalReport corpus_ppl(const Scorer& scorer, const TokenizedCorpus& corpus,
                      const std::string& config_hash = "");

struct BinReport {
  struct Bin {
    double mean_ngram_ppl = 0;
    double mean_comparison_ppl = 0;
    int count = 0;
  };
  std::vector<Bin> bins;
  std::string comparison_id;
  std::string config_hash;

  std::string to_csv() const;  // bin,ngram_ppl,comparison_ppl,count
  std::string to_text() const;
};

/// Sentences sorted by n-gram sentence PPL (ties by original index), split
/// into B contiguous bins whose sizes differ by at most one (earlier bins
/// take the extra sentence); per-bin means for both scorers.
BinReport bin_report(const KneserNeyModel& ngram, const Scorer& comparison,
                     const TokenizedCorpus& corpus, int num_bins = 5,
                     const std::string& config_hash = "");

struct DomainMatrix {
  std::vector<std::string> domains;       // row/column labels
  std::vector<std::vector<double>> ppl;   // [ngram domain][test domain]
  std::vector<int> best_row_per_column;
  std::string checkpoint_hash;            // identical across all cells
  std::string config_hash;

  std::string to_csv() const;  // ngram_domain,test_domain,ppl
  std::string to_text() const;
};

/// Fuses one frozen neural model with each domain's n-gram model and scores
/// every test corpus: cell [i][j] = PPL of (neural + ngram_i) on corpus_j.
DomainMatrix domain_matrix(const NeuralLM& neural,
                           const std::vector<const KneserNeyModel*>& ngrams,
                           const std::vector<const TokenizedCorpus*>& tests,
                           const std::vector<std::string>& domains, double alpha,
                           const std::string& config_hash = "");

}  // namespace reslm
