#include "reslm/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace reslm {

namespace {
// Evaluation batching is fixed so reports are reproducible; correctness does
// not depend on these (token-weighted sums are grouping-invariant).
constexpr int kEvalBatchSize = 64;
constexpr int kEvalMaxLen = 256;
constexpr uint64_t kEvalSeed = 0x5eedec0de;

std::string fmt(double v) {
  std::ostringstream out;
  out.precision(12);
  out << v;
  return out.str();
}
}  // namespace

double ScoreResult::corpus_ppl() const {
  return std::exp(total_nll / static_cast<double>(total_tokens));
}

std::vector<double> ScoreResult::sentence_ppl() const {
  std::vector<double> out(sentence_nll.size());
  for (size_t i = 0; i < out.size(); ++i)
    out[i] = std::exp(sentence_nll[i] / static_cast<double>(sentence_tokens[i]));
  return out;
}

ScoreResult NgramOnlyScorer::score(const TokenizedCorpus& corpus) const {
  ScoreResult result;
  result.sentence_nll.resize(corpus.size(), 0.0);
  result.sentence_tokens.resize(corpus.size(), 0);
  const int n1 = model_->order() - 1;
  std::vector<int> ctx;
  for (size_t s = 0; s < corpus.size(); ++s) {
    const auto& sent = corpus.sentences[s];
    ctx.assign(static_cast<size_t>(n1), model_->bos_id());
    double nll = 0;
    for (int tok : sent) {
      nll -= model_->logprob(tok, ctx);
      ctx.push_back(tok);
    }
    result.sentence_nll[s] = nll;
    result.sentence_tokens[s] = static_cast<int64_t>(sent.size());
  }
  for (size_t s = 0; s < corpus.size(); ++s) {
    result.total_nll += result.sentence_nll[s];
    result.total_tokens += result.sentence_tokens[s];
  }
  return result;
}

NeuralScorer::NeuralScorer(const NeuralLM& model, Mode mode,
                           std::vector<const KneserNeyModel*> ngrams,
                           std::vector<int> sentence_domain, double alpha,
                           double lambda, double prob_floor)
    : model_(&model),
      mode_(mode),
      ngrams_(std::move(ngrams)),
      sentence_domain_(std::move(sentence_domain)),
      alpha_(alpha),
      lambda_(lambda),
      prob_floor_(prob_floor) {
  if (mode_ != Mode::kVanilla) {
    if (ngrams_.empty())
      throw Error("NeuralScorer: fused/prob-inter scoring needs an n-gram model");
    for (const auto* kn : ngrams_)
      if (kn->vocab_hash() != model_->vocab_hash())
        throw Error("NeuralScorer: n-gram and neural vocabularies differ");
  }
}

std::string NeuralScorer::id() const {
  switch (mode_) {
    case Mode::kVanilla:
      return "vanilla";
    case Mode::kFused:
      return "ngram_res(alpha=" + fmt(alpha_) + ")";
    case Mode::kProbInter:
      return "prob_inter(lambda=" + fmt(lambda_) + ")";
  }
  return "?";
}

ScoreResult NeuralScorer::score(const TokenizedCorpus& corpus) const {
  if (corpus.vocab_hash != 0 && corpus.vocab_hash != model_->vocab_hash())
    throw Error("score: corpus and model vocabularies differ");
  ScoreResult result;
  result.sentence_nll.resize(corpus.size(), 0.0);
  result.sentence_tokens.resize(corpus.size(), 0);

  const bool use_ngram = mode_ != Mode::kVanilla && !(mode_ == Mode::kFused && alpha_ == 0);
  std::vector<std::unique_ptr<DistributionCache>> caches;
  if (use_ngram)
    for (const auto* kn : ngrams_)
      caches.push_back(std::make_unique<DistributionCache>(*kn, prob_floor_));

  auto batches = make_batches(corpus, kEvalBatchSize, kEvalMaxLen, kEvalSeed,
                              /*bos_id=*/0);
  std::vector<int> ctx;
  for (const Batch& batch : batches) {
    autograd::Tape tape;
    autograd::Tensor logits = model_->forward(tape, batch.input, batch.rows,
                                              batch.cols, /*training=*/false,
                                              nullptr);
    const auto& lv = logits.value();
    for (int r = 0; r < batch.rows; ++r) {
      const int sent = batch.sentence_of_row[static_cast<size_t>(r)];
      DistributionCache* cache = nullptr;
      int order1 = 0;
      if (use_ngram) {
        int domain = sentence_domain_.empty() ? 0 : sentence_domain_[static_cast<size_t>(sent)];
        cache = caches[static_cast<size_t>(domain)].get();
        order1 = cache->model().order() - 1;
      }
      for (int t = 0; t < batch.cols; ++t) {
        const size_t pos = static_cast<size_t>(r) * batch.cols + t;
        if (!batch.loss_mask[pos]) continue;
        const int64_t p = NeuralLM::position_index(r, t, batch.rows);
        Eigen::VectorXd row =
            Eigen::Map<const Eigen::VectorXd>(lv.data() + p * model_->vocab_size(),
                                              model_->vocab_size());
        const int target = batch.target[pos];
        double logp;
        if (!use_ngram) {
          logp = log_softmax_vec(row)[target];
        } else {
          // Context: BOS-padded tokens preceding the target within this row.
          ctx.clear();
          const int have = t + 1;
          for (int i = 0; i < order1 - have; ++i) ctx.push_back(cache->model().bos_id());
          for (int i = std::max(0, have - order1); i <= t; ++i)
            ctx.push_back(batch.input[static_cast<size_t>(r) * batch.cols + i]);
          auto dist = cache->get(ctx.data(), ctx.size());
          if (mode_ == Mode::kFused) {
            logp = fused_log_distribution(row, *dist, alpha_,
                                          /*C=*/0.0)[target];
          } else {
            Eigen::VectorXd p_ng = dist->array().exp().matrix();
            Eigen::VectorXd p_nu = softmax_vec(row);
            logp = std::log(prob_interpolate(p_ng, p_nu, lambda_)[target]);
          }
        }
        result.sentence_nll[static_cast<size_t>(sent)] -= logp;
        result.sentence_tokens[static_cast<size_t>(sent)] += 1;
      }
    }
  }
  for (size_t s = 0; s < corpus.size(); ++s) {
    result.total_nll += result.sentence_nll[s];
    result.total_tokens += result.sentence_tokens[s];
  }
  return result;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

EvalReport corpus_ppl(const Scorer& scorer, const TokenizedCorpus& corpus,
                      const std::string& config_hash) {
  if (corpus.vocab_hash != 0 && scorer.vocab_hash() != corpus.vocab_hash)
    throw Error("corpus_ppl: scorer and corpus vocabularies differ");
  ScoreResult result = scorer.score(corpus);
  EvalReport report;
  report.corpus_ppl = result.corpus_ppl();
  report.sentence_ppl = result.sentence_ppl();
  report.token_count = result.total_tokens;
  report.scorer_id = scorer.id();
  report.corpus_source = corpus.source_path;
  report.config_hash = config_hash;
  return report;
}

std::string EvalReport::to_csv() const {
  std::ostringstream out;
  out << "scorer,corpus,metric,value,config_hash\n";
  out << scorer_id << "," << corpus_source << ",ppl," << fmt(corpus_ppl) << ","
      << config_hash << "\n";
  out << scorer_id << "," << corpus_source << ",token_count," << token_count
      << "," << config_hash << "\n";
  out << scorer_id << "," << corpus_source << ",sentence_count,"
      << sentence_ppl.size() << "," << config_hash << "\n";
  return out.str();
}

std::string EvalReport::to_text() const {
  std::ostringstream out;
  out << "scorer: " << scorer_id << "\ncorpus: " << corpus_source
      << "\ntokens: " << token_count << "\nsentences: " << sentence_ppl.size()
      << "\nppl: " << fmt(corpus_ppl) << "\n";
  return out.str();
}

BinReport bin_report(const KneserNeyModel& ngram, const Scorer& comparison,
                     const TokenizedCorpus& corpus, int num_bins,
                     const std::string& config_hash) {
  if (num_bins < 2) throw Error("bin_report: need at least 2 bins");
  const int S = static_cast<int>(corpus.size());
  if (S < num_bins)
    throw Error("bin_report: fewer sentences (" + std::to_string(S) +
                ") than bins (" + std::to_string(num_bins) + ")");

  std::vector<double> ngram_ppl(static_cast<size_t>(S));
  for (int i = 0; i < S; ++i)
    ngram_ppl[static_cast<size_t>(i)] =
        ngram.sentence_ppl(corpus.sentences[static_cast<size_t>(i)]);
  std::vector<double> comp_ppl = comparison.score(corpus).sentence_ppl();

  std::vector<int> order(static_cast<size_t>(S));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const double pa = ngram_ppl[static_cast<size_t>(a)];
    const double pb = ngram_ppl[static_cast<size_t>(b)];
    if (pa != pb) return pa < pb;
    return a < b;  // ties by original sentence index
  });

  BinReport report;
  report.comparison_id = comparison.id();
  report.config_hash = config_hash;
  const int base = S / num_bins;
  const int extra = S % num_bins;
  int at = 0;
  for (int b = 0; b < num_bins; ++b) {
    const int size = base + (b < extra ? 1 : 0);  // earlier bins take the extra
    BinReport::Bin bin;
    bin.count = size;
    for (int i = 0; i < size; ++i, ++at) {
      bin.mean_ngram_ppl += ngram_ppl[static_cast<size_t>(order[static_cast<size_t>(at)])];
      bin.mean_comparison_ppl += comp_ppl[static_cast<size_t>(order[static_cast<size_t>(at)])];
    }
    bin.mean_ngram_ppl /= size;
    bin.mean_comparison_ppl /= size;
    report.bins.push_back(bin);
  }
  return report;
}

std::string BinReport::to_csv() const {
  std::ostringstream out;
  out << "bin,ngram_ppl,comparison_ppl,count,comparison,config_hash\n";
  for (size_t b = 0; b < bins.size(); ++b)
    out << (b + 1) << "," << fmt(bins[b].mean_ngram_ppl) << ","
        << fmt(bins[b].mean_comparison_ppl) << "," << bins[b].count << ","
        << comparison_id << "," << config_hash << "\n";
  return out.str();
}

std::string BinReport::to_text() const {
  std::ostringstream out;
  out << "bin  count  ngram_ppl      " << comparison_id << "\n";
  for (size_t b = 0; b < bins.size(); ++b)
    out << (b + 1) << "    " << bins[b].count << "    "
        << fmt(bins[b].mean_ngram_ppl) << "    " << fmt(bins[b].mean_comparison_ppl)
        << "\n";
  const double first_gap = bins.front().mean_ngram_ppl - bins.front().mean_comparison_ppl;
  const double last_gap = bins.back().mean_ngram_ppl - bins.back().mean_comparison_ppl;
  out << "bin gap (ngram - comparison): first=" << fmt(first_gap)
      << " last=" << fmt(last_gap) << "\n";
  return out.str();
}

DomainMatrix domain_matrix(const NeuralLM& neural,
                           const std::vector<const KneserNeyModel*>& ngrams,
                           const std::vector<const TokenizedCorpus*>& tests,
                           const std::vector<std::string>& domains, double alpha,
                           const std::string& config_hash) {
  if (ngrams.size() != tests.size() || ngrams.size() != domains.size())
    throw Error("domain_matrix: domains, n-gram models and test corpora must align");
  for (const auto* kn : ngrams)
    if (kn->vocab_hash() != neural.vocab_hash())
      throw Error("domain_matrix: vocabulary mismatch between models");

  DomainMatrix matrix;
  matrix.domains = domains;
  matrix.config_hash = config_hash;
  matrix.checkpoint_hash = to_hex(neural.parameter_hash());
  const size_t D = ngrams.size();
  matrix.ppl.assign(D, std::vector<double>(D, 0.0));
  for (size_t i = 0; i < D; ++i) {
    NeuralScorer scorer(neural, NeuralScorer::Mode::kFused, {ngrams[i]}, {}, alpha);
    for (size_t j = 0; j < D; ++j)
      matrix.ppl[i][j] = scorer.score(*tests[j]).corpus_ppl();
  }
  matrix.best_row_per_column.resize(D);
  for (size_t j = 0; j < D; ++j) {
    size_t best = 0;
    for (size_t i = 1; i < D; ++i)
      if (matrix.ppl[i][j] < matrix.ppl[best][j]) best = i;
    matrix.best_row_per_column[j] = static_cast<int>(best);
  }
  return matrix;
}

std::string DomainMatrix::to_csv() const {
  std::ostringstream out;
  out << "ngram_domain,test_domain,ppl,checkpoint_hash,config_hash\n";
  for (size_t i = 0; i < domains.size(); ++i)
    for (size_t j = 0; j < domains.size(); ++j)
      out << domains[i] << "," << domains[j] << "," << fmt(ppl[i][j]) << ","
          << checkpoint_hash << "," << config_hash << "\n";
  return out.str();
}

std::string DomainMatrix::to_text() const {
  std::ostringstream out;
  out << "rows = n-gram domain, columns = test domain (PPL; * marks the best row)\n";
  out << "        ";
  for (const auto& d : domains) out << d << "        ";
  out << "\n";
  for (size_t i = 0; i < domains.size(); ++i) {
    out << domains[i] << "  ";
    for (size_t j = 0; j < domains.size(); ++j) {
      out << fmt(ppl[i][j]);
      out << (best_row_per_column[j] == static_cast<int>(i) ? "*  " : "   ");
    }
    out << "\n";
  }
  return out.str();
}

}  // namespace reslm
