#pragma once

#include <optional>
#include <string>
#include <vector>

#include "reslm/corpus.hpp"
#include "reslm/eval.hpp"
#include "reslm/fusion.hpp"
#include "reslm/neural_lm.hpp"
#include "reslm/ngram.hpp"

namespace reslm {

enum class TrainMode { kVanilla, kNgramRes, kProbInter };

std::string to_string(TrainMode m);
TrainMode train_mode_from_string(const std::string& s);

struct TrainConfig {
  int epochs = 10;
  int batch_size = 32;
  int max_len = 64;
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double grad_clip_norm = 1.0;
  uint64_t seed = 1;
  TrainMode mode = TrainMode::kVanilla;
  FusionConfig fusion;  // ignored for mode=vanilla
  int early_stop_patience = 5;

  void validate() const;
};

struct TrainLog {
  std::vector<double> train_loss;          // per-epoch token-weighted mean
  std::vector<double> valid_ppl;           // per-epoch
  std::vector<double> alpha_at_epoch_end;  // effective alpha trace
  std::vector<double> epoch_seconds;
  int selected_epoch = -1;                 // 0-based, best validation PPL
  double selected_valid_ppl = 0;
  double final_alpha = 0;                  // effective alpha after training
  int64_t total_updates = 0;
  std::string mode;

  std::string to_json() const;
};

/// N-gram models for fused training with optional per-sentence domain
/// routing; empty domain vectors mean every sentence uses models[0].
struct NgramSource {
  std::vector<const KneserNeyModel*> models;
  std::vector<int> train_domains;
  std::vector<int> valid_domains;

  static NgramSource single(const KneserNeyModel& model) { return {{&model}, {}, {}}; }
};

/// MLE training through the fused softmax (mode=ngram_res), plain cross
/// entropy (vanilla), or plain training with probability-interpolated
/// validation (prob_inter). Gradients reach only the neural parameters: the
/// n-gram log-distribution enters the graph as a constant bias. Validation
/// PPL is computed each epoch with the same mode at the current effective
/// alpha; the best-validation parameters are returned. Deterministic given
/// (seed, config, corpora).
std::pair<NeuralLM, TrainLog> train(const NeuralLM& init,
                                    const NgramSource* ngram,
                                    const TokenizedCorpus& train_corpus,
                                    const TokenizedCorpus& valid_corpus,
                                    const TrainConfig& config);

/// Continues training from a checkpoint on domain data (fresh optimizer
/// state). Zero epochs returns the parameters unchanged. Comparison arm for
/// the domain experiment; never touches the n-gram models.
NeuralLM finetune(const NeuralLM& model, const NgramSource* ngram,
                  const TokenizedCorpus& domain_train,
                  const TokenizedCorpus& domain_valid, const TrainConfig& config);

}  // namespace reslm
