#include "reslm/trainer.hpp"

#include <chrono>
#include <cmath>
#include <limits>

#include "json.hpp"

namespace reslm {

std::string to_string(TrainMode m) {
  switch (m) {
    case TrainMode::kVanilla:
      return "vanilla";
    case TrainMode::kNgramRes:
      return "ngram_res";
    case TrainMode::kProbInter:
      return "prob_inter";
  }
  return "?";
}

TrainMode train_mode_from_string(const std::string& s) {
  if (s == "vanilla") return TrainMode::kVanilla;
  if (s == "ngram_res") return TrainMode::kNgramRes;
  if (s == "prob_inter") return TrainMode::kProbInter;
  throw ConfigError("unknown mode '" + s +
                    "' (expected vanilla, ngram_res or prob_inter)");
}

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("train.epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (max_len < 1) throw ConfigError("train.max_len must be >= 1");
  if (learning_rate <= 0) throw ConfigError("train.learning_rate must be > 0");
  if (grad_clip_norm <= 0) throw ConfigError("train.grad_clip_norm must be > 0");
  if (early_stop_patience < 1) throw ConfigError("train.early_stop_patience must be >= 1");
  if (mode != TrainMode::kVanilla) fusion.validate();
}

std::string TrainLog::to_json() const {
  nlohmann::json j;
  j["mode"] = mode;
  j["train_loss"] = train_loss;
  j["valid_ppl"] = valid_ppl;
  j["alpha_at_epoch_end"] = alpha_at_epoch_end;
  j["epoch_seconds"] = epoch_seconds;
  j["selected_epoch"] = selected_epoch;
  j["selected_valid_ppl"] = selected_valid_ppl;
  j["final_alpha"] = final_alpha;
  j["total_updates"] = total_updates;
  return j.dump(2);
}

namespace {

NeuralScorer validation_scorer(const NeuralLM& model, const NgramSource* ngram,
                               const TrainConfig& config, double alpha) {
  switch (config.mode) {
    case TrainMode::kVanilla:
      return NeuralScorer(model);
    case TrainMode::kNgramRes:
      // alpha == 0 short-circuits to the pure neural path inside the scorer.
      return NeuralScorer(model, NeuralScorer::Mode::kFused, ngram->models,
                          ngram->valid_domains, alpha, 0.5,
                          config.fusion.prob_floor);
    case TrainMode::kProbInter:
      return NeuralScorer(model, NeuralScorer::Mode::kProbInter, ngram->models,
                          ngram->valid_domains, 0, config.fusion.interp_lambda,
                          config.fusion.prob_floor);
  }
  throw Error("unreachable");
}

}  // namespace

std::pair<NeuralLM, TrainLog> train(const NeuralLM& init, const NgramSource* ngram,
                                    const TokenizedCorpus& train_corpus,
                                    const TokenizedCorpus& valid_corpus,
                                    const TrainConfig& config) {
  config.validate();
  const bool needs_ngram = config.mode != TrainMode::kVanilla;
  if (needs_ngram) {
    if (ngram == nullptr || ngram->models.empty())
      throw Error("train: mode " + to_string(config.mode) + " needs an n-gram model");
    for (const auto* kn : ngram->models)
      if (kn->vocab_hash() != init.vocab_hash())
        throw Error("train: n-gram and neural vocabularies differ");
    if (!ngram->train_domains.empty() &&
        ngram->train_domains.size() != train_corpus.size())
      throw Error("train: train_domains does not match the corpus sentence count");
    if (!ngram->valid_domains.empty() &&
        ngram->valid_domains.size() != valid_corpus.size())
      throw Error("train: valid_domains does not match the corpus sentence count");
  }
  if (train_corpus.vocab_hash != 0 && train_corpus.vocab_hash != init.vocab_hash())
    throw Error("train: corpus and model vocabularies differ");

  NeuralLM model = init.clone();
  auto params = model.parameters();
  autograd::AdamConfig adam_config{config.learning_rate, config.adam_beta1,
                                   config.adam_beta2, config.adam_eps};
  autograd::AdamState adam(params);
  Rng dropout_rng(mix_seed(config.seed, "train.dropout"));

  // The fused loss path is taken only for ngram_res; prob_inter trains the
  // neural model plainly (interpolation is an inference-time combination)
  // and differs from vanilla only in validation scoring.
  const bool fused_loss = config.mode == TrainMode::kNgramRes;
  std::vector<std::unique_ptr<DistributionCache>> caches;
  if (fused_loss)
    for (const auto* kn : ngram->models)
      caches.push_back(
          std::make_unique<DistributionCache>(*kn, config.fusion.prob_floor));

  TrainLog log;
  log.mode = to_string(config.mode);
  int64_t updates = 0;
  double best_ppl = std::numeric_limits<double>::infinity();
  std::vector<Eigen::ArrayXd> best_params = model.parameter_values();
  int best_epoch = -1;
  int since_best = 0;

  std::vector<int> targets, ctx;
  std::vector<uint8_t> mask;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    for (auto& cache : caches) cache->clear();  // one cache generation per pass
    auto batches = make_batches(train_corpus, config.batch_size, config.max_len,
                                mix_seed(config.seed, 0xe70c0 + epoch),
                                /*bos_id=*/0);
    double loss_sum = 0;
    int64_t token_sum = 0;
    for (const Batch& batch : batches) {
      const double alpha =
          fused_loss ? alpha_at_step(config.fusion, updates) : 0.0;
      autograd::Tape tape;
      autograd::Tensor logits =
          model.forward(tape, batch.input, batch.rows, batch.cols,
                        /*training=*/true, &dropout_rng);

      // Targets and mask in the forward pass's time-major position order.
      const int64_t positions = static_cast<int64_t>(batch.rows) * batch.cols;
      targets.assign(positions, 0);
      mask.assign(positions, 0);
      for (int r = 0; r < batch.rows; ++r)
        for (int t = 0; t < batch.cols; ++t) {
          const size_t rm = static_cast<size_t>(r) * batch.cols + t;
          const size_t tm = static_cast<size_t>(NeuralLM::position_index(r, t, batch.rows));
          targets[tm] = batch.target[rm];
          mask[tm] = batch.loss_mask[rm];
        }

      autograd::Tensor scored = logits;
      if (fused_loss && alpha != 0.0) {
        Eigen::ArrayXd bias =
            Eigen::ArrayXd::Zero(positions * model.vocab_size());
        for (int r = 0; r < batch.rows; ++r) {
          const int sent = batch.sentence_of_row[static_cast<size_t>(r)];
          const int domain = ngram->train_domains.empty()
                                 ? 0
                                 : ngram->train_domains[static_cast<size_t>(sent)];
          DistributionCache& cache = *caches[static_cast<size_t>(domain)];
          const int order1 = cache.model().order() - 1;
          for (int t = 0; t < batch.cols; ++t) {
            const size_t rm = static_cast<size_t>(r) * batch.cols + t;
            if (!batch.loss_mask[rm]) continue;
            ctx.clear();
            const int have = t + 1;
            for (int i = 0; i < order1 - have; ++i) ctx.push_back(cache.model().bos_id());
            for (int i = std::max(0, have - order1); i <= t; ++i)
              ctx.push_back(batch.input[static_cast<size_t>(r) * batch.cols + i]);
            auto dist = cache.get(ctx.data(), ctx.size());
            const int64_t p = NeuralLM::position_index(r, t, batch.rows);
            Eigen::Map<Eigen::ArrayXd>(bias.data() + p * model.vocab_size(),
                                       model.vocab_size()) =
                alpha * (dist->array() + config.fusion.inverse_softmax_constant);
          }
        }
        scored = autograd::add_constant_bias(tape, logits, bias);
      }

      autograd::Tensor loss =
          autograd::cross_entropy_from_logits(tape, scored, targets, mask);
      autograd::zero_grad(params);
      tape.backward(loss);
      autograd::clip_grad_norm(params, config.grad_clip_norm);
      adam.step(params, adam_config);
      ++updates;

      const int64_t batch_tokens = batch.unmasked_count();
      loss_sum += loss.item() * static_cast<double>(batch_tokens);
      token_sum += batch_tokens;
    }
    const double epoch_alpha =
        fused_loss ? alpha_at_step(config.fusion, updates) : 0.0;
    log.train_loss.push_back(token_sum > 0 ? loss_sum / static_cast<double>(token_sum) : 0.0);
    log.alpha_at_epoch_end.push_back(epoch_alpha);

    NeuralScorer scorer = validation_scorer(model, ngram, config, epoch_alpha);
    const double vppl = corpus_ppl(scorer, valid_corpus).corpus_ppl;
    log.valid_ppl.push_back(vppl);
    log.epoch_seconds.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());

    if (vppl < best_ppl) {
      best_ppl = vppl;
      best_params = model.parameter_values();
      best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= config.early_stop_patience) {
      break;
    }
  }

  if (best_epoch >= 0) model.set_parameter_values(best_params);
  log.selected_epoch = best_epoch;
  log.selected_valid_ppl = best_ppl;
  log.total_updates = updates;
  log.final_alpha = fused_loss ? alpha_at_step(config.fusion, updates) : 0.0;
  return {std::move(model), std::move(log)};
}

NeuralLM finetune(const NeuralLM& model, const NgramSource* ngram,
                  const TokenizedCorpus& domain_train,
                  const TokenizedCorpus& domain_valid, const TrainConfig& config) {
  if (config.epochs == 0) return model.clone();
  return train(model, ngram, domain_train, domain_valid, config).first;
}

}  // namespace reslm
