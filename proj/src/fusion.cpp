#include "reslm/fusion.hpp"

#include <cmath>

namespace reslm {

std::string to_string(AlphaSchedule s) {
  return s == AlphaSchedule::kConstant ? "constant" : "linear_anneal";
}

AlphaSchedule alpha_schedule_from_string(const std::string& s) {
  if (s == "constant") return AlphaSchedule::kConstant;
  if (s == "linear_anneal") return AlphaSchedule::kLinearAnneal;
  throw ConfigError("unknown alpha schedule '" + s +
                    "' (expected constant or linear_anneal)");
}

void FusionConfig::validate() const {
  if (alpha0 < 0) throw ConfigError("fusion.alpha0 must be >= 0");
  if (prob_floor <= 0 || prob_floor > 1e-4)
    throw ConfigError("fusion.prob_floor must be in (0, 1e-4]");
  if (schedule == AlphaSchedule::kLinearAnneal && anneal_steps < 1)
    throw ConfigError("fusion.anneal_steps must be >= 1 when annealing");
  if (interp_lambda < 0 || interp_lambda > 1)
    throw ConfigError("fusion.interp_lambda must be in [0, 1]");
}

Eigen::VectorXd inverse_softmax(const Eigen::VectorXd& p, double C,
                                double prob_floor) {
  return (p.array().max(prob_floor).log() + C).matrix();
}

double alpha_at_step(const FusionConfig& config, int64_t step) {
  if (step < 0) throw Error("alpha_at_step: step must be >= 0");
  if (config.schedule == AlphaSchedule::kConstant) return config.alpha0;
  const double frac = static_cast<double>(step) / static_cast<double>(config.anneal_steps);
  return config.alpha0 * std::max(0.0, 1.0 - frac);
}

Eigen::VectorXd fuse_logits(const Eigen::VectorXd& neural_logits,
                            const Eigen::VectorXd& ngram_logprobs, double alpha,
                            double C) {
  if (neural_logits.size() != ngram_logprobs.size())
    throw ShapeError("fuse_logits: length mismatch: " +
                     std::to_string(neural_logits.size()) + " vs " +
                     std::to_string(ngram_logprobs.size()));
  return neural_logits + alpha * (ngram_logprobs.array() + C).matrix();
}

Eigen::VectorXd log_softmax_vec(const Eigen::VectorXd& logits) {
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  return (logits.array() - lse).matrix();
}

Eigen::VectorXd softmax_vec(const Eigen::VectorXd& logits) {
  return log_softmax_vec(logits).array().exp().matrix();
}

Eigen::VectorXd fused_log_distribution(const Eigen::VectorXd& neural_logits,
                                       const Eigen::VectorXd& ngram_logprobs,
                                       double alpha, double C) {
  return log_softmax_vec(fuse_logits(neural_logits, ngram_logprobs, alpha, C));
}

Eigen::VectorXd reweight_form(const Eigen::VectorXd& neural_logits,
                              const Eigen::VectorXd& ngram_probs, double alpha) {
  if (neural_logits.size() != ngram_probs.size())
    throw ShapeError("reweight_form: length mismatch: " +
                     std::to_string(neural_logits.size()) + " vs " +
                     std::to_string(ngram_probs.size()));
  Eigen::ArrayXd w = ngram_probs.array().pow(alpha) * neural_logits.array().exp();
  return (w / w.sum()).matrix();
}

Eigen::VectorXd prob_interpolate(const Eigen::VectorXd& p_ng,
                                 const Eigen::VectorXd& p_nu, double lambda) {
  if (p_ng.size() != p_nu.size())
    throw ShapeError("prob_interpolate: length mismatch: " +
                     std::to_string(p_ng.size()) + " vs " +
                     std::to_string(p_nu.size()));
  return lambda * p_ng + (1.0 - lambda) * p_nu;
}

}  // namespace reslm
