#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "reslm/common.hpp"
#include "reslm/ngram.hpp"

namespace reslm {

enum class AlphaSchedule { kConstant, kLinearAnneal };

std::string to_string(AlphaSchedule s);
AlphaSchedule alpha_schedule_from_string(const std::string& s);

/// How the n-gram signal enters the model: scale, schedule, flooring, and the
/// probability-interpolation baseline weight.
struct FusionConfig {
  double alpha0 = 0.3;
  AlphaSchedule schedule = AlphaSchedule::kConstant;
  int64_t anneal_steps = 2000;  // T; alpha reaches 0 after T optimizer updates
  double prob_floor = kDefaultProbFloor;
  double inverse_softmax_constant = 0.0;  // C; the fused distribution is invariant to it
  double interp_lambda = 0.5;

  void validate() const;
};

/// The alpha grid swept when none is pinned (selected on validation PPL).
inline const std::vector<double> kAlphaSweepGrid{0.05, 0.1, 0.2, 0.3, 0.5, 1.0};

/// log p + C componentwise, with p floored at prob_floor before the log so
/// the map is total. softmax(inverse_softmax(p, C)) == p whenever p sums to 1.
Eigen::VectorXd inverse_softmax(const Eigen::VectorXd& p, double C,
                                double prob_floor = kDefaultProbFloor);

/// Constant schedule: alpha0. Linear anneal: alpha0 * max(0, 1 - step/T),
/// stepped once per optimizer update.
double alpha_at_step(const FusionConfig& config, int64_t step);

/// neural + alpha * (ngram_logprobs + C), elementwise. No gradient machinery
/// is involved here; training routes the same term through
/// autograd::add_constant_bias so nothing flows back into the n-gram model.
Eigen::VectorXd fuse_logits(const Eigen::VectorXd& neural_logits,
                            const Eigen::VectorXd& ngram_logprobs, double alpha,
                            double C = 0.0);

/// log softmax of fuse_logits(...): the fused log-distribution.
Eigen::VectorXd fused_log_distribution(const Eigen::VectorXd& neural_logits,
                                       const Eigen::VectorXd& ngram_logprobs,
                                       double alpha, double C = 0.0);

/// Independent expansion of the same distribution: q^alpha * exp(neural),
/// normalized. Exists solely as a second computation path for identity
/// testing; inputs are assumed moderate (no max-subtraction).
Eigen::VectorXd reweight_form(const Eigen::VectorXd& neural_logits,
                              const Eigen::VectorXd& ngram_probs, double alpha);

/// lambda * p_ng + (1 - lambda) * p_nu (the probability-interpolation
/// baseline; behaves like an ensemble of the two models).
Eigen::VectorXd prob_interpolate(const Eigen::VectorXd& p_ng,
                                 const Eigen::VectorXd& p_nu, double lambda);

/// Row-wise helpers shared with eval.
Eigen::VectorXd log_softmax_vec(const Eigen::VectorXd& logits);
Eigen::VectorXd softmax_vec(const Eigen::VectorXd& logits);

}  // namespace reslm
