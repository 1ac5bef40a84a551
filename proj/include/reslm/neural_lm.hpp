#pragma once

#include <string>
#include <vector>

#include "reslm/autograd.hpp"
#include "reslm/common.hpp"
#include "reslm/vocabulary.hpp"

namespace reslm {

struct NeuralLMConfig {
  int embed_dim = 128;
  int hidden_dim = 128;
  int num_layers = 2;
  bool tie_embeddings = true;
  double dropout_rate = 0.1;
  double init_scale = 0.08;
  uint64_t seed = 1;

  void validate() const;
};

/// Small autoregressive LM: embedding, `num_layers` update/reset-gated
/// recurrent layers, and a linear projection to the shared vocabulary space
/// (the projection weight is the embedding table itself when tied).
///
/// forward() is strictly causal: the hidden state starts at zero for every
/// row and sees only earlier positions of the same row.
class NeuralLM {
 public:
  /// Uniform(-init_scale, +init_scale) initialization, deterministic by
  /// config.seed.
  static NeuralLM init(const NeuralLMConfig& config, const Vocabulary& vocab);
  static NeuralLM init(const NeuralLMConfig& config, int vocab_size,
                       uint64_t vocab_hash);

  /// ids is a row-major [rows x cols] matrix of input tokens (position 0 of
  /// each row is BOS). Returns logits [rows*cols x V] in time-major order:
  /// output row t*rows + r scores step t of batch row r. Dropout is active
  /// only when training is true (rng must then be non-null).
  autograd::Tensor forward(autograd::Tape& tape, const std::vector<int>& ids,
                           int rows, int cols, bool training,
                           Rng* dropout_rng) const;

  static int64_t position_index(int r, int t, int rows) {
    return static_cast<int64_t>(t) * rows + r;
  }

  std::vector<autograd::Tensor> parameters() const;
  int64_t parameter_count() const;
  /// embedding + recurrent (in*3H + H*2H + H*H + 3H per layer) + projection.
  static int64_t expected_parameter_count(const NeuralLMConfig& config, int vocab_size);

  const NeuralLMConfig& config() const { return config_; }
  int vocab_size() const { return vocab_size_; }
  uint64_t vocab_hash() const { return vocab_hash_; }

  /// Throws Error when the model was built against a different vocabulary.
  void ensure_vocab(const Vocabulary& vocab) const;

  /// Deep copy (parameters detached from the source).
  NeuralLM clone() const;

  /// Snapshot/restore of raw parameter values, in parameters() order.
  std::vector<Eigen::ArrayXd> parameter_values() const;
  void set_parameter_values(const std::vector<Eigen::ArrayXd>& values);

  /// FNV hash over the raw parameter bytes.
  uint64_t parameter_hash() const;

  void save(const std::string& path) const;
  static NeuralLM load(const std::string& path);

 private:
  NeuralLM() = default;

  struct Layer {
    autograd::Tensor wx;     // [in x 3H]  gate order: update | reset | candidate
    autograd::Tensor wh_zr;  // [H x 2H]
    autograd::Tensor wh_n;   // [H x H]
    autograd::Tensor bias;   // [3H]
  };

  NeuralLMConfig config_;
  int vocab_size_ = 0;
  uint64_t vocab_hash_ = 0;
  autograd::Tensor embedding_;   // [V x E]
  std::vector<Layer> layers_;
  autograd::Tensor out_weight_;  // [V x H], only when untied
  autograd::Tensor out_bias_;    // [V]
};

}  // namespace reslm
