#include "reslm/neural_lm.hpp"

#include <fstream>

#include "json.hpp"

namespace reslm {

using autograd::Tape;
using autograd::Tensor;

void NeuralLMConfig::validate() const {
  if (embed_dim < 1 || hidden_dim < 1 || num_layers < 1)
    throw ConfigError("neural config: dims and layer count must be >= 1");
  if (tie_embeddings && embed_dim != hidden_dim)
    throw ConfigError("neural config: tie_embeddings requires embed_dim == hidden_dim");
  if (dropout_rate < 0 || dropout_rate >= 1)
    throw ConfigError("neural config: dropout_rate must be in [0, 1)");
  if (init_scale <= 0) throw ConfigError("neural config: init_scale must be > 0");
}

namespace {

Eigen::ArrayXd uniform_init(Rng& rng, int64_t n, double scale) {
  Eigen::ArrayXd a(n);
  for (int64_t i = 0; i < n; ++i) a[i] = rng.uniform(-scale, scale);
  return a;
}

}  // namespace

NeuralLM NeuralLM::init(const NeuralLMConfig& config, const Vocabulary& vocab) {
  return init(config, vocab.size(), vocab.hash());
}

NeuralLM NeuralLM::init(const NeuralLMConfig& config, int vocab_size,
                        uint64_t vocab_hash) {
  config.validate();
  if (vocab_size < 2) throw ConfigError("neural init: vocabulary too small");
  NeuralLM lm;
  lm.config_ = config;
  lm.vocab_size_ = vocab_size;
  lm.vocab_hash_ = vocab_hash;
  const int E = config.embed_dim, H = config.hidden_dim, V = vocab_size;
  Rng rng(mix_seed(config.seed, "neural_lm.init"));
  lm.embedding_ = autograd::make_parameter(
      {V, E}, uniform_init(rng, static_cast<int64_t>(V) * E, config.init_scale));
  for (int l = 0; l < config.num_layers; ++l) {
    const int in = l == 0 ? E : H;
    Layer layer;
    layer.wx = autograd::make_parameter(
        {in, 3 * H}, uniform_init(rng, static_cast<int64_t>(in) * 3 * H, config.init_scale));
    layer.wh_zr = autograd::make_parameter(
        {H, 2 * H}, uniform_init(rng, static_cast<int64_t>(H) * 2 * H, config.init_scale));
    layer.wh_n = autograd::make_parameter(
        {H, H}, uniform_init(rng, static_cast<int64_t>(H) * H, config.init_scale));
    layer.bias = autograd::make_parameter({3 * H}, uniform_init(rng, 3 * H, config.init_scale));
    lm.layers_.push_back(std::move(layer));
  }
  if (!config.tie_embeddings)
    lm.out_weight_ = autograd::make_parameter(
        {V, H}, uniform_init(rng, static_cast<int64_t>(V) * H, config.init_scale));
  lm.out_bias_ = autograd::make_parameter({V}, uniform_init(rng, V, config.init_scale));
  return lm;
}

Tensor NeuralLM::forward(Tape& tape, const std::vector<int>& ids, int rows,
                         int cols, bool training, Rng* dropout_rng) const {
  if (static_cast<int64_t>(ids.size()) != static_cast<int64_t>(rows) * cols)
    throw ShapeError("forward: ids length " + std::to_string(ids.size()) +
                     " does not match " + std::to_string(rows) + "x" +
                     std::to_string(cols));
  const int H = config_.hidden_dim;
  const bool drop = training && config_.dropout_rate > 0;
  if (drop && dropout_rng == nullptr)
    throw Error("forward: training-mode dropout needs an RNG");

  std::vector<Tensor> h(layers_.size());
  for (size_t l = 0; l < layers_.size(); ++l)
    h[l] = autograd::make_constant(
        {rows, H}, Eigen::ArrayXd::Zero(static_cast<int64_t>(rows) * H));

  std::vector<int> step_ids(static_cast<size_t>(rows));
  std::vector<Tensor> outputs;
  outputs.reserve(static_cast<size_t>(cols));
  for (int t = 0; t < cols; ++t) {
    for (int r = 0; r < rows; ++r)
      step_ids[static_cast<size_t>(r)] = ids[static_cast<size_t>(r) * cols + t];
    Tensor x = autograd::embedding_gather(tape, embedding_, step_ids);
    if (drop) x = autograd::dropout(tape, x, config_.dropout_rate, *dropout_rng);
    for (size_t l = 0; l < layers_.size(); ++l) {
      const Layer& layer = layers_[l];
      Tensor gx = autograd::add(tape, autograd::matmul(tape, x, layer.wx), layer.bias);
      Tensor gh = autograd::matmul(tape, h[l], layer.wh_zr);
      Tensor z = autograd::sigmoid(
          tape, autograd::add(tape, autograd::slice(tape, gx, 1, 0, H),
                              autograd::slice(tape, gh, 1, 0, H)));
      Tensor r = autograd::sigmoid(
          tape, autograd::add(tape, autograd::slice(tape, gx, 1, H, 2 * H),
                              autograd::slice(tape, gh, 1, H, 2 * H)));
      Tensor cand = autograd::tanh(
          tape, autograd::add(tape, autograd::slice(tape, gx, 1, 2 * H, 3 * H),
                              autograd::matmul(tape, autograd::mul(tape, r, h[l]),
                                               layer.wh_n)));
      // h' = z*h + (1-z)*cand, written as z*h + cand - z*cand
      h[l] = autograd::add(tape, autograd::mul(tape, z, h[l]),
                           autograd::sub(tape, cand, autograd::mul(tape, z, cand)));
      x = h[l];
      if (drop && l + 1 < layers_.size())
        x = autograd::dropout(tape, x, config_.dropout_rate, *dropout_rng);
    }
    outputs.push_back(h.back());
  }
  Tensor hidden = cols == 1 ? outputs[0] : autograd::concat(tape, outputs, 0);
  const Tensor& proj = config_.tie_embeddings ? embedding_ : out_weight_;
  return autograd::add(tape, autograd::matmul_nt(tape, hidden, proj), out_bias_);
}

std::vector<Tensor> NeuralLM::parameters() const {
  std::vector<Tensor> params{embedding_};
  for (const Layer& l : layers_) {
    params.push_back(l.wx);
    params.push_back(l.wh_zr);
    params.push_back(l.wh_n);
    params.push_back(l.bias);
  }
  if (!config_.tie_embeddings) params.push_back(out_weight_);
  params.push_back(out_bias_);
  return params;
}

int64_t NeuralLM::parameter_count() const {
  int64_t n = 0;
  for (const Tensor& p : parameters()) n += p.size();
  return n;
}

int64_t NeuralLM::expected_parameter_count(const NeuralLMConfig& config,
                                           int vocab_size) {
  const int64_t V = vocab_size, E = config.embed_dim, H = config.hidden_dim;
  int64_t n = V * E;  // embedding
  for (int l = 0; l < config.num_layers; ++l) {
    const int64_t in = l == 0 ? E : H;
    n += in * 3 * H + H * 2 * H + H * H + 3 * H;
  }
  if (!config.tie_embeddings) n += V * H;
  n += V;  // output bias
  return n;
}

void NeuralLM::ensure_vocab(const Vocabulary& vocab) const {
  if (vocab.size() != vocab_size_ || vocab.hash() != vocab_hash_)
    throw Error("neural model was built against a different vocabulary (V=" +
                std::to_string(vocab_size_) + ", got V=" +
                std::to_string(vocab.size()) + ")");
}

NeuralLM NeuralLM::clone() const {
  NeuralLM copy = *this;
  copy.embedding_ = autograd::make_parameter(embedding_.shape(), embedding_.value());
  for (Layer& l : copy.layers_) {
    l.wx = autograd::make_parameter(l.wx.shape(), l.wx.value());
    l.wh_zr = autograd::make_parameter(l.wh_zr.shape(), l.wh_zr.value());
    l.wh_n = autograd::make_parameter(l.wh_n.shape(), l.wh_n.value());
    l.bias = autograd::make_parameter(l.bias.shape(), l.bias.value());
  }
  if (!config_.tie_embeddings)
    copy.out_weight_ = autograd::make_parameter(out_weight_.shape(), out_weight_.value());
  copy.out_bias_ = autograd::make_parameter(out_bias_.shape(), out_bias_.value());
  return copy;
}

std::vector<Eigen::ArrayXd> NeuralLM::parameter_values() const {
  std::vector<Eigen::ArrayXd> values;
  for (const Tensor& p : parameters()) values.push_back(p.value());
  return values;
}

void NeuralLM::set_parameter_values(const std::vector<Eigen::ArrayXd>& values) {
  auto params = parameters();
  if (values.size() != params.size())
    throw Error("set_parameter_values: parameter group count mismatch");
  for (size_t i = 0; i < params.size(); ++i) {
    if (values[i].size() != params[i].value().size())
      throw Error("set_parameter_values: size mismatch in group " + std::to_string(i));
    params[i].value() = values[i];
  }
}

uint64_t NeuralLM::parameter_hash() const {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (const Tensor& p : parameters())
    h = fnv1a64(p.value().data(), static_cast<size_t>(p.value().size()) * sizeof(double), h);
  return h;
}

// ---------------------------------------------------------------------------
// Checkpoints: magic, u32 header length, JSON header, raw doubles per
// parameter in parameters() order.
// ---------------------------------------------------------------------------

namespace {
constexpr char kCkptMagic[9] = "RLMCKP01";
constexpr uint32_t kCkptVersion = 1;

std::vector<std::string> param_names(const NeuralLMConfig& config) {
  std::vector<std::string> names{"embedding"};
  for (int l = 0; l < config.num_layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    names.push_back(p + "wx");
    names.push_back(p + "wh_zr");
    names.push_back(p + "wh_n");
    names.push_back(p + "bias");
  }
  if (!config.tie_embeddings) names.push_back("out_weight");
  names.push_back("out_bias");
  return names;
}
}  // namespace

void NeuralLM::save(const std::string& path) const {
  nlohmann::json header;
  header["version"] = kCkptVersion;
  header["vocab_size"] = vocab_size_;
  header["vocab_hash"] = to_hex(vocab_hash_);
  header["config"] = {
      {"embed_dim", config_.embed_dim},       {"hidden_dim", config_.hidden_dim},
      {"num_layers", config_.num_layers},     {"tie_embeddings", config_.tie_embeddings},
      {"dropout_rate", config_.dropout_rate}, {"init_scale", config_.init_scale},
      {"seed", config_.seed}};
  auto params = parameters();
  auto names = param_names(config_);
  nlohmann::json plist = nlohmann::json::array();
  for (size_t i = 0; i < params.size(); ++i)
    plist.push_back({{"name", names[i]}, {"shape", params[i].shape()}});
  header["parameters"] = plist;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path);
  BinaryWriter w(out);
  w.write_bytes(kCkptMagic, 8);
  w.write_string(header.dump());
  for (const Tensor& p : params)
    w.write_bytes(p.value().data(), static_cast<size_t>(p.value().size()) * sizeof(double));
}

NeuralLM NeuralLM::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  BinaryReader r(in);
  char magic[8];
  r.read_bytes(magic, 8);
  if (std::string(magic, 8) != kCkptMagic)
    throw ParseError(0, "not a checkpoint file (bad magic): " + path);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(r.read_string());
  } catch (const std::exception& e) {
    throw ParseError(0, std::string("checkpoint header is not valid JSON: ") + e.what());
  }
  if (header.at("version").get<uint32_t>() != kCkptVersion)
    throw ParseError(0, "unsupported checkpoint version " +
                            std::to_string(header.at("version").get<uint32_t>()));
  NeuralLMConfig config;
  const auto& c = header.at("config");
  config.embed_dim = c.at("embed_dim").get<int>();
  config.hidden_dim = c.at("hidden_dim").get<int>();
  config.num_layers = c.at("num_layers").get<int>();
  config.tie_embeddings = c.at("tie_embeddings").get<bool>();
  config.dropout_rate = c.at("dropout_rate").get<double>();
  config.init_scale = c.at("init_scale").get<double>();
  config.seed = c.at("seed").get<uint64_t>();

  const int vocab_size = header.at("vocab_size").get<int>();
  const uint64_t vocab_hash = std::stoull(header.at("vocab_hash").get<std::string>(), nullptr, 16);
  NeuralLM lm = NeuralLM::init(config, vocab_size, vocab_hash);

  auto params = lm.parameters();
  const auto names = param_names(config);
  const auto& plist = header.at("parameters");
  if (plist.size() != params.size())
    throw ParseError(0, "checkpoint lists " + std::to_string(plist.size()) +
                            " parameters, model has " + std::to_string(params.size()));
  for (size_t i = 0; i < params.size(); ++i) {
    const auto shape = plist[i].at("shape").get<std::vector<int>>();
    if (shape != params[i].shape() || plist[i].at("name").get<std::string>() != names[i])
      throw ParseError(0, "checkpoint parameter " + std::to_string(i) +
                              " does not match the model shape");
    r.read_bytes(params[i].value().data(),
                 static_cast<size_t>(params[i].value().size()) * sizeof(double));
  }
  return lm;
}

}  // namespace reslm
