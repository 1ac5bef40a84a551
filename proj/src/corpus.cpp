#include "reslm/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <unordered_map>

namespace reslm {

int64_t TokenizedCorpus::token_count() const {
  int64_t n = 0;
  for (const auto& s : sentences) n += static_cast<int64_t>(s.size());
  return n;
}

std::vector<int> encode(const std::vector<std::string>& line,
                        const Vocabulary& vocab) {
  std::vector<int> ids;
  ids.reserve(line.size() + 1);
  for (const auto& tok : line) {
    int id = vocab.id_or_unk(tok);
    // BOS/EOS literals in a sentence body would break the corpus invariants.
    if (id == vocab.bos_id() || id == vocab.eos_id()) id = vocab.unk_id();
    ids.push_back(id);
  }
  ids.push_back(vocab.eos_id());
  return ids;
}

std::vector<std::string> split_tokens(const std::string& line) {
  std::vector<std::string> toks;
  size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) toks.push_back(line.substr(i, j - i));
    i = j;
  }
  return toks;
}

TokenizedCorpus load_corpus(const std::string& path, const Vocabulary& vocab) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open corpus file: " + path);
  TokenizedCorpus corpus;
  corpus.source_path = path;
  corpus.vocab_hash = vocab.hash();
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    corpus.sentences.push_back(encode(split_tokens(line), vocab));
  }
  return corpus;
}

TokenizedCorpus corpus_from_lines(const std::vector<std::vector<std::string>>& lines,
                                  const Vocabulary& vocab,
                                  const std::string& source) {
  TokenizedCorpus corpus;
  corpus.source_path = source;
  corpus.vocab_hash = vocab.hash();
  corpus.sentences.reserve(lines.size());
  for (const auto& line : lines) corpus.sentences.push_back(encode(line, vocab));
  return corpus;
}

// ---------------------------------------------------------------------------
// Batching
// ---------------------------------------------------------------------------

int64_t Batch::unmasked_count() const {
  int64_t n = 0;
  for (uint8_t m : loss_mask) n += m;
  return n;
}

std::vector<Batch> make_batches(const TokenizedCorpus& corpus, int batch_size,
                                int max_len, uint64_t seed, int bos_id) {
  if (batch_size < 1) throw Error("make_batches: batch_size must be >= 1");
  if (max_len < 1) throw Error("make_batches: max_len must be >= 1");

  std::vector<int> order(corpus.sentences.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  Rng rng(seed);
  for (size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[rng.uniform_int(i)]);

  struct Row {
    int sentence;
    int len;        // timesteps covered (prefix of the sentence)
    int loss_begin; // first loss-bearing timestep
  };
  std::vector<Row> rows;
  for (int si : order) {
    const int len = static_cast<int>(corpus.sentences[static_cast<size_t>(si)].size());
    for (int s0 = 0; s0 < len; s0 += max_len)
      rows.push_back({si, std::min(s0 + max_len, len), s0});
  }

  std::vector<Batch> batches;
  for (size_t begin = 0; begin < rows.size(); begin += static_cast<size_t>(batch_size)) {
    const size_t end = std::min(rows.size(), begin + static_cast<size_t>(batch_size));
    Batch b;
    b.rows = static_cast<int>(end - begin);
    b.cols = 0;
    for (size_t r = begin; r < end; ++r) b.cols = std::max(b.cols, rows[r].len);
    const size_t n = static_cast<size_t>(b.rows) * b.cols;
    b.input.assign(n, bos_id);
    b.target.assign(n, 0);
    b.loss_mask.assign(n, 0);
    b.sentence_of_row.resize(static_cast<size_t>(b.rows));
    for (size_t r = begin; r < end; ++r) {
      const Row& row = rows[r];
      const auto& sent = corpus.sentences[static_cast<size_t>(row.sentence)];
      const size_t base = (r - begin) * static_cast<size_t>(b.cols);
      b.sentence_of_row[r - begin] = row.sentence;
      for (int t = 0; t < row.len; ++t) {
        b.input[base + t] = t == 0 ? bos_id : sent[static_cast<size_t>(t - 1)];
        b.target[base + t] = sent[static_cast<size_t>(t)];
        b.loss_mask[base + t] = t >= row.loss_begin ? 1 : 0;
      }
    }
    batches.push_back(std::move(b));
  }
  return batches;
}

// ---------------------------------------------------------------------------
// Markov generators
// ---------------------------------------------------------------------------

namespace {

constexpr int kMaxStateSpace = 1 << 24;

// Sparse transition row: (token, probability) pairs, probabilities sum to 1.
using SparseRow = std::vector<std::pair<int, double>>;

double row_entropy(const SparseRow& row) {
  double h = 0;
  for (const auto& [tok, p] : row)
    if (p > 0) h -= p * std::log(p);
  return h;
}

}  // namespace

MarkovGenerator::MarkovGenerator(uint64_t seed, int num_tokens, int order,
                                 int sentence_len, int branching)
    : seed_(seed),
      divergence_(1.0),
      num_tokens_(num_tokens),
      order_(order),
      sentence_len_(sentence_len),
      branching_(std::min(branching, num_tokens)) {
  if (order < 1 || order > 3) throw Error("MarkovGenerator: order must be in {1,2,3}");
  if (num_tokens < 1) throw Error("MarkovGenerator: need at least one token");
  if (sentence_len < 1) throw Error("MarkovGenerator: sentence_len must be >= 1");
  double space = std::pow(static_cast<double>(num_tokens + 1), order);
  if (space > kMaxStateSpace)
    throw Error("MarkovGenerator: state space too large for exact entropy");
}

MarkovGenerator::MarkovGenerator(uint64_t seed, uint64_t base_seed,
                                 double divergence, int num_tokens, int order,
                                 int sentence_len, int branching)
    : MarkovGenerator(seed, num_tokens, order, sentence_len, branching) {
  if (divergence < 0 || divergence > 1)
    throw Error("MarkovGenerator: divergence must be in [0,1]");
  base_seed_ = base_seed;
  divergence_ = divergence;
}

MarkovGenerator MarkovGenerator::uniform(int num_tokens, int order,
                                         int sentence_len) {
  MarkovGenerator g(0, num_tokens, order, sentence_len, num_tokens);
  g.uniform_ = true;
  return g;
}

int MarkovGenerator::state_index(const std::vector<int>& state) const {
  if (static_cast<int>(state.size()) != order_)
    throw Error("MarkovGenerator: state length must equal order");
  int idx = 0;
  for (int v : state) {
    if (v < -1 || v >= num_tokens_) throw Error("MarkovGenerator: bad state token");
    idx = idx * (num_tokens_ + 1) + (v < 0 ? num_tokens_ : v);
  }
  return idx;
}

Eigen::VectorXd MarkovGenerator::pure_row(uint64_t seed, int state_idx) const {
  Eigen::VectorXd probs = Eigen::VectorXd::Zero(num_tokens_);
  if (uniform_) {
    probs.setConstant(1.0 / num_tokens_);
    return probs;
  }
  Rng rng(mix_seed(seed, static_cast<uint64_t>(state_idx) + 0x517cc1b7ULL));
  // Partial Fisher-Yates picks `branching` distinct successors; weights are
  // Dirichlet(1) via normalized exponentials.
  std::vector<int> pool(static_cast<size_t>(num_tokens_));
  for (int i = 0; i < num_tokens_; ++i) pool[static_cast<size_t>(i)] = i;
  double total = 0;
  std::vector<std::pair<int, double>> entries;
  entries.reserve(static_cast<size_t>(branching_));
  for (int i = 0; i < branching_; ++i) {
    size_t j = static_cast<size_t>(i) + rng.uniform_int(static_cast<uint64_t>(num_tokens_ - i));
    std::swap(pool[static_cast<size_t>(i)], pool[j]);
    double w = -std::log(1.0 - rng.uniform());
    entries.emplace_back(pool[static_cast<size_t>(i)], w);
    total += w;
  }
  for (auto& [tok, w] : entries) probs[tok] = w / total;
  return probs;
}

Eigen::VectorXd MarkovGenerator::row(const std::vector<int>& state) const {
  const int idx = state_index(state);
  if (uniform_) return pure_row(seed_, idx);
  Eigen::VectorXd own = pure_row(seed_, idx);
  if (divergence_ >= 1.0) return own;
  Eigen::VectorXd base = pure_row(base_seed_, idx);
  return (1.0 - divergence_) * base + divergence_ * own;
}

std::vector<std::string> MarkovGenerator::token_strings() const {
  std::vector<std::string> toks;
  toks.reserve(static_cast<size_t>(num_tokens_));
  for (int i = 0; i < num_tokens_; ++i) toks.push_back("w" + std::to_string(i));
  return toks;
}

std::vector<std::vector<std::string>> MarkovGenerator::sample(
    uint64_t stream_seed, int num_sentences) const {
  Rng rng(mix_seed(seed_, stream_seed));
  std::vector<std::vector<std::string>> lines;
  lines.reserve(static_cast<size_t>(num_sentences));
  // Row cache keyed by state index; rows are deterministic so caching is
  // invisible to the output.
  std::unordered_map<int, Eigen::VectorXd> cache;
  std::vector<int> state(static_cast<size_t>(order_), -1);
  for (int s = 0; s < num_sentences; ++s) {
    std::fill(state.begin(), state.end(), -1);
    std::vector<std::string> line;
    line.reserve(static_cast<size_t>(sentence_len_));
    for (int t = 0; t < sentence_len_; ++t) {
      const int idx = state_index(state);
      auto it = cache.find(idx);
      if (it == cache.end()) it = cache.emplace(idx, row(state)).first;
      const Eigen::VectorXd& probs = it->second;
      double u = rng.uniform();
      int tok = num_tokens_ - 1;
      double acc = 0;
      for (int w = 0; w < num_tokens_; ++w) {
        acc += probs[w];
        if (u < acc) {
          tok = w;
          break;
        }
      }
      line.push_back("w" + std::to_string(tok));
      state.erase(state.begin());
      state.push_back(tok);
    }
    lines.push_back(std::move(line));
  }
  return lines;
}

double MarkovGenerator::step_cross_entropy() const {
  // Exact: propagate the state distribution position by position and average
  // the per-state transition entropies.
  std::unordered_map<int64_t, double> pi;
  std::unordered_map<int64_t, SparseRow> rows;
  auto pack = [&](const std::vector<int>& st) {
    int64_t key = 0;
    for (int v : st) key = key * (num_tokens_ + 1) + (v < 0 ? num_tokens_ : v);
    return key;
  };
  auto unpack = [&](int64_t key) {
    std::vector<int> st(static_cast<size_t>(order_));
    for (int i = order_ - 1; i >= 0; --i) {
      int v = static_cast<int>(key % (num_tokens_ + 1));
      key /= (num_tokens_ + 1);
      st[static_cast<size_t>(i)] = v == num_tokens_ ? -1 : v;
    }
    return st;
  };
  auto sparse_of = [&](int64_t key) -> const SparseRow& {
    auto it = rows.find(key);
    if (it == rows.end()) {
      Eigen::VectorXd dense = row(unpack(key));
      SparseRow sr;
      for (int w = 0; w < num_tokens_; ++w)
        if (dense[w] > 0) sr.emplace_back(w, dense[w]);
      it = rows.emplace(key, std::move(sr)).first;
    }
    return it->second;
  };

  std::vector<int> start(static_cast<size_t>(order_), -1);
  pi[pack(start)] = 1.0;
  double total = 0;
  for (int t = 0; t < sentence_len_; ++t) {
    std::unordered_map<int64_t, double> next;
    for (const auto& [key, p] : pi) {
      const SparseRow& sr = sparse_of(key);
      total += p * row_entropy(sr);
      std::vector<int> st = unpack(key);
      for (const auto& [tok, q] : sr) {
        std::vector<int> ns(st.begin() + 1, st.end());
        ns.push_back(tok);
        next[pack(ns)] += p * q;
      }
    }
    pi.swap(next);
  }
  return total / sentence_len_;
}

double MarkovGenerator::token_cross_entropy() const {
  // EOS is deterministic at position sentence_len+1 and contributes 0 nats.
  return step_cross_entropy() * sentence_len_ / (sentence_len_ + 1.0);
}

double MarkovGenerator::score_ppl(
    const std::vector<std::vector<int>>& sentences) const {
  double nll = 0;
  int64_t tokens = 0;
  std::unordered_map<int, Eigen::VectorXd> cache;
  std::vector<int> state(static_cast<size_t>(order_), -1);
  for (const auto& sent : sentences) {
    std::fill(state.begin(), state.end(), -1);
    for (int tok : sent) {
      const int idx = state_index(state);
      auto it = cache.find(idx);
      if (it == cache.end()) it = cache.emplace(idx, row(state)).first;
      const double p = tok >= 0 && tok < num_tokens_ ? it->second[tok] : 0.0;
      nll += p > 0 ? -std::log(p) : std::numeric_limits<double>::infinity();
      state.erase(state.begin());
      state.push_back(tok);
    }
    // EOS: probability 1 iff the sentence has the generator's fixed length.
    if (static_cast<int>(sent.size()) != sentence_len_)
      nll += std::numeric_limits<double>::infinity();
    tokens += static_cast<int64_t>(sent.size()) + 1;
  }
  return std::exp(nll / static_cast<double>(tokens));
}

// ---------------------------------------------------------------------------
// Synthetic corpora
// ---------------------------------------------------------------------------

namespace {

GeneratorInfo describe(const MarkovGenerator& gen, uint64_t seed) {
  GeneratorInfo info;
  info.order = gen.order();
  info.num_tokens = gen.num_tokens();
  info.sentence_len = gen.sentence_len();
  info.seed = seed;
  info.step_cross_entropy = gen.step_cross_entropy();
  info.token_cross_entropy = gen.token_cross_entropy();
  info.generator_ppl = std::exp(info.token_cross_entropy);
  info.note =
      "fixed-length sentences; EOS is deterministic (0 nats) and included in "
      "the per-token average; step_cross_entropy covers regular tokens only";
  return info;
}

}  // namespace

SynthCorpus synth_markov(uint64_t seed, int vocab_size, int order,
                         int num_sentences, int sentence_len, int branching) {
  if (vocab_size < 4) throw Error("synth_markov: vocab_size must be >= 4");
  if (num_sentences < 1) throw Error("synth_markov: need at least one sentence");
  const int m = vocab_size - 3;
  MarkovGenerator gen(mix_seed(seed, "table"), m, order, sentence_len, branching);
  Vocabulary vocab = Vocabulary::from_tokens(gen.token_strings());
  SynthCorpus out{
      corpus_from_lines(gen.sample(mix_seed(seed, "train"), num_sentences), vocab,
                        "synth:train"),
      corpus_from_lines(gen.sample(mix_seed(seed, "valid"),
                                   std::max(1, num_sentences / 5)),
                        vocab, "synth:valid"),
      corpus_from_lines(gen.sample(mix_seed(seed, "test"),
                                   std::max(1, num_sentences / 2)),
                        vocab, "synth:test"),
      vocab, gen, GeneratorInfo{}};
  out.info = describe(gen, seed);
  out.info.branching = branching;
  return out;
}

SynthDomains synth_domains(uint64_t seed, int vocab_size, double divergence,
                           int order, int num_sentences, int sentence_len,
                           int branching) {
  if (vocab_size < 4) throw Error("synth_domains: vocab_size must be >= 4");
  if (divergence <= 0 || divergence > 1)
    throw Error("synth_domains: divergence must be in (0,1]");
  const int m = vocab_size - 3;
  const uint64_t base = mix_seed(seed, "base");
  MarkovGenerator gen_a(mix_seed(seed, "domainA"), base, divergence, m, order,
                        sentence_len, branching);
  MarkovGenerator gen_b(mix_seed(seed, "domainB"), base, divergence, m, order,
                        sentence_len, branching);
  Vocabulary vocab = Vocabulary::from_tokens(gen_a.token_strings());

  auto build = [&](const MarkovGenerator& gen, const std::string& tag,
                   uint64_t s) {
    SynthCorpus c{
        corpus_from_lines(gen.sample(mix_seed(s, tag + ".train"), num_sentences),
                          vocab, "synth:" + tag + ":train"),
        corpus_from_lines(gen.sample(mix_seed(s, tag + ".valid"),
                                     std::max(1, num_sentences / 5)),
                          vocab, "synth:" + tag + ":valid"),
        corpus_from_lines(gen.sample(mix_seed(s, tag + ".test"),
                                     std::max(1, num_sentences / 2)),
                          vocab, "synth:" + tag + ":test"),
        vocab, gen, GeneratorInfo{}};
    c.info = describe(gen, s);
    c.info.branching = branching;
    c.info.note += "; domain '" + tag + "' mixes a shared base table";
    return c;
  };
  return SynthDomains{build(gen_a, "A", seed), build(gen_b, "B", seed)};
}

}  // namespace reslm
