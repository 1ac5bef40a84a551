#include "reslm/ngram.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace reslm {

IdKey make_key(const int* ids, size_t len) {
  IdKey key(len, 0);
  for (size_t i = 0; i < len; ++i) key[i] = static_cast<char32_t>(ids[i]);
  return key;
}

IdKey make_key(const std::vector<int>& ids) { return make_key(ids.data(), ids.size()); }

std::vector<int> key_to_ids(const IdKey& key) {
  std::vector<int> ids(key.size());
  for (size_t i = 0; i < key.size(); ++i) ids[i] = static_cast<int>(key[i]);
  return ids;
}

// ---------------------------------------------------------------------------
// Counting
// ---------------------------------------------------------------------------

CountTable count_ngrams(const TokenizedCorpus& corpus, int n, int bos_id) {
  if (n < 1) throw Error("count_ngrams: order must be >= 1");
  if (corpus.sentences.empty()) throw Error("count_ngrams: empty corpus");
  CountTable counts(n, bos_id);
  std::vector<int> padded;
  for (const auto& sent : corpus.sentences) {
    padded.assign(static_cast<size_t>(n - 1), bos_id);
    padded.insert(padded.end(), sent.begin(), sent.end());
    // Every k-gram ending at a real token, k = 1..n.
    for (size_t i = static_cast<size_t>(n - 1); i < padded.size(); ++i) {
      for (int k = 1; k <= n; ++k) {
        ++counts.at_order(k)[make_key(padded.data() + (i + 1 - static_cast<size_t>(k)),
                                      static_cast<size_t>(k))];
      }
    }
    counts.add_tokens(sent.size());
  }
  return counts;
}

// ---------------------------------------------------------------------------
// Adjusted counts
// ---------------------------------------------------------------------------

void AdjustedCounts::finalize() {
  for (int k = 1; k <= order_; ++k) {
    auto& coc = counts_of_counts_[static_cast<size_t>(k - 1)];
    coc = {0, 0, 0, 0};
    auto& ctx = contexts_[static_cast<size_t>(k - 1)];
    ctx.clear();
    for (const auto& [key, a] : adjusted_[static_cast<size_t>(k - 1)]) {
      if (a >= 1 && a <= 4) ++coc[a - 1];
      ContextTally& tally = ctx[key.substr(0, key.size() - 1)];
      tally.denom += a;
      if (a == 1)
        ++tally.n1;
      else if (a == 2)
        ++tally.n2;
      else
        ++tally.n3p;
    }
  }
}

AdjustedCounts adjust_counts(const CountTable& counts) {
  const int n = counts.order();
  const char32_t bos = static_cast<char32_t>(counts.bos_id());
  AdjustedCounts adjusted(n, counts.bos_id());

  adjusted.at_order(n) = counts.at_order(n);
  for (int k = n - 1; k >= 1; --k) {
    auto& out = adjusted.at_order(k);
    // Continuation counts: distinct observed left-extensions, read off the
    // unique (k+1)-gram keys.
    for (const auto& [key, raw] : counts.at_order(k + 1)) {
      (void)raw;
      ++out[key.substr(1)];
    }
    // Keys starting with BOS can never be suffix-extended: keep raw counts.
    for (const auto& [key, raw] : counts.at_order(k)) {
      if (key[0] == bos) out[key] = raw;
    }
  }
  adjusted.finalize();
  return adjusted;
}

// ---------------------------------------------------------------------------
// Discounts
// ---------------------------------------------------------------------------

DiscountSet estimate_discounts(const AdjustedCounts& adjusted) {
  constexpr double kEps = 1e-6;
  DiscountSet set;
  for (int k = 1; k <= adjusted.order(); ++k) {
    const auto& coc = adjusted.counts_of_counts(k);
    const double n1 = static_cast<double>(coc[0]);
    const double n2 = static_cast<double>(coc[1]);
    const double n3 = static_cast<double>(coc[2]);
    const double n4 = static_cast<double>(coc[3]);
    OrderDiscounts d;
    if (coc[0] == 0 || coc[1] == 0 || coc[2] == 0) {
      d = OrderDiscounts{0.5, 0.5, 0.5, true};
    } else {
      const double y = n1 / (n1 + 2.0 * n2);
      d.d1 = std::clamp(1.0 - 2.0 * y * n2 / n1, kEps, 1.0 - kEps);
      d.d2 = std::clamp(2.0 - 3.0 * y * n3 / n2, kEps, 2.0 - kEps);
      d.d3p = std::clamp(3.0 - 4.0 * y * n4 / n3, kEps, 3.0 - kEps);
      d.fallback = false;
    }
    set.per_order.push_back(d);
  }
  return set;
}

// ---------------------------------------------------------------------------
// Estimation
// ---------------------------------------------------------------------------

KneserNeyModel estimate_model(const AdjustedCounts& adjusted,
                              const DiscountSet& discounts,
                              const Vocabulary& vocab) {
  const int n = adjusted.order();
  if (static_cast<int>(discounts.per_order.size()) != n)
    throw Error("estimate_model: discount set order mismatch");

  KneserNeyModel model;
  model.order_ = n;
  model.vocab_size_ = vocab.size();
  model.bos_id_ = vocab.bos_id();
  model.vocab_hash_ = vocab.hash();
  model.discounts_ = discounts;
  model.logprob_.resize(static_cast<size_t>(n));
  model.backoff_log_.resize(static_cast<size_t>(n));

  const int V = vocab.size();
  const double uniform = 1.0 / (V - 1);  // over predictable tokens (no BOS)

  // Unigrams: dense, interpolated with the uniform base.
  const auto& uni_ctx = adjusted.contexts(1);
  auto uni_it = uni_ctx.find(IdKey());
  if (uni_it == uni_ctx.end() || uni_it->second.denom == 0)
    throw Error("estimate_model: no unigram counts");
  const ContextTally& uni_tally = uni_it->second;
  const OrderDiscounts& d1 = discounts.at_order(1);
  const double b0 = (d1.d1 * static_cast<double>(uni_tally.n1) +
                     d1.d2 * static_cast<double>(uni_tally.n2) +
                     d1.d3p * static_cast<double>(uni_tally.n3p)) /
                    static_cast<double>(uni_tally.denom);
  model.backoff_log_[0][IdKey()] = std::log(b0);
  model.unigram_logprob_.assign(static_cast<size_t>(V),
                                -std::numeric_limits<double>::infinity());
  const auto& uni_counts = adjusted.at_order(1);
  for (int w = 0; w < V; ++w) {
    if (w == model.bos_id_) continue;
    double u = 0;
    auto it = uni_counts.find(make_key(&w, 1));
    if (it != uni_counts.end()) {
      const double a = static_cast<double>(it->second);
      u = std::max(a - d1.select(it->second), 0.0) /
          static_cast<double>(uni_tally.denom);
    }
    model.unigram_logprob_[static_cast<size_t>(w)] = std::log(u + b0 * uniform);
  }

  // Higher orders, bottom-up; lower tables are complete when order k uses
  // logprob() for the shortened context.
  for (int k = 2; k <= n; ++k) {
    const OrderDiscounts& dk = discounts.at_order(k);
    const auto& tallies = adjusted.contexts(k);
    auto& backoffs = model.backoff_log_[static_cast<size_t>(k - 1)];
    for (const auto& [ctx, tally] : tallies) {
      if (tally.denom == 0) continue;  // omitted: pure backoff at query time
      const double b = (dk.d1 * static_cast<double>(tally.n1) +
                        dk.d2 * static_cast<double>(tally.n2) +
                        dk.d3p * static_cast<double>(tally.n3p)) /
                       static_cast<double>(tally.denom);
      backoffs[ctx] = std::log(b);
    }
    auto& probs = model.logprob_[static_cast<size_t>(k - 1)];
    std::vector<int> lower_ctx;
    for (const auto& [key, a] : adjusted.at_order(k)) {
      const IdKey ctx = key.substr(0, key.size() - 1);
      const ContextTally& tally = tallies.at(ctx);
      const double u = std::max(static_cast<double>(a) - dk.select(a), 0.0) /
                       static_cast<double>(tally.denom);
      const double b = std::exp(backoffs.at(ctx));
      lower_ctx.assign(key.begin() + 1, key.end() - 1);
      const int w = static_cast<int>(key.back());
      const double lower = std::exp(model.logprob(w, lower_ctx));
      probs[key] = std::log(u + b * lower);
    }
  }
  return model;
}

KneserNeyModel train_kneser_ney(const TokenizedCorpus& corpus, int n,
                                const Vocabulary& vocab) {
  if (corpus.vocab_hash != 0 && corpus.vocab_hash != vocab.hash())
    throw Error("train_kneser_ney: corpus was encoded with a different vocabulary");
  CountTable counts = count_ngrams(corpus, n, vocab.bos_id());
  AdjustedCounts adjusted = adjust_counts(counts);
  DiscountSet discounts = estimate_discounts(adjusted);
  return estimate_model(adjusted, discounts, vocab);
}

// ---------------------------------------------------------------------------
// Queries
// ---------------------------------------------------------------------------

double KneserNeyModel::logprob(int word, const std::vector<int>& context) const {
  return logprob(word, context.data(), context.size());
}

double KneserNeyModel::logprob(int word, const int* context, size_t len) const {
  if (word == bos_id_) throw Error("logprob: BOS is never a prediction target");
  if (word < 0 || word >= vocab_size_)
    throw Error("logprob: word id out of range: " + std::to_string(word));
  const size_t m = std::min(len, static_cast<size_t>(order_ - 1));
  const int* ctx = context + (len - m);

  double acc = 0;
  IdKey key;
  for (size_t k = m; k >= 1; --k) {
    // suffix of length k plus the word
    key = make_key(ctx + (m - k), k);
    const IdKey suffix = key;
    key.push_back(static_cast<char32_t>(word));
    const auto& table = logprob_[k];  // grams of length k+1
    auto it = table.find(key);
    if (it != table.end()) return acc + it->second;
    const auto& backs = backoff_log_[k];
    auto bit = backs.find(suffix);
    if (bit != backs.end()) acc += bit->second;
  }
  return acc + unigram_logprob_[static_cast<size_t>(word)];
}

Eigen::VectorXd KneserNeyModel::full_distribution(const std::vector<int>& context,
                                                  double prob_floor) const {
  return full_distribution(context.data(), context.size(), prob_floor);
}

Eigen::VectorXd KneserNeyModel::full_distribution(const int* context, size_t len,
                                                  double prob_floor) const {
  const size_t m = std::min(len, static_cast<size_t>(order_ - 1));
  const int* ctx = context + (len - m);

  // Backoff mass accumulated from the longest suffix down to each level is
  // word-independent; precompute it once per context.
  std::vector<double> acc_at(m + 1, 0.0);  // acc_at[k]: before probing level k
  std::vector<IdKey> suffixes(m + 1);
  for (size_t k = m; k >= 1; --k) {
    suffixes[k] = make_key(ctx + (m - k), k);
    double b = 0;
    auto bit = backoff_log_[k].find(suffixes[k]);
    if (bit != backoff_log_[k].end()) b = bit->second;
    acc_at[k - 1] = acc_at[k] + b;
  }

  Eigen::VectorXd dist(vocab_size_);
  IdKey probe;
  for (int w = 0; w < vocab_size_; ++w) {
    if (w == bos_id_) {
      dist[w] = std::log(prob_floor);
      continue;
    }
    double value = acc_at[0] + unigram_logprob_[static_cast<size_t>(w)];
    for (size_t k = m; k >= 1; --k) {
      probe = suffixes[k];
      probe.push_back(static_cast<char32_t>(w));
      auto it = logprob_[k].find(probe);
      if (it != logprob_[k].end()) {
        value = acc_at[k] + it->second;
        break;
      }
    }
    dist[w] = value;
  }
  return dist;
}

double KneserNeyModel::sentence_ppl(const std::vector<int>& sentence) const {
  if (sentence.empty()) throw Error("sentence_ppl: empty sentence");
  std::vector<int> ctx(static_cast<size_t>(order_ - 1), bos_id_);
  double nll = 0;
  for (int tok : sentence) {
    nll -= logprob(tok, ctx);
    ctx.push_back(tok);
  }
  return std::exp(nll / static_cast<double>(sentence.size()));
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

namespace {
constexpr char kMagic[9] = "RLMNGB01";

std::vector<IdKey> sorted_keys(const std::unordered_map<IdKey, double>& map) {
  std::vector<IdKey> keys;
  keys.reserve(map.size());
  for (const auto& [k, v] : map) keys.push_back(k);
  std::sort(keys.begin(), keys.end());
  return keys;
}
}  // namespace

std::string KneserNeyModel::serialize() const {
  std::ostringstream out(std::ios::binary);
  BinaryWriter w(out);
  w.write_bytes(kMagic, 8);
  w.write_u32(1);  // version
  w.write_u32(static_cast<uint32_t>(order_));
  w.write_u32(static_cast<uint32_t>(vocab_size_));
  w.write_u32(static_cast<uint32_t>(bos_id_));
  w.write_u64(vocab_hash_);
  w.write_u32(static_cast<uint32_t>(discounts_.per_order.size()));
  for (const auto& d : discounts_.per_order) {
    w.write_f64(d.d1);
    w.write_f64(d.d2);
    w.write_f64(d.d3p);
    w.write_u32(d.fallback ? 1 : 0);
  }
  for (double p : unigram_logprob_) w.write_f64(p);
  auto write_table = [&](const std::unordered_map<IdKey, double>& table) {
    w.write_u64(table.size());
    for (const IdKey& key : sorted_keys(table)) {
      w.write_u32(static_cast<uint32_t>(key.size()));
      for (char32_t c : key) w.write_u32(static_cast<uint32_t>(c));
      w.write_f64(table.at(key));
    }
  };
  for (int k = 2; k <= order_; ++k) write_table(logprob_[static_cast<size_t>(k - 1)]);
  for (int len = 0; len < order_; ++len) write_table(backoff_log_[static_cast<size_t>(len)]);
  return out.str();
}

void KneserNeyModel::save(const std::string& path) const {
  write_text_file(path, serialize());
}

KneserNeyModel KneserNeyModel::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open n-gram model file: " + path);
  BinaryReader r(in);
  char magic[8];
  r.read_bytes(magic, 8);
  if (std::string(magic, 8) != kMagic)
    throw ParseError(0, "not an n-gram model file (bad magic): " + path);
  const uint32_t version = r.read_u32();
  if (version != 1)
    throw ParseError(0, "unsupported n-gram model version " + std::to_string(version));

  KneserNeyModel model;
  model.order_ = static_cast<int>(r.read_u32());
  model.vocab_size_ = static_cast<int>(r.read_u32());
  model.bos_id_ = static_cast<int>(r.read_u32());
  model.vocab_hash_ = r.read_u64();
  const uint32_t orders = r.read_u32();
  for (uint32_t i = 0; i < orders; ++i) {
    OrderDiscounts d;
    d.d1 = r.read_f64();
    d.d2 = r.read_f64();
    d.d3p = r.read_f64();
    d.fallback = r.read_u32() != 0;
    model.discounts_.per_order.push_back(d);
  }
  model.unigram_logprob_.resize(static_cast<size_t>(model.vocab_size_));
  for (auto& p : model.unigram_logprob_) p = r.read_f64();
  auto read_table = [&](std::unordered_map<IdKey, double>& table) {
    const uint64_t count = r.read_u64();
    table.reserve(count);
    for (uint64_t i = 0; i < count; ++i) {
      const uint32_t len = r.read_u32();
      IdKey key(len, 0);
      for (uint32_t j = 0; j < len; ++j) key[j] = static_cast<char32_t>(r.read_u32());
      table[key] = r.read_f64();
    }
  };
  model.logprob_.resize(static_cast<size_t>(model.order_));
  model.backoff_log_.resize(static_cast<size_t>(model.order_));
  for (int k = 2; k <= model.order_; ++k) read_table(model.logprob_[static_cast<size_t>(k - 1)]);
  for (int len = 0; len < model.order_; ++len) read_table(model.backoff_log_[static_cast<size_t>(len)]);
  return model;
}

// ---------------------------------------------------------------------------
// Cache
// ---------------------------------------------------------------------------

std::shared_ptr<const Eigen::VectorXd> DistributionCache::get(const int* context,
                                                              size_t len) {
  const size_t m = std::min(len, static_cast<size_t>(model_->order() - 1));
  IdKey key = make_key(context + (len - m), m);
  auto it = cache_.find(key);
  if (it != cache_.end()) return it->second;
  auto dist = std::make_shared<Eigen::VectorXd>(
      model_->full_distribution(context + (len - m), m, prob_floor_));
  cache_.emplace(std::move(key), dist);
  return dist;
}

}  // namespace reslm
