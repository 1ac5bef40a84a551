#include "reslm/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace reslm::oracle {

ReferenceKN::ReferenceKN(const TokenizedCorpus& corpus, int n,
                         const Vocabulary& vocab)
    : n_(n), vocab_size_(vocab.size()), bos_id_(vocab.bos_id()) {
  if (n < 1) throw Error("ReferenceKN: order must be >= 1");
  if (corpus.sentences.empty()) throw Error("ReferenceKN: empty corpus");

  // Raw counts: all k-grams ending at a real token of the BOS-padded stream.
  std::vector<std::map<std::vector<int>, uint64_t>> raw(static_cast<size_t>(n));
  for (const auto& sent : corpus.sentences) {
    std::vector<int> padded(static_cast<size_t>(n - 1), bos_id_);
    padded.insert(padded.end(), sent.begin(), sent.end());
    for (size_t i = static_cast<size_t>(n - 1); i < padded.size(); ++i) {
      for (int k = 1; k <= n; ++k) {
        std::vector<int> gram(padded.begin() + (i + 1 - static_cast<size_t>(k)),
                              padded.begin() + (i + 1));
        ++raw[static_cast<size_t>(k - 1)][gram];
      }
    }
  }

  // Adjusted counts: raw at the top order; distinct left-extensions below,
  // except BOS-initial grams which keep raw counts.
  adjusted_.resize(static_cast<size_t>(n));
  adjusted_[static_cast<size_t>(n - 1)] = raw[static_cast<size_t>(n - 1)];
  for (int k = n - 1; k >= 1; --k) {
    auto& out = adjusted_[static_cast<size_t>(k - 1)];
    for (const auto& [gram, c] : raw[static_cast<size_t>(k)]) {
      std::vector<int> suffix(gram.begin() + 1, gram.end());
      ++out[suffix];
    }
    for (const auto& [gram, c] : raw[static_cast<size_t>(k - 1)])
      if (gram.front() == bos_id_) out[gram] = c;
  }

  // Per-context tallies and count-of-count discounts.
  tallies_.resize(static_cast<size_t>(n));
  discounts_.resize(static_cast<size_t>(n));
  for (int k = 1; k <= n; ++k) {
    uint64_t coc[4] = {0, 0, 0, 0};
    for (const auto& [gram, a] : adjusted_[static_cast<size_t>(k - 1)]) {
      if (a >= 1 && a <= 4) ++coc[a - 1];
      std::vector<int> ctx(gram.begin(), gram.end() - 1);
      Tally& t = tallies_[static_cast<size_t>(k - 1)][ctx];
      t.denom += a;
      if (a == 1)
        ++t.n1;
      else if (a == 2)
        ++t.n2;
      else
        ++t.n3p;
    }
    Discounts d{0.5, 0.5, 0.5};
    if (coc[0] > 0 && coc[1] > 0 && coc[2] > 0) {
      const double n1 = static_cast<double>(coc[0]), n2 = static_cast<double>(coc[1]);
      const double n3 = static_cast<double>(coc[2]), n4 = static_cast<double>(coc[3]);
      const double y = n1 / (n1 + 2.0 * n2);
      constexpr double eps = 1e-6;
      d.d1 = std::clamp(1.0 - 2.0 * y * n2 / n1, eps, 1.0 - eps);
      d.d2 = std::clamp(2.0 - 3.0 * y * n3 / n2, eps, 2.0 - eps);
      d.d3p = std::clamp(3.0 - 4.0 * y * n4 / n3, eps, 3.0 - eps);
    }
    discounts_[static_cast<size_t>(k - 1)] = d;
  }
}

double ReferenceKN::prob(int word, const int* context, size_t len) const {
  const auto& d = discounts_[len];  // grams of order len+1
  const auto& tallies = tallies_[len];
  auto pick = [&](uint64_t a) { return a == 1 ? d.d1 : a == 2 ? d.d2 : d.d3p; };

  if (len == 0) {
    const auto it = tallies.find(std::vector<int>{});
    const Tally& t = it->second;
    double u = 0;
    auto a_it = adjusted_[0].find(std::vector<int>{word});
    if (a_it != adjusted_[0].end())
      u = std::max(static_cast<double>(a_it->second) - pick(a_it->second), 0.0) /
          static_cast<double>(t.denom);
    const double b = (d.d1 * static_cast<double>(t.n1) + d.d2 * static_cast<double>(t.n2) +
                      d.d3p * static_cast<double>(t.n3p)) /
                     static_cast<double>(t.denom);
    return u + b * (1.0 / (vocab_size_ - 1));
  }

  std::vector<int> ctx(context, context + len);
  auto t_it = tallies.find(ctx);
  if (t_it == tallies.end() || t_it->second.denom == 0)
    return prob(word, context + 1, len - 1);  // unseen context: pure backoff
  const Tally& t = t_it->second;

  std::vector<int> gram = ctx;
  gram.push_back(word);
  double u = 0;
  auto a_it = adjusted_[len].find(gram);
  if (a_it != adjusted_[len].end())
    u = std::max(static_cast<double>(a_it->second) - pick(a_it->second), 0.0) /
        static_cast<double>(t.denom);
  const double b = (d.d1 * static_cast<double>(t.n1) + d.d2 * static_cast<double>(t.n2) +
                    d.d3p * static_cast<double>(t.n3p)) /
                   static_cast<double>(t.denom);
  return u + b * prob(word, context + 1, len - 1);
}

double ReferenceKN::ref_logprob(int word, const std::vector<int>& context) const {
  if (word == bos_id_) throw Error("ref_logprob: BOS is never a prediction target");
  const size_t m = std::min(context.size(), static_cast<size_t>(n_ - 1));
  return std::log(prob(word, context.data() + (context.size() - m), m));
}

double ReferenceKN::distribution_sum(const std::vector<int>& context) const {
  double sum = 0;
  for (int w = 0; w < vocab_size_; ++w)
    if (w != bos_id_) sum += std::exp(ref_logprob(w, context));
  return sum;
}

double ref_generator_ppl(const MarkovGenerator& gen, const TokenizedCorpus& corpus,
                         const Vocabulary& vocab) {
  double nll = 0;
  int64_t tokens = 0;
  std::vector<int> state(static_cast<size_t>(gen.order()), -1);
  for (const auto& sent : corpus.sentences) {
    std::fill(state.begin(), state.end(), -1);
    int body = 0;
    for (int id : sent) {
      if (id == vocab.eos_id()) break;
      ++body;
      // Regular tokens are named "w<index>"; anything else has true
      // probability zero under the generator.
      const std::string& tok = vocab.token(id);
      int index = -1;
      if (tok.size() > 1 && tok[0] == 'w') {
        try {
          index = std::stoi(tok.substr(1));
        } catch (...) {
          index = -1;
        }
      }
      double p = 0;
      if (index >= 0 && index < gen.num_tokens()) p = gen.row(state)[index];
      nll += p > 0 ? -std::log(p) : std::numeric_limits<double>::infinity();
      state.erase(state.begin());
      state.push_back(index);
    }
    if (body != gen.sentence_len())
      nll += std::numeric_limits<double>::infinity();  // EOS: true prob 0
    tokens += body + 1;
  }
  return std::exp(nll / static_cast<double>(tokens));
}

Eigen::ArrayXd fd_gradient(const std::function<double(const Eigen::ArrayXd&)>& f,
                           const Eigen::ArrayXd& x, double eps) {
  Eigen::ArrayXd grad(x.size());
  Eigen::ArrayXd probe = x;
  for (int64_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + eps;
    const double hi = f(probe);
    probe[i] = x[i] - eps;
    const double lo = f(probe);
    probe[i] = x[i];
    grad[i] = (hi - lo) / (2 * eps);
  }
  return grad;
}

double max_rel_error(const Eigen::ArrayXd& a, const Eigen::ArrayXd& b, double floor) {
  if (a.size() != b.size()) throw ShapeError("max_rel_error: size mismatch");
  double worst = 0;
  for (int64_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

}  // namespace reslm::oracle
