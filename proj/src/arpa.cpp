#include "reslm/arpa.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <vector>

namespace reslm {

namespace {

constexpr double kSentinel = -99.0;      // conventional "no probability"
constexpr double kSentinelCut = -98.0;   // parsed values <= this are sentinels

std::string fmt7(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.7g", v);
  return buf;
}

std::string join_tokens(const IdKey& key, const Vocabulary& vocab) {
  std::string s;
  for (size_t i = 0; i < key.size(); ++i) {
    if (i) s += ' ';
    s += vocab.token(static_cast<int>(key[i]));
  }
  return s;
}

}  // namespace

std::string export_arpa(const KneserNeyModel& model, const Vocabulary& vocab) {
  if (model.vocab_hash() != vocab.hash())
    throw Error("export_arpa: model was built with a different vocabulary");
  const int n = model.order();
  const int V = model.vocab_size();
  constexpr double kLn10 = 2.302585092994045684;

  // Per-order line sets: all stored grams plus context-only keys (the all-BOS
  // runs), which need a line to carry their backoff weight.
  std::vector<std::vector<IdKey>> lines(static_cast<size_t>(n) + 1);
  for (int w = 0; w < V; ++w) lines[1].push_back(make_key(&w, 1));
  for (int k = 2; k <= n; ++k) {
    auto& keys = lines[static_cast<size_t>(k)];
    keys.reserve(model.grams(k).size() + 1);
    for (const auto& [key, lp] : model.grams(k)) keys.push_back(key);
    if (k < n) {
      for (const auto& [ctx, lb] : model.contexts(k)) {
        if (!model.grams(k).count(ctx)) keys.push_back(ctx);
      }
    }
    std::sort(keys.begin(), keys.end());
  }

  std::ostringstream out;
  out << "\\data\\\n";
  for (int k = 1; k <= n; ++k)
    out << "ngram " << k << "=" << lines[static_cast<size_t>(k)].size() << "\n";
  for (int k = 1; k <= n; ++k) {
    out << "\n\\" << k << "-grams:\n";
    for (const IdKey& key : lines[static_cast<size_t>(k)]) {
      double lp10;
      if (k == 1) {
        const int w = static_cast<int>(key[0]);
        lp10 = w == model.bos_id() ? kSentinel
                                   : model.unigram_logprob()[static_cast<size_t>(w)] / kLn10;
      } else {
        auto it = model.grams(k).find(key);
        lp10 = it == model.grams(k).end() ? kSentinel : it->second / kLn10;
      }
      out << fmt7(lp10) << '\t' << join_tokens(key, vocab);
      if (k < n) {
        auto bit = model.contexts(k).find(key);
        if (bit != model.contexts(k).end()) out << '\t' << fmt7(bit->second / kLn10);
      }
      out << '\n';
    }
  }
  out << "\n\\end\\\n";
  return out.str();
}

namespace {

struct Line {
  int number;
  std::string text;
};

bool parse_double(const std::string& s, double* out) {
  if (s.empty()) return false;
  char* end = nullptr;
  *out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size();
}

}  // namespace

KneserNeyModel import_arpa(const std::string& text, const Vocabulary& vocab) {
  constexpr double kLn10 = 2.302585092994045684;

  std::vector<Line> lines;
  {
    std::istringstream in(text);
    std::string raw;
    int no = 0;
    while (std::getline(in, raw)) {
      ++no;
      if (!raw.empty() && raw.back() == '\r') raw.pop_back();
      lines.push_back({no, raw});
    }
  }
  size_t pos = 0;
  auto skip_blank = [&] {
    while (pos < lines.size() && lines[pos].text.empty()) ++pos;
  };

  skip_blank();
  if (pos >= lines.size() || lines[pos].text != "\\data\\")
    throw ParseError(pos < lines.size() ? lines[pos].number : 0,
                     "expected \\data\\ header");
  ++pos;

  std::vector<uint64_t> declared;  // declared[k-1] = count for order k
  while (pos < lines.size() && lines[pos].text.rfind("ngram ", 0) == 0) {
    const std::string& t = lines[pos].text;
    const size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ParseError(lines[pos].number, "malformed ngram count line");
    int k = 0;
    try {
      k = std::stoi(t.substr(6, eq - 6));
    } catch (...) {
      throw ParseError(lines[pos].number, "malformed ngram order");
    }
    if (k != static_cast<int>(declared.size()) + 1)
      throw ParseError(lines[pos].number,
                       "order mismatch: expected ngram " +
                           std::to_string(declared.size() + 1) + ", got " +
                           std::to_string(k));
    try {
      declared.push_back(std::stoull(t.substr(eq + 1)));
    } catch (...) {
      throw ParseError(lines[pos].number, "malformed ngram count");
    }
    ++pos;
  }
  if (declared.empty())
    throw ParseError(pos < lines.size() ? lines[pos].number : 0,
                     "header declares no ngram orders");
  const int n = static_cast<int>(declared.size());

  KneserNeyModel model;
  model.order_ = n;
  model.vocab_size_ = vocab.size();
  model.bos_id_ = vocab.bos_id();
  model.vocab_hash_ = vocab.hash();
  model.logprob_.resize(static_cast<size_t>(n));
  model.backoff_log_.resize(static_cast<size_t>(n));
  model.unigram_logprob_.assign(static_cast<size_t>(vocab.size()),
                                std::numeric_limits<double>::quiet_NaN());

  for (int k = 1; k <= n; ++k) {
    skip_blank();
    const std::string section = "\\" + std::to_string(k) + "-grams:";
    if (pos >= lines.size() || lines[pos].text != section)
      throw ParseError(pos < lines.size() ? lines[pos].number : 0,
                       "expected section " + section);
    ++pos;
    uint64_t seen = 0;
    while (pos < lines.size() && !lines[pos].text.empty() &&
           lines[pos].text[0] != '\\') {
      const Line& line = lines[pos];
      std::vector<std::string> fields;
      {
        size_t start = 0;
        while (true) {
          size_t tab = line.text.find('\t', start);
          fields.push_back(line.text.substr(start, tab - start));
          if (tab == std::string::npos) break;
          start = tab + 1;
        }
      }
      if (fields.size() != 2 && fields.size() != 3)
        throw ParseError(line.number, "expected 2 or 3 tab-separated fields");
      double lp10;
      if (!parse_double(fields[0], &lp10))
        throw ParseError(line.number, "malformed log probability '" + fields[0] + "'");

      std::vector<int> ids;
      for (const std::string& tok : split_tokens(fields[1])) {
        auto id = vocab.lookup(tok);
        if (!id) throw ParseError(line.number, "token not in vocabulary: '" + tok + "'");
        ids.push_back(*id);
      }
      if (static_cast<int>(ids.size()) != k)
        throw ParseError(line.number, "entry has " + std::to_string(ids.size()) +
                                          " tokens in the " + std::to_string(k) +
                                          "-gram section");
      const IdKey key = make_key(ids);

      if (fields.size() == 3) {
        if (k == n)
          throw ParseError(line.number, "backoff column at the highest order");
        double lb10;
        if (!parse_double(fields[2], &lb10))
          throw ParseError(line.number, "malformed backoff '" + fields[2] + "'");
        model.backoff_log_[static_cast<size_t>(k)][key] = lb10 * kLn10;
      }

      const bool sentinel = lp10 <= kSentinelCut;
      if (k == 1) {
        const int w = ids[0];
        if (!std::isnan(model.unigram_logprob_[static_cast<size_t>(w)]))
          throw ParseError(line.number, "duplicate unigram '" + fields[1] + "'");
        model.unigram_logprob_[static_cast<size_t>(w)] =
            sentinel && w == vocab.bos_id()
                ? -std::numeric_limits<double>::infinity()
                : lp10 * kLn10;
      } else if (!sentinel) {
        model.logprob_[static_cast<size_t>(k - 1)][key] = lp10 * kLn10;
      }
      ++seen;
      ++pos;
    }
    if (seen != declared[static_cast<size_t>(k - 1)])
      throw ParseError(pos < lines.size() ? lines[pos].number : 0,
                       "section " + std::to_string(k) + " has " +
                           std::to_string(seen) + " entries, header declared " +
                           std::to_string(declared[static_cast<size_t>(k - 1)]));
  }
  skip_blank();
  if (pos >= lines.size() || lines[pos].text != "\\end\\")
    throw ParseError(pos < lines.size() ? lines[pos].number : 0,
                     "expected \\end\\");

  for (int w = 0; w < vocab.size(); ++w) {
    if (w == vocab.bos_id()) continue;
    if (std::isnan(model.unigram_logprob_[static_cast<size_t>(w)]))
      throw ParseError(0, "unigram section does not cover vocabulary token '" +
                              vocab.token(w) + "'");
  }
  return model;
}

}  // namespace reslm
