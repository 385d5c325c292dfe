#pragma once

// Evaluation metrics: perplexity (plain and sliding-window), TF-IDF
// relevance, option similarity, answer-label distribution, quantization
// memory savings and training-loss summaries.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "aqag/corpus.hpp"
#include "aqag/detail/csv.hpp"
#include "aqag/detail/io.hpp"
#include "aqag/detail/text.hpp"
#include "aqag/error.hpp"
#include "aqag/label.hpp"
#include "aqag/mcq_parser.hpp"
#include "aqag/token_scores.hpp"

namespace aqag {

namespace detail {

// Neumaier-compensated sum.
class CompensatedSum {
 public:
  void add(double x) noexcept {
    const double t = sum_ + x;
    if (std::fabs(sum_) >= std::fabs(x))
      comp_ += (sum_ - t) + x;
    else
      comp_ += (x - t) + sum_;
    sum_ = t;
  }
  double value() const noexcept { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Perplexity

// exp(-(1/t) * sum log P(x_i | x_<i)).
inline double perplexity(std::span<const double> logprobs) {
  if (logprobs.empty()) throw InvalidArgument("perplexity of an empty sequence");
  detail::CompensatedSum sum;
  for (double lp : logprobs) {
    if (!std::isfinite(lp) || lp > 0.0) throw InvalidArgument("logprob must be finite and <= 0");
    sum.add(lp);
  }
  return std::exp(-sum.value() / static_cast<double>(logprobs.size()));
}

inline double perplexity(const TokenScoreSequence& scores) {
  const auto lps = scores.logprobs();
  return perplexity(lps);
}

struct PerplexityParams {
  std::size_t window = 1024;
  std::size_t stride = 512;
  // Maximum characters per request in the tokenization pass; chunks break on
  // whitespace.
  std::size_t tokenize_chunk_chars = 4000;
  std::size_t concurrency = 4;
};

inline void validate(const PerplexityParams& p) {
  if (p.window < 1 || p.stride < 1 || p.stride > p.window)
    throw InvalidArgument("perplexity window/stride must satisfy 1 <= stride <= window (got window " +
                          std::to_string(p.window) + ", stride " + std::to_string(p.stride) + ")");
  if (p.tokenize_chunk_chars < 1) throw InvalidArgument("tokenize chunk size must be positive");
}

// Anything that can echo a text back with per-token logprobs.
template <typename S>
concept TokenScorer = requires(S& s, std::string_view text) {
  { s.echo_tokens(text) } -> std::convertible_to<std::vector<EchoToken>>;
};

// Window [begin, end) over the token stream; positions [tail_begin, end) are
// the ones it contributes.
struct PerplexityWindow {
  std::size_t begin;
  std::size_t end;
  std::size_t tail_begin;

  bool operator==(const PerplexityWindow&) const = default;
};

// Each step advances by `stride`; a window contributes only the tokens not
// covered by the previous window, so every token is counted once, with up to
// `window - 1` tokens of context.
inline std::vector<PerplexityWindow> plan_windows(std::size_t token_count, std::size_t window, std::size_t stride) {
  std::vector<PerplexityWindow> out;
  std::size_t prev_end = 0;
  for (std::size_t begin = 0; begin < token_count; begin += stride) {
    const std::size_t end = std::min(begin + window, token_count);
    out.push_back({begin, end, prev_end});
    prev_end = end;
    if (end == token_count) break;
  }
  return out;
}

namespace detail {

inline std::vector<std::string_view> chunk_on_whitespace(std::string_view text, std::size_t max_chars) {
  std::vector<std::string_view> chunks;
  while (!text.empty()) {
    if (text.size() <= max_chars) {
      chunks.push_back(text);
      break;
    }
    // Break just before the last whitespace inside the limit; a chunk always
    // starts with the whitespace that precedes its first word.
    auto ws = [&](std::size_t i) { return text[i] == ' ' || text[i] == '\n' || text[i] == '\t'; };
    std::size_t lead = 0;
    while (lead < text.size() && ws(lead)) ++lead;
    std::size_t cut = max_chars;
    while (cut > lead && !ws(cut)) --cut;
    if (cut <= lead) {  // a word longer than the limit is never split
      cut = std::max(max_chars, lead);
      while (cut < text.size() && !ws(cut)) ++cut;
    }
    chunks.push_back(text.substr(0, cut));
    text.remove_prefix(cut);
  }
  return chunks;
}

// Number of leading tokens (such as a service-added BOS) to drop so the rest
// spell out `text` exactly; 0 when no suffix of the tokens does.
inline std::size_t leading_extra_tokens(const std::vector<EchoToken>& tokens, std::string_view text) {
  std::size_t len = 0;
  for (std::size_t k = tokens.size(); k-- > 0;) {
    len += tokens[k].text.size();
    if (len > text.size()) break;
    if (text.compare(text.size() - len, tokens[k].text.size(), tokens[k].text) != 0) break;
    if (len == text.size()) return k;
  }
  return 0;
}

}  // namespace detail

// Sliding-window perplexity over `corpus_text`. The text is first tokenized
// by echoing it through the scorer; each window is then re-scored as the
// concatenation of its token texts and its tail tokens' logprobs are pooled
// (aligned from the end of the response, so a service-added BOS token does
// not shift positions). Windows are scored concurrently, reduced in order.
template <TokenScorer Scorer>
double corpus_perplexity(Scorer& scorer, std::string_view corpus_text, const PerplexityParams& params) {
  validate(params);
  if (detail::is_blank(corpus_text)) throw InvalidArgument("corpus_perplexity: empty corpus");

  std::vector<std::string> tokens;
  for (auto chunk : detail::chunk_on_whitespace(corpus_text, params.tokenize_chunk_chars)) {
    auto echoed = scorer.echo_tokens(chunk);
    const auto skip = detail::leading_extra_tokens(echoed, chunk);
    for (std::size_t i = skip; i < echoed.size(); ++i) tokens.push_back(std::move(echoed[i].text));
  }
  if (tokens.empty()) throw ProtocolError("scoring service returned no tokens");

  const auto windows = plan_windows(tokens.size(), params.window, params.stride);
  std::vector<std::vector<double>> contributions(windows.size());
  std::vector<std::exception_ptr> errors(windows.size());
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t w = next++; w < windows.size(); w = next++) {
      try {
        const auto& win = windows[w];
        std::string text;
        for (std::size_t i = win.begin; i < win.end; ++i) text += tokens[i];
        const auto echoed = scorer.echo_tokens(text);
        const std::size_t m = echoed.size();
        for (std::size_t p = win.tail_begin; p < win.end; ++p) {
          const std::size_t back = win.end - p;
          if (back > m) continue;
          const auto& tok = echoed[m - back];
          if (!tok.logprob) continue;
          if (!std::isfinite(*tok.logprob) || *tok.logprob > 0.0)
            throw ProtocolError("scoring service returned logprob > 0");
          contributions[w].push_back(*tok.logprob);
        }
      } catch (...) {
        errors[w] = std::current_exception();
      }
    }
  };

  const std::size_t n_threads = std::clamp<std::size_t>(params.concurrency, 1, windows.size());
  {
    std::vector<std::jthread> pool;
    for (std::size_t i = 1; i < n_threads; ++i) pool.emplace_back(worker);
    worker();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  std::vector<double> pooled;
  for (const auto& c : contributions) pooled.insert(pooled.end(), c.begin(), c.end());
  if (pooled.empty()) throw InvalidArgument("corpus_perplexity: no token could be scored");
  return perplexity(pooled);
}

// ---------------------------------------------------------------------------
// TF-IDF and cosine similarity

// Lowercased maximal runs of ASCII letters/digits; non-ASCII bytes are
// treated as word characters so UTF-8 words stay whole.
inline std::vector<std::string> tokenize_terms(std::string_view text) {
  std::vector<std::string> terms;
  std::string cur;
  for (char c : text) {
    if (detail::is_ascii_alnum(c) || static_cast<unsigned char>(c) >= 0x80) {
      cur.push_back(detail::ascii_lower(c));
    } else if (!cur.empty()) {
      terms.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) terms.push_back(std::move(cur));
  return terms;
}

// Sparse vector keyed by term id; explicit zeros are never stored.
class WeightedVector {
 public:
  using Map = std::map<std::uint32_t, double>;

  WeightedVector() = default;
  explicit WeightedVector(const Map& entries) {
    for (const auto& [k, v] : entries) set(k, v);
  }

  void set(std::uint32_t id, double w) {
    if (!std::isfinite(w)) throw InvalidArgument("vector weight must be finite");
    if (w == 0.0)
      entries_.erase(id);
    else
      entries_[id] = w;
  }

  double get(std::uint32_t id) const {
    auto it = entries_.find(id);
    return it == entries_.end() ? 0.0 : it->second;
  }

  const Map& entries() const noexcept { return entries_; }
  bool empty() const noexcept { return entries_.empty(); }

  double norm() const noexcept {
    double s = 0.0;
    for (const auto& [k, v] : entries_) s += v * v;
    return std::sqrt(s);
  }

  WeightedVector scaled(double alpha) const {
    WeightedVector out;
    for (const auto& [k, v] : entries_) out.set(k, v * alpha);
    return out;
  }

  bool operator==(const WeightedVector&) const = default;

 private:
  Map entries_;
};

inline double clamp_cosine(double c) noexcept { return std::clamp(c, -1.0, 1.0); }

// A.B / (|A| |B|); 0 when either vector is empty or zero.
inline double cosine_similarity(const WeightedVector& a, const WeightedVector& b) noexcept {
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  const auto& small = a.entries().size() <= b.entries().size() ? a : b;
  const auto& large = &small == &a ? b : a;
  double dot = 0.0;
  for (const auto& [k, v] : small.entries()) dot += v * large.get(k);
  return clamp_cosine(dot / (na * nb));
}

inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw InvalidArgument("cosine_similarity: dimension mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return clamp_cosine(dot / (std::sqrt(na) * std::sqrt(nb)));
}

// Immutable after fit; safe to share across threads.
struct TfidfModel {
  std::map<std::string, std::uint32_t> vocabulary;  // ids follow sorted term order
  std::vector<double> idf;                           // indexed by term id
  std::size_t doc_count = 0;
};

// idf(t) = ln((1 + N) / (1 + df_t)) + 1.
inline TfidfModel tfidf_fit(const std::vector<std::string>& documents) {
  if (documents.empty()) throw InvalidArgument("tfidf_fit: empty corpus");
  std::map<std::string, std::size_t> df;
  for (const auto& doc : documents) {
    auto terms = tokenize_terms(doc);
    std::sort(terms.begin(), terms.end());
    terms.erase(std::unique(terms.begin(), terms.end()), terms.end());
    for (auto& t : terms) ++df[std::move(t)];
  }
  TfidfModel m;
  m.doc_count = documents.size();
  const double n = static_cast<double>(documents.size());
  for (const auto& [term, count] : df) {
    const auto id = static_cast<std::uint32_t>(m.idf.size());
    m.vocabulary.emplace(term, id);
    m.idf.push_back(std::log((1.0 + n) / (1.0 + static_cast<double>(count))) + 1.0);
  }
  return m;
}

// Raw term count x idf, L2-normalized; out-of-vocabulary terms are ignored.
inline WeightedVector tfidf_vector(const TfidfModel& model, std::string_view text) {
  std::map<std::uint32_t, double> counts;
  for (const auto& t : tokenize_terms(text)) {
    auto it = model.vocabulary.find(t);
    if (it != model.vocabulary.end()) counts[it->second] += 1.0;
  }
  double norm2 = 0.0;
  for (auto& [id, w] : counts) {
    w *= model.idf[id];
    norm2 += w * w;
  }
  WeightedVector v;
  if (norm2 == 0.0) return v;
  const double norm = std::sqrt(norm2);
  for (const auto& [id, w] : counts) v.set(id, w / norm);
  return v;
}

inline double relevance_score(std::string_view article, std::string_view question, const TfidfModel& background) {
  return std::max(0.0, cosine_similarity(tfidf_vector(background, article), tfidf_vector(background, question)));
}

// ---------------------------------------------------------------------------
// Option similarity

// Text -> embedding; nullopt when the text has no representable content.
using Embedder = std::function<std::optional<std::vector<double>>(std::string_view)>;

// Static word-vector table: one "word v1 ... vd" line per word, d fixed.
class WordVectors {
 public:
  static WordVectors parse(std::string_view text) {
    WordVectors wv;
    std::size_t n = 0;
    for (const auto& line : detail::split_lines(text)) {
      ++n;
      const auto fields = detail::split_whitespace(line.text);
      if (fields.empty()) continue;
      if (fields.size() < 2) throw FormatError("word vector line has no components", n);
      std::vector<double> vec;
      vec.reserve(fields.size() - 1);
      for (std::size_t i = 1; i < fields.size(); ++i) {
        const std::string s(fields[i]);
        std::size_t used = 0;
        double x = 0.0;
        try {
          x = std::stod(s, &used);
        } catch (const std::exception&) {
          used = 0;
        }
        if (used != s.size() || !std::isfinite(x)) throw FormatError("bad vector component '" + s + "'", n);
        vec.push_back(x);
      }
      if (wv.dim_ == 0) wv.dim_ = vec.size();
      if (vec.size() != wv.dim_)
        throw FormatError("vector has " + std::to_string(vec.size()) + " components, expected " +
                              std::to_string(wv.dim_),
                          n);
      wv.table_[detail::to_lower_ascii(fields[0])] = std::move(vec);
    }
    return wv;
  }

  static WordVectors load(const std::filesystem::path& path) { return parse(detail::read_file(path)); }

  std::size_t dimension() const noexcept { return dim_; }
  std::size_t size() const noexcept { return table_.size(); }

  const std::vector<double>* find(std::string_view word) const {
    auto it = table_.find(std::string(word));
    return it == table_.end() ? nullptr : &it->second;
  }

  // Unweighted mean of the in-vocabulary word vectors; nullopt if every word
  // is out of vocabulary.
  std::optional<std::vector<double>> embed(std::string_view text) const {
    std::vector<double> sum(dim_, 0.0);
    std::size_t hits = 0;
    for (const auto& t : tokenize_terms(text)) {
      if (const auto* v = find(t)) {
        for (std::size_t i = 0; i < dim_; ++i) sum[i] += (*v)[i];
        ++hits;
      }
    }
    if (hits == 0) return std::nullopt;
    for (auto& x : sum) x /= static_cast<double>(hits);
    return sum;
  }

  Embedder embedder() const {
    return [this](std::string_view text) { return embed(text); };
  }

 private:
  std::unordered_map<std::string, std::vector<double>> table_;
  std::size_t dim_ = 0;
};

struct OptionSimilarity {
  std::map<Label, double> scores;
  std::vector<Label> unembeddable;  // scored 0.0 because no embedding exists

  bool operator==(const OptionSimilarity&) const = default;
};

// Cosine similarity of each option's embedding with the correct option's.
inline OptionSimilarity option_similarity(const McqItem& item, const Embedder& embedder) {
  if (!is_complete(item)) throw InvalidArgument("option_similarity needs a complete item");
  std::map<Label, std::optional<std::vector<double>>> emb;
  for (const auto& [label, text] : item.options) emb[label] = embedder(text);

  OptionSimilarity out;
  const auto& correct = emb.at(*item.answer_label);
  for (const auto& [label, e] : emb) {
    if (!e || !correct) {
      out.scores[label] = 0.0;
      if (!e) out.unembeddable.push_back(label);
      continue;
    }
    out.scores[label] = cosine_similarity(*e, *correct);
  }
  if (!correct && std::find(out.unembeddable.begin(), out.unembeddable.end(), *item.answer_label) ==
                      out.unembeddable.end())
    out.unembeddable.push_back(*item.answer_label);
  return out;
}

// ---------------------------------------------------------------------------
// Answer-label distribution

struct DistributionReport {
  std::map<Label, double> fractions;  // every label present
  double max_abs_deviation = 0.0;     // from the uniform 0.25
  std::size_t count = 0;
};

inline DistributionReport distribution_report(std::span<const Label> labels) {
  if (labels.empty()) throw InvalidArgument("distribution_report: no answer labels");
  std::array<std::size_t, 4> counts{};
  for (auto l : labels) ++counts[index_of(l)];
  DistributionReport r;
  r.count = labels.size();
  for (auto l : kLabels) {
    const double f = static_cast<double>(counts[index_of(l)]) / static_cast<double>(labels.size());
    r.fractions[l] = f;
    r.max_abs_deviation = std::max(r.max_abs_deviation, std::fabs(f - 0.25));
  }
  return r;
}

inline DistributionReport distribution_report(const std::vector<RaceRecord>& records) {
  std::vector<Label> labels;
  for (const auto& r : records)
    if (r.answer_label) labels.push_back(*r.answer_label);
  return distribution_report(labels);
}

// Items without an answer label are skipped.
inline DistributionReport distribution_report(const std::vector<McqItem>& items) {
  std::vector<Label> labels;
  for (const auto& i : items)
    if (i.answer_label) labels.push_back(*i.answer_label);
  return distribution_report(labels);
}

inline nlohmann::json to_json(const DistributionReport& r) {
  nlohmann::json fractions = nlohmann::json::object();
  for (const auto& [l, f] : r.fractions) fractions[to_string(l)] = f;
  return {{"fractions", fractions}, {"max_abs_deviation", r.max_abs_deviation}, {"count", r.count}};
}

// ---------------------------------------------------------------------------
// Quantization

struct QuantizationSpec {
  int quantized_bits = 4;
  int full_bits = 32;

  bool operator==(const QuantizationSpec&) const = default;
};

inline bool is_supported_bit_width(int bits) noexcept {
  return bits == 4 || bits == 8 || bits == 16 || bits == 32;
}

inline std::optional<std::string> quantization_error(const QuantizationSpec& q) {
  if (!is_supported_bit_width(q.quantized_bits))
    return "quantized_bits must be one of 4, 8, 16, 32 (got " + std::to_string(q.quantized_bits) + ")";
  if (q.full_bits <= 0 || q.quantized_bits > q.full_bits)
    return "need 0 < quantized_bits <= full_bits (got " + std::to_string(q.quantized_bits) + "/" +
           std::to_string(q.full_bits) + ")";
  return std::nullopt;
}

// Percentage of weight memory saved relative to full precision.
inline double memory_saved(const QuantizationSpec& q) {
  if (auto err = quantization_error(q)) throw InvalidArgument(*err);
  return static_cast<double>(q.full_bits - q.quantized_bits) * 100.0 / static_cast<double>(q.full_bits);
}

// ---------------------------------------------------------------------------
// Training-loss log

struct LossPoint {
  long long step = 0;
  double loss = 0.0;

  bool operator==(const LossPoint&) const = default;
};

using LossLog = std::vector<LossPoint>;

inline void validate(const LossLog& log) {
  for (std::size_t i = 0; i < log.size(); ++i) {
    if (!std::isfinite(log[i].loss) || log[i].loss < 0.0)
      throw InvalidArgument("loss must be finite and >= 0 at step " + std::to_string(log[i].step));
    if (i && log[i].step <= log[i - 1].step)
      throw InvalidArgument("loss log steps must be strictly increasing");
  }
}

// Two-column CSV "step,loss" with a header row.
inline LossLog parse_loss_csv(std::string_view text) {
  const auto rows = detail::parse_csv(text);
  if (rows.empty()) return {};
  if (rows[0].size() != 2 || detail::fold(rows[0][0]) != "step" || detail::fold(rows[0][1]) != "loss")
    throw FormatError("loss log header must be step,loss");
  LossLog log;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != 2) throw FormatError("expected 2 fields", r);
    LossPoint p;
    try {
      std::size_t used = 0;
      const std::string step(detail::trim(rows[r][0])), loss(detail::trim(rows[r][1]));
      p.step = std::stoll(step, &used);
      if (used != step.size()) throw std::invalid_argument("step");
      p.loss = std::stod(loss, &used);
      if (used != loss.size()) throw std::invalid_argument("loss");
    } catch (const std::exception&) {
      throw FormatError("non-numeric step or loss", r);
    }
    log.push_back(p);
  }
  try {
    validate(log);
  } catch (const InvalidArgument& e) {
    throw FormatError(e.what());
  }
  return log;
}

struct LossSummary {
  LossLog smoothed;
  bool decreased = false;
  double first = 0.0;
  double last = 0.0;
};

// Trailing moving average over full windows: smoothed[k] averages losses
// k .. k+window-1 and carries the step of the last one.
inline LossSummary loss_summary(const LossLog& log, std::size_t window) {
  validate(log);
  if (window < 1) throw InvalidArgument("loss window must be >= 1");
  if (log.size() < window)
    throw InvalidArgument("loss log has " + std::to_string(log.size()) + " points, fewer than window " +
                          std::to_string(window));
  LossSummary s;
  for (std::size_t end = window; end <= log.size(); ++end) {
    detail::CompensatedSum sum;
    for (std::size_t i = end - window; i < end; ++i) sum.add(log[i].loss);
    s.smoothed.push_back({log[end - 1].step, sum.value() / static_cast<double>(window)});
  }
  s.first = s.smoothed.front().loss;
  s.last = s.smoothed.back().loss;
  s.decreased = s.last < s.first;
  return s;
}

}  // namespace aqag
