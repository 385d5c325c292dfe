#pragma once

// Command-line front end: preprocess, stats, prompt build, generate, parse,
// evaluate, ppl, train-config and loss-summary.
//
// Exit codes: 0 success (possibly with recorded per-article failures),
// 1 environmental failure (I/O, network, service), 2 usage or validation error.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "aqag/corpus.hpp"
#include "aqag/detail/io.hpp"
#include "aqag/detail/sha256.hpp"
#include "aqag/error.hpp"
#include "aqag/inference_client.hpp"
#include "aqag/mcq_parser.hpp"
#include "aqag/metrics.hpp"
#include "aqag/prompting.hpp"
#include "aqag/train_config.hpp"
#include "aqag/version.hpp"

namespace aqag::cli {

namespace fs = std::filesystem;
using nlohmann::json;

enum ExitCode : int { kOk = 0, kEnvironment = 1, kUsage = 2 };

inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline json file_fingerprint(const fs::path& path) {
  return {{"path", path.string()}, {"sha256", detail::sha256_hex(detail::read_file(path))}};
}

inline std::optional<std::string> env(const char* name) {
  const char* v = std::getenv(name);
  if (!v || !*v) return std::nullopt;
  return std::string(v);
}

// Run manifest: everything needed to reproduce a generation or evaluation
// run. Written atomically next to the run's outputs.
struct RunManifest {
  std::string command;
  json inputs = json::object();
  json prompt_files = json::object();
  std::optional<std::string> endpoint;
  std::optional<GenerationParams> params;
  json settings = json::object();
  json config_sources = json::object();

  json to_json() const {
    json j{{"tool", "aqag"},
           {"tool_version", kVersion},
           {"timestamp", utc_timestamp()},
           {"command", command},
           {"inputs", inputs},
           {"prompt_files", prompt_files},
           {"settings", settings},
           {"config_sources", config_sources}};
    j["endpoint"] = endpoint ? json(*endpoint) : json();
    j["generation_params"] = params ? aqag::to_json(*params) : json();
    return j;
  }

  void write(const fs::path& path) const { detail::write_file_atomic(path, dump(to_json())); }
};

// Resolves a setting as flag > environment > config file > default and
// records which source won.
class SettingResolver {
 public:
  explicit SettingResolver(json config_file = json::object()) : config_(std::move(config_file)) {}

  template <typename T>
  T resolve(const std::string& key, const std::optional<T>& flag, const char* env_var, T fallback) {
    if (flag) return note(key, "flag", *flag);
    if (env_var) {
      if (auto e = env(env_var)) {
        if constexpr (std::is_same_v<T, std::string>) {
          return note(key, "env", *e);
        } else {
          std::istringstream ss(*e);
          T v{};
          if (!(ss >> v) || !ss.eof()) throw InvalidArgument(std::string(env_var) + " is not a valid value");
          return note(key, "env", v);
        }
      }
    }
    if (auto it = config_.find(key); it != config_.end() && !it->is_null()) {
      try {
        return note(key, "config", it->get<T>());
      } catch (const json::exception&) {
        throw InvalidArgument("config key '" + key + "' has the wrong type");
      }
    }
    return note(key, "default", fallback);
  }

  const json& sources() const noexcept { return sources_; }

 private:
  template <typename T>
  T note(const std::string& key, const char* source, T value) {
    sources_[key] = source;
    return value;
  }

  json config_;
  json sources_ = json::object();
};

inline json load_config_file(const std::optional<std::string>& path) {
  if (!path) return json::object();
  try {
    auto j = json::parse(detail::read_file(*path));
    if (!j.is_object()) throw FormatError("config file must hold a JSON object");
    return j;
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("invalid config file: ") + e.what());
  }
}

struct LoadedCorpus {
  fs::path path;
  std::vector<RaceRecord> records;
};

inline LoadedCorpus load_corpus_arg(const std::string& path, const std::string& format) {
  CorpusFormat f = guess_corpus_format(path);
  if (!format.empty()) {
    auto parsed = parse_corpus_format(format);
    if (!parsed) throw InvalidArgument("unknown corpus format '" + format + "'");
    f = *parsed;
  }
  return {path, load_corpus(path, f)};
}

// System prompt for a style, optionally replaced from a file. Returns the
// text and its manifest entry.
inline std::pair<std::string, json> system_prompt_arg(PromptStyle style, const std::optional<std::string>& file) {
  if (file) {
    auto text = detail::read_file(*file);
    return {text, {{"source", *file}, {"sha256", detail::sha256_hex(text)}}};
  }
  std::string text(default_system_prompt(style));
  return {text,
          {{"source", std::string("builtin:") + (style == PromptStyle::FillInBlank ? "system_fib.txt" : "system_open.txt")},
           {"sha256", detail::sha256_hex(text)}}};
}

// First `n` complete records whose question type matches the style, skipping
// any whose article equals `exclude_article`.
inline std::vector<FewShotExample> pick_few_shots(const std::vector<RaceRecord>& pool, PromptStyle style, std::size_t n,
                                                  std::string_view exclude_article = {}) {
  std::vector<FewShotExample> shots;
  for (const auto& r : pool) {
    if (shots.size() >= n) break;
    if (!is_complete(r) || detect_question_type(r.question) != question_type_for(style)) continue;
    if (!exclude_article.empty() && r.article == exclude_article) continue;
    shots.push_back(FewShotExample::from_record(r));
  }
  return shots;
}

// ---------------------------------------------------------------------------
// Commands

struct PreprocessArgs {
  std::string in;
  std::string format;
  std::string out_dir;
  std::optional<std::string> contractions;
};

inline int cmd_preprocess(const PreprocessArgs& a, std::ostream& out) {
  const auto table = a.contractions ? ContractionTable::load(*a.contractions) : ContractionTable::builtin();
  auto corpus = load_corpus_arg(a.in, a.format);
  const auto input_rows = corpus.records.size();
  for (auto& r : corpus.records) {
    r.article = table.expand(r.article);
    r.question = table.expand(r.question);
  }
  auto filtered = filter_complete(std::move(corpus.records));
  for (auto& r : filtered.kept) r = derive_correct_text(std::move(r));
  const auto kept = filtered.kept.size();
  auto split = split_by_question_type(std::move(filtered.kept));

  std::error_code ec;
  fs::create_directories(a.out_dir, ec);
  if (ec) throw IoError("cannot create " + a.out_dir);
  const fs::path dir(a.out_dir);
  detail::write_file_atomic(dir / "interrogative.csv", format_corpus_csv(split.interrogative));
  detail::write_file_atomic(dir / "fill_in_blank.csv", format_corpus_csv(split.fill_in_blank));
  const json report{{"input_rows", input_rows},
                    {"kept", kept},
                    {"dropped", filtered.dropped_count},
                    {"interrogative", split.interrogative.size()},
                    {"fill_in_blank", split.fill_in_blank.size()}};
  detail::write_file_atomic(dir / "drop_report.json", dump(report));
  out << dump(report);
  return kOk;
}

struct StatsArgs {
  std::string in;
  std::string format;
  std::optional<std::string> out;
  bool expand = false;
};

inline int cmd_stats(const StatsArgs& a, std::ostream& out, std::ostream& err) {
  auto corpus = load_corpus_arg(a.in, a.format);
  if (a.expand)
    for (auto& r : corpus.records) {
      r.article = expand_contractions(r.article);
      r.question = expand_contractions(r.question);
    }
  auto filtered = filter_complete(std::move(corpus.records));
  if (filtered.dropped_count) err << "stats: skipped " << filtered.dropped_count << " incomplete rows\n";
  const auto text = dump(to_json(corpus_stats(filtered.kept)));
  if (a.out)
    detail::write_file_atomic(*a.out, text);
  else
    out << text;
  return kOk;
}

struct PromptBuildArgs {
  std::optional<std::string> article_file;
  std::optional<std::string> corpus;
  std::string format;
  std::size_t article = 0;
  std::string style = "open";
  std::size_t count = kDefaultQuestionCount;
  std::size_t shots = 0;
  std::optional<std::string> shots_from;
  std::optional<std::string> system_file;
};

inline PromptStyle style_arg(const std::string& s) {
  auto style = parse_prompt_style(s);
  if (!style) throw InvalidArgument("unknown prompt style '" + s + "' (use fib or open)");
  return *style;
}

inline int cmd_prompt_build(const PromptBuildArgs& a, std::ostream& out) {
  const auto style = style_arg(a.style);
  if (a.count == 0) throw InvalidArgument("--count must be >= 1");
  std::string article;
  std::vector<RaceRecord> pool;
  if (a.article_file) {
    article = detail::read_file(*a.article_file);
  } else if (a.corpus) {
    auto corpus = load_corpus_arg(*a.corpus, a.format);
    const auto groups = group_articles(corpus.records);
    if (a.article >= groups.size())
      throw InvalidArgument("--article " + std::to_string(a.article) + " out of range (" +
                            std::to_string(groups.size()) + " articles)");
    article = groups[a.article].text;
    pool = std::move(corpus.records);
  } else {
    throw InvalidArgument("prompt build needs --article-file or --corpus");
  }
  if (a.shots_from) pool = load_corpus_arg(*a.shots_from, "").records;
  const auto shots = pick_few_shots(pool, style, a.shots, article);
  auto [system, fingerprint] = system_prompt_arg(style, a.system_file);
  out << render_llama_chat(build_generation_prompt(article, style, shots, a.count, system)) << "\n";
  return kOk;
}

struct GenerateArgs {
  std::string corpus;
  std::string format;
  std::string style = "open";
  std::size_t count = kDefaultQuestionCount;
  std::string out_dir;
  std::optional<std::string> endpoint;
  std::optional<std::size_t> max_new_tokens;
  std::optional<double> temperature;
  std::optional<long long> seed;
  std::vector<std::string> stop;
  std::size_t shots = kDefaultFewShotCount;
  std::optional<std::string> shots_from;
  std::optional<std::string> system_file;
  std::optional<long long> timeout_ms;
  std::optional<std::size_t> concurrency;
  long long retry_backoff_ms = 500;
  int retries = 3;
  std::optional<std::string> config;
  std::optional<std::string> model;
  std::optional<std::size_t> limit;
};

struct ArticleResult {
  bool ok = false;
  std::string error;
  GenerationResponse response;
  ParseReport report;
  std::vector<ParseIssue> validation;
};

inline int cmd_generate(const GenerateArgs& a, std::ostream& out, std::ostream& err) {
  const auto style = style_arg(a.style);
  if (a.count == 0) throw InvalidArgument("--count must be >= 1");

  SettingResolver settings(load_config_file(a.config));
  const auto endpoint = settings.resolve<std::string>("endpoint", a.endpoint, "AQAG_ENDPOINT", "");
  if (endpoint.empty()) throw InvalidArgument("no endpoint: pass --endpoint or set AQAG_ENDPOINT");
  GenerationParams params;
  params.max_new_tokens = settings.resolve<std::size_t>("max_new_tokens", a.max_new_tokens, nullptr, 512);
  params.temperature = settings.resolve<double>("temperature", a.temperature, nullptr, 0.7);
  params.stop_sequences = a.stop;
  params.seed = a.seed;
  validate(params);

  ClientOptions opts;
  opts.timeout = std::chrono::milliseconds(settings.resolve<long long>("timeout_ms", a.timeout_ms, nullptr, 60000));
  opts.max_in_flight = settings.resolve<std::size_t>("concurrency", a.concurrency, nullptr, 4);
  if (opts.max_in_flight < 1) throw InvalidArgument("concurrency must be >= 1");
  opts.retry.max_attempts = a.retries;
  opts.retry.initial_backoff = std::chrono::milliseconds(a.retry_backoff_ms);
  opts.api_key = env("AQAG_API_KEY");
  const auto model = settings.resolve<std::string>("model", a.model, nullptr, "");
  if (!model.empty()) opts.model = model;
  InferenceClient client(endpoint, opts);

  auto corpus = load_corpus_arg(a.corpus, a.format);
  auto groups = group_articles(corpus.records);
  if (a.limit && *a.limit < groups.size()) groups.resize(*a.limit);
  const auto shot_pool = a.shots_from ? load_corpus_arg(*a.shots_from, "").records : corpus.records;
  auto [system, system_fingerprint] = system_prompt_arg(style, a.system_file);

  std::vector<ArticleResult> results(groups.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < groups.size(); i = next++) {
      auto& res = results[i];
      try {
        const auto shots = pick_few_shots(shot_pool, style, a.shots, groups[i].text);
        const auto prompt = render_llama_chat(build_generation_prompt(groups[i].text, style, shots, a.count, system));
        res.response = client.generate(prompt, params);
        res.report = parse_mcq_block(res.response.text);
        res.validation = validate_items(res.report, a.count);
        res.ok = true;
      } catch (const std::exception& e) {
        res.error = e.what();
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    const std::size_t n = std::min<std::size_t>(opts.max_in_flight, groups.size());
    for (std::size_t t = 1; t < n; ++t) pool.emplace_back(worker);
    worker();
  }

  std::error_code ec;
  fs::create_directories(a.out_dir, ec);
  if (ec) throw IoError("cannot create " + a.out_dir);
  const fs::path dir(a.out_dir);

  json combined = json::array(), failures = json::array();
  std::size_t succeeded = 0;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    const auto& g = groups[i];
    const auto& res = results[i];
    if (!res.ok) {
      failures.push_back({{"article_index", i}, {"article_id", g.id}, {"error", res.error}});
      err << "generate: article " << g.id << " failed: " << res.error << "\n";
      continue;
    }
    ++succeeded;
    json items = json::array(), issues = json::array();
    for (const auto& item : res.report.items) items.push_back(to_json(item));
    for (const auto& issue : res.report.issues) issues.push_back(to_json(issue));
    for (const auto& issue : res.validation) issues.push_back(to_json(issue));
    std::ostringstream name;
    name << "article_" << std::setw(4) << std::setfill('0') << i << ".json";
    detail::write_file_atomic(dir / name.str(), dump({{"article_index", i},
                                                      {"article_id", g.id},
                                                      {"finish_reason", to_string(res.response.finish_reason)},
                                                      {"raw_text", res.response.text},
                                                      {"items", items},
                                                      {"issues", issues}}));
    combined.push_back({{"article_id", g.id}, {"items", items}});
  }
  detail::write_file_atomic(dir / "items.json", dump(combined));
  detail::write_file_atomic(dir / "failures.json", dump(failures));

  RunManifest m;
  m.command = "generate";
  m.inputs["corpus"] = file_fingerprint(a.corpus);
  if (a.shots_from) m.inputs["shots_from"] = file_fingerprint(*a.shots_from);
  m.prompt_files["system"] = system_fingerprint;
  m.endpoint = endpoint;
  m.params = params;
  m.settings = {{"style", std::string(to_string(style))},
                {"count", a.count},
                {"shots", a.shots},
                {"timeout_ms", opts.timeout.count()},
                {"concurrency", opts.max_in_flight},
                {"retries", opts.retry.max_attempts},
                {"model", model},
                {"articles", groups.size()},
                {"succeeded", succeeded},
                {"failed", groups.size() - succeeded}};
  m.config_sources = settings.sources();
  m.write(dir / "manifest.json");

  out << "generated " << succeeded << "/" << groups.size() << " articles into " << dir.string() << "\n";
  return (!groups.empty() && succeeded == 0) ? kEnvironment : kOk;
}

struct ParseArgs {
  std::string in;
  std::optional<std::size_t> expected;
  std::optional<std::string> out;
};

inline int cmd_parse(const ParseArgs& a, std::ostream& out) {
  const auto text = a.in == "-" ? std::string(std::istreambuf_iterator<char>(std::cin), {}) : detail::read_file(a.in);
  const auto report = parse_mcq_block(text);
  auto j = to_json(report);
  if (a.expected) {
    json v = json::array();
    for (const auto& issue : validate_items(report, *a.expected)) v.push_back(to_json(issue));
    j["validation"] = v;
  }
  if (a.out)
    detail::write_file_atomic(*a.out, dump(j));
  else
    out << dump(j);
  return kOk;
}

struct EvaluateArgs {
  std::string items;
  std::string corpus;
  std::string format;
  std::optional<std::string> embeddings;
  std::optional<std::string> endpoint;
  bool options_similarity = false;
  std::string out;
  std::optional<long long> timeout_ms;
};

// Items file: JSON array of {article_id, items:[McqItem]} as written by
// generate. An empty file holds no questions.
inline std::vector<std::pair<std::string, std::vector<McqItem>>> load_items_file(const std::string& path) {
  const auto text = detail::read_file(path);
  std::vector<std::pair<std::string, std::vector<McqItem>>> out;
  if (detail::is_blank(text)) return out;
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("invalid items JSON: ") + e.what());
  }
  if (!doc.is_array()) throw FormatError("items file must hold a JSON array");
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& entry = doc[i];
    if (!entry.is_object() || !entry.contains("article_id") || !entry["article_id"].is_string() ||
        !entry.contains("items") || !entry["items"].is_array())
      throw FormatError("entry needs article_id and items", i + 1);
    std::vector<McqItem> items;
    for (const auto& item : entry["items"]) items.push_back(mcq_item_from_json(item));
    out.emplace_back(entry["article_id"].get<std::string>(), std::move(items));
  }
  return out;
}

inline int cmd_evaluate(const EvaluateArgs& a, std::ostream& out) {
  const bool want_similarity = a.options_similarity || a.embeddings.has_value();
  const auto endpoint = a.endpoint ? a.endpoint : env("AQAG_ENDPOINT");
  if (a.options_similarity && !a.embeddings && !endpoint)
    throw InvalidArgument("--options-similarity needs --embeddings or an embedding endpoint");

  const auto entries = load_items_file(a.items);
  auto corpus = load_corpus_arg(a.corpus, a.format);
  std::map<std::string, std::string> articles;
  for (const auto& g : group_articles(corpus.records)) articles.emplace(g.id, g.text);

  std::optional<WordVectors> vectors;
  std::optional<InferenceClient> client;
  Embedder embedder;
  if (want_similarity) {
    if (a.embeddings) {
      vectors = WordVectors::load(*a.embeddings);
      embedder = vectors->embedder();
    } else {
      ClientOptions opts;
      if (a.timeout_ms) opts.timeout = std::chrono::milliseconds(*a.timeout_ms);
      opts.api_key = env("AQAG_API_KEY");
      client.emplace(*endpoint, opts);
      embedder = [&client](std::string_view text) -> std::optional<std::vector<double>> {
        if (detail::is_blank(text)) return std::nullopt;
        return client->embed(text);
      };
    }
  }

  json questions = json::array();
  std::vector<McqItem> all_items;
  detail::CompensatedSum relevance_sum;
  std::size_t relevance_count = 0;
  for (const auto& [article_id, items] : entries) {
    const auto it = articles.find(article_id);
    if (it == articles.end()) throw InvalidArgument("article '" + article_id + "' is not in the corpus");
    std::vector<std::string> docs{it->second};
    for (const auto& item : items) docs.push_back(item.stem);
    const auto background = tfidf_fit(docs);
    for (const auto& item : items) {
      json q{{"article_id", article_id}, {"index", item.index}, {"stem", item.stem}, {"complete", item.complete}};
      const double rel = relevance_score(it->second, item.stem, background);
      q["relevance"] = rel;
      relevance_sum.add(rel);
      ++relevance_count;
      if (want_similarity && item.complete) {
        const auto sim = option_similarity(item, embedder);
        json scores = json::object(), flagged = json::array();
        for (const auto& [l, s] : sim.scores) scores[to_string(l)] = s;
        for (auto l : sim.unembeddable) flagged.push_back(to_string(l));
        q["option_similarity"] = scores;
        q["unembeddable_options"] = flagged;
      } else {
        q["option_similarity"] = json();
      }
      questions.push_back(std::move(q));
      all_items.push_back(item);
    }
  }

  bool any_label = false;
  for (const auto& i : all_items) any_label = any_label || i.answer_label.has_value();
  json report{{"questions", questions},
              {"summary",
               {{"question_count", relevance_count},
                {"mean_relevance", relevance_count ? json(relevance_sum.value() / relevance_count) : json()}}}};
  report["distribution"] = any_label ? to_json(distribution_report(all_items)) : json();

  RunManifest m;
  m.command = "evaluate";
  m.inputs["items"] = file_fingerprint(a.items);
  m.inputs["corpus"] = file_fingerprint(a.corpus);
  if (a.embeddings) m.inputs["embeddings"] = file_fingerprint(*a.embeddings);
  if (want_similarity && !a.embeddings) m.endpoint = endpoint;
  m.settings = {{"option_similarity", want_similarity},
                {"embedder", !want_similarity ? "none" : a.embeddings ? "word_vectors" : "service"}};
  report["metadata"] = {{"items", m.inputs["items"]},
                        {"corpus", m.inputs["corpus"]},
                        {"embeddings", a.embeddings ? m.inputs["embeddings"] : json()},
                        {"endpoint", m.endpoint ? json(*m.endpoint) : json()},
                        {"tool_version", kVersion}};

  const fs::path out_path(a.out);
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  detail::write_file_atomic(out_path, dump(report));
  auto manifest_path = out_path;
  manifest_path.replace_extension(".manifest.json");
  m.write(manifest_path);
  out << "evaluated " << relevance_count << " questions into " << out_path.string() << "\n";
  return kOk;
}

struct PplArgs {
  std::string text;
  std::optional<std::string> endpoint;
  std::size_t window = 1024;
  std::size_t stride = 512;
  std::size_t chunk_chars = 4000;
  std::size_t concurrency = 4;
  std::optional<long long> timeout_ms;
  long long retry_backoff_ms = 500;
  std::optional<std::string> model;
};

inline int cmd_ppl(const PplArgs& a, std::ostream& out) {
  PerplexityParams p{a.window, a.stride, a.chunk_chars, a.concurrency};
  validate(p);
  const auto endpoint = a.endpoint ? a.endpoint : env("AQAG_ENDPOINT");
  if (!endpoint) throw InvalidArgument("no endpoint: pass --endpoint or set AQAG_ENDPOINT");
  ClientOptions opts;
  if (a.timeout_ms) opts.timeout = std::chrono::milliseconds(*a.timeout_ms);
  opts.max_in_flight = std::max<std::size_t>(1, a.concurrency);
  opts.retry.initial_backoff = std::chrono::milliseconds(a.retry_backoff_ms);
  opts.api_key = env("AQAG_API_KEY");
  opts.model = a.model;
  InferenceClient client(*endpoint, opts);
  const auto text = detail::read_file(a.text);
  const double ppl = corpus_perplexity(client, text, p);
  out << std::setprecision(10) << ppl << "\n";
  return kOk;
}

struct TrainConfigArgs {
  std::string out;
  std::optional<std::string> base_model;
  std::optional<int> batch_size, gradient_accumulation, max_seq_len, epochs, eval_interval_steps;
  std::optional<double> max_grad_norm, learning_rate;
  std::optional<std::string> precision, lr_schedule, optimizer, quant_type, compute_dtype, padding_side;
  std::optional<int> quantized_bits, full_bits;
  std::optional<std::string> adapter_method;
  std::optional<int> adapter_rank;
  std::optional<double> adapter_alpha;
};

template <typename E>
E parse_enum_arg(const std::string& flag, const std::string& value) {
  const E e = json(value).get<E>();
  if (json(e) != json(value)) throw InvalidArgument("unknown value '" + value + "' for " + flag);
  return e;
}

inline TrainConfig apply_overrides(TrainConfig c, const TrainConfigArgs& a) {
  if (a.base_model) c.base_model_id = *a.base_model;
  if (a.batch_size) c.batch_size = *a.batch_size;
  if (a.gradient_accumulation) c.gradient_accumulation = *a.gradient_accumulation;
  if (a.max_grad_norm) c.max_grad_norm = *a.max_grad_norm;
  if (a.precision) c.precision = parse_enum_arg<Precision>("--precision", *a.precision);
  if (a.max_seq_len) c.max_seq_len = *a.max_seq_len;
  if (a.epochs) c.epochs = *a.epochs;
  if (a.eval_interval_steps) c.eval_interval_steps = *a.eval_interval_steps;
  if (a.lr_schedule) c.lr_schedule = parse_enum_arg<LrSchedule>("--lr-schedule", *a.lr_schedule);
  if (a.optimizer) c.optimizer = *a.optimizer;
  if (a.quantized_bits) c.quantization.quantized_bits = *a.quantized_bits;
  if (a.full_bits) c.quantization.full_bits = *a.full_bits;
  if (a.quant_type) c.quant_type = *a.quant_type;
  if (a.compute_dtype) c.compute_dtype = *a.compute_dtype;
  if (a.padding_side) c.padding_side = parse_enum_arg<PaddingSide>("--padding-side", *a.padding_side);
  if (a.learning_rate) c.learning_rate = *a.learning_rate;
  if (a.adapter_method || a.adapter_rank || a.adapter_alpha) {
    if (!a.adapter_rank || !a.adapter_alpha)
      throw InvalidArgument("--adapter-rank and --adapter-alpha must be given together");
    c.adapter = AdapterSpec{a.adapter_method.value_or("lora"), *a.adapter_rank, *a.adapter_alpha};
  }
  return c;
}

inline int cmd_train_config_emit(const TrainConfigArgs& a, std::ostream& out, std::ostream& err) {
  const auto cfg = apply_overrides(paper_default_config(), a);
  const auto issues = validate_config(cfg);
  for (const auto& i : issues)
    err << (i.severity == Severity::Error ? "error: " : "warning: ") << i.field << " " << i.message << "\n";
  if (has_errors(issues)) return kUsage;
  emit_config(cfg, a.out);
  out << "wrote " << a.out << " (effective batch " << cfg.effective_batch() << ", memory saved "
      << std::fixed << std::setprecision(1) << memory_saved(cfg.quantization) << "%)\n";
  return kOk;
}

inline int cmd_train_config_validate(const std::string& in, std::ostream& out, std::ostream& err) {
  const auto cfg = load_config(in);
  const auto issues = validate_config(cfg);
  for (const auto& i : issues)
    err << (i.severity == Severity::Error ? "error: " : "warning: ") << i.field << " " << i.message << "\n";
  if (has_errors(issues)) return kUsage;
  out << "ok\n";
  return kOk;
}

struct LossArgs {
  std::string log;
  std::size_t window = 1;
};

inline int cmd_loss_summary(const LossArgs& a, std::ostream& out) {
  const auto s = loss_summary(parse_loss_csv(detail::read_file(a.log)), a.window);
  json smoothed = json::array();
  for (const auto& p : s.smoothed) smoothed.push_back({{"step", p.step}, {"loss", p.loss}});
  out << dump({{"smoothed", smoothed}, {"decreased", s.decreased}, {"first", s.first}, {"last", s.last}});
  return kOk;
}

// ---------------------------------------------------------------------------

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Automatic question-and-answer generation toolkit"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  PreprocessArgs pre;
  auto* pre_cmd = app.add_subcommand("preprocess", "Expand contractions, drop incomplete rows, split by question type");
  pre_cmd->add_option("--in", pre.in, "Corpus file")->required();
  pre_cmd->add_option("--format", pre.format, "csv or json (default: from extension)");
  pre_cmd->add_option("--out", pre.out_dir, "Output directory")->required();
  pre_cmd->add_option("--contractions", pre.contractions, "Contraction table (TSV)");

  StatsArgs stats;
  auto* stats_cmd = app.add_subcommand("stats", "Corpus EDA statistics as JSON");
  stats_cmd->add_option("--in", stats.in, "Corpus file")->required();
  stats_cmd->add_option("--format", stats.format, "csv or json");
  stats_cmd->add_option("--out", stats.out, "Output JSON file (default: stdout)");
  stats_cmd->add_flag("--expand-contractions", stats.expand, "Expand contractions first");

  PromptBuildArgs pb;
  auto* prompt_cmd = app.add_subcommand("prompt", "Prompt tools");
  prompt_cmd->require_subcommand(1);
  auto* pb_cmd = prompt_cmd->add_subcommand("build", "Render a generation prompt in Llama-2 chat format");
  pb_cmd->add_option("--article-file", pb.article_file, "Plain-text article");
  pb_cmd->add_option("--corpus", pb.corpus, "Corpus to take the article from");
  pb_cmd->add_option("--format", pb.format, "Corpus format");
  pb_cmd->add_option("--article", pb.article, "0-based article position in the corpus");
  pb_cmd->add_option("--style", pb.style, "fib or open");
  pb_cmd->add_option("--count", pb.count, "Questions to request");
  pb_cmd->add_option("--shots", pb.shots, "Few-shot examples");
  pb_cmd->add_option("--shots-from", pb.shots_from, "Corpus for few-shot examples");
  pb_cmd->add_option("--system-file", pb.system_file, "Replacement system prompt");

  GenerateArgs gen;
  auto* gen_cmd = app.add_subcommand("generate", "Generate MCQs for every article via the inference service");
  gen_cmd->add_option("--corpus", gen.corpus, "Corpus file")->required();
  gen_cmd->add_option("--format", gen.format, "Corpus format");
  gen_cmd->add_option("--style", gen.style, "fib or open");
  gen_cmd->add_option("--count", gen.count, "Questions per article");
  gen_cmd->add_option("--out", gen.out_dir, "Output directory")->required();
  gen_cmd->add_option("--endpoint", gen.endpoint, "Service URL (env AQAG_ENDPOINT)");
  gen_cmd->add_option("--max-new-tokens", gen.max_new_tokens, "Generation length limit (default 512)");
  gen_cmd->add_option("--temperature", gen.temperature, "Sampling temperature (default 0.7)");
  gen_cmd->add_option("--seed", gen.seed, "Sampling seed");
  gen_cmd->add_option("--stop", gen.stop, "Stop sequence (repeatable)");
  gen_cmd->add_option("--shots", gen.shots, "Few-shot examples per prompt");
  gen_cmd->add_option("--shots-from", gen.shots_from, "Corpus for few-shot examples");
  gen_cmd->add_option("--system-file", gen.system_file, "Replacement system prompt");
  gen_cmd->add_option("--timeout-ms", gen.timeout_ms, "Request timeout (default 60000)");
  gen_cmd->add_option("--concurrency", gen.concurrency, "Requests in flight (default 4)");
  gen_cmd->add_option("--retries", gen.retries, "Attempts per request");
  gen_cmd->add_option("--retry-backoff-ms", gen.retry_backoff_ms, "Initial retry backoff");
  gen_cmd->add_option("--config", gen.config, "JSON settings file");
  gen_cmd->add_option("--model", gen.model, "Model name sent to the service");
  gen_cmd->add_option("--limit", gen.limit, "Process at most this many articles");

  ParseArgs parse;
  auto* parse_cmd = app.add_subcommand("parse", "Parse generated text into MCQ items");
  parse_cmd->add_option("--in", parse.in, "Text file, or - for stdin")->required();
  parse_cmd->add_option("--expected", parse.expected, "Expected question count");
  parse_cmd->add_option("--out", parse.out, "Output JSON file (default: stdout)");

  EvaluateArgs ev;
  auto* ev_cmd = app.add_subcommand("evaluate", "Relevance, option similarity and answer distribution");
  ev_cmd->add_option("--items", ev.items, "items.json from generate")->required();
  ev_cmd->add_option("--corpus", ev.corpus, "Corpus with the source articles")->required();
  ev_cmd->add_option("--format", ev.format, "Corpus format");
  ev_cmd->add_option("--embeddings", ev.embeddings, "Word-vector file");
  ev_cmd->add_option("--endpoint", ev.endpoint, "Embedding service URL");
  ev_cmd->add_flag("--options-similarity", ev.options_similarity, "Score options against the answer");
  ev_cmd->add_option("--out", ev.out, "Report JSON file")->required();
  ev_cmd->add_option("--timeout-ms", ev.timeout_ms, "Request timeout");

  PplArgs ppl;
  auto* ppl_cmd = app.add_subcommand("ppl", "Sliding-window perplexity of a text file");
  ppl_cmd->add_option("--text", ppl.text, "Text file")->required();
  ppl_cmd->add_option("--endpoint", ppl.endpoint, "Scoring service URL");
  ppl_cmd->add_option("--window", ppl.window, "Window in tokens");
  ppl_cmd->add_option("--stride", ppl.stride, "Stride in tokens");
  ppl_cmd->add_option("--chunk-chars", ppl.chunk_chars, "Characters per tokenization request");
  ppl_cmd->add_option("--concurrency", ppl.concurrency, "Requests in flight");
  ppl_cmd->add_option("--timeout-ms", ppl.timeout_ms, "Request timeout");
  ppl_cmd->add_option("--retry-backoff-ms", ppl.retry_backoff_ms, "Initial retry backoff");
  ppl_cmd->add_option("--model", ppl.model, "Model name sent to the service");

  TrainConfigArgs tc;
  std::string tc_in;
  auto* tc_cmd = app.add_subcommand("train-config", "Fine-tuning configuration");
  tc_cmd->require_subcommand(1);
  auto* emit_cmd = tc_cmd->add_subcommand("emit", "Write the fine-tuning config as JSON");
  emit_cmd->add_option("--out", tc.out, "Output file")->required();
  emit_cmd->add_option("--base-model", tc.base_model);
  emit_cmd->add_option("--batch-size", tc.batch_size);
  emit_cmd->add_option("--gradient-accumulation", tc.gradient_accumulation);
  emit_cmd->add_option("--max-grad-norm", tc.max_grad_norm);
  emit_cmd->add_option("--precision", tc.precision, "fp16 or fp32");
  emit_cmd->add_option("--max-seq-len", tc.max_seq_len);
  emit_cmd->add_option("--epochs", tc.epochs);
  emit_cmd->add_option("--eval-interval-steps", tc.eval_interval_steps);
  emit_cmd->add_option("--lr-schedule", tc.lr_schedule, "cosine, constant or linear");
  emit_cmd->add_option("--optimizer", tc.optimizer);
  emit_cmd->add_option("--quantized-bits", tc.quantized_bits);
  emit_cmd->add_option("--full-bits", tc.full_bits);
  emit_cmd->add_option("--quant-type", tc.quant_type);
  emit_cmd->add_option("--compute-dtype", tc.compute_dtype);
  emit_cmd->add_option("--padding-side", tc.padding_side, "right or left");
  emit_cmd->add_option("--learning-rate", tc.learning_rate);
  emit_cmd->add_option("--adapter-method", tc.adapter_method);
  emit_cmd->add_option("--adapter-rank", tc.adapter_rank);
  emit_cmd->add_option("--adapter-alpha", tc.adapter_alpha);
  auto* tcv_cmd = tc_cmd->add_subcommand("validate", "Check a config file");
  tcv_cmd->add_option("--in", tc_in, "Config file")->required();

  LossArgs loss;
  auto* loss_cmd = app.add_subcommand("loss-summary", "Smooth a step,loss CSV and report whether loss decreased");
  loss_cmd->add_option("--log", loss.log, "step,loss CSV")->required();
  loss_cmd->add_option("--window", loss.window, "Moving-average window");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    app.exit(e, out, err);
    return kOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kUsage;
  }

  try {
    if (*pre_cmd) return cmd_preprocess(pre, out);
    if (*stats_cmd) return cmd_stats(stats, out, err);
    if (*pb_cmd) return cmd_prompt_build(pb, out);
    if (*gen_cmd) return cmd_generate(gen, out, err);
    if (*parse_cmd) return cmd_parse(parse, out);
    if (*ev_cmd) return cmd_evaluate(ev, out);
    if (*ppl_cmd) return cmd_ppl(ppl, out);
    if (*emit_cmd) return cmd_train_config_emit(tc, out, err);
    if (*tcv_cmd) return cmd_train_config_validate(tc_in, out, err);
    if (*loss_cmd) return cmd_loss_summary(loss, out);
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kEnvironment;
  } catch (const NetworkError& e) {
    err << "error: " << e.what() << "\n";
    return kEnvironment;
  } catch (const HttpStatusError& e) {
    err << "error: " << e.what() << "\n";
    return kEnvironment;
  } catch (const CapabilityError& e) {
    err << "error: " << e.what() << "\n";
    return kEnvironment;
  } catch (const ProtocolError& e) {
    err << "error: " << e.what() << "\n";
    return kEnvironment;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kEnvironment;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kEnvironment;
  }
  return kUsage;
}

}  // namespace aqag::cli
