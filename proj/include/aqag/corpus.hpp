#pragma once

// Reading-comprehension corpus ingestion, preprocessing and EDA statistics.

#include <algorithm>
#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "aqag/detail/contractions_data.hpp"
#include "aqag/detail/csv.hpp"
#include "aqag/detail/io.hpp"
#include "aqag/detail/text.hpp"
#include "aqag/error.hpp"
#include "aqag/label.hpp"

namespace aqag {

enum class QuestionType { Interrogative, FillInBlank };

inline std::string_view to_string(QuestionType t) noexcept {
  return t == QuestionType::FillInBlank ? "fill_in_blank" : "interrogative";
}

// One question row. Freshly loaded records may violate the invariants
// (missing options, blank fields); filter_complete() establishes them.
struct RaceRecord {
  std::string id;
  std::string article;
  std::string question;
  std::vector<std::string> options;
  std::optional<Label> answer_label;
  std::string correct_text;                  // set by derive_correct_text
  std::optional<QuestionType> question_type;  // set by split_by_question_type

  bool operator==(const RaceRecord&) const = default;
};

enum class CorpusFormat { Csv, Json };

inline std::optional<CorpusFormat> parse_corpus_format(std::string_view s) {
  if (detail::iequals_ascii(s, "csv")) return CorpusFormat::Csv;
  if (detail::iequals_ascii(s, "json")) return CorpusFormat::Json;
  return std::nullopt;
}

inline constexpr std::array<std::string_view, 8> kCorpusCsvHeader = {
    "id", "article", "question", "optionA", "optionB", "optionC", "optionD", "answer"};

namespace detail {

inline std::optional<Label> parse_answer_cell(std::string_view cell, std::size_t row) {
  if (is_blank(cell)) return std::nullopt;
  if (auto l = parse_label(trim(cell))) return l;
  throw FormatError("unknown answer label '" + std::string(trim(cell)) + "'", row);
}

inline std::string json_text_or_null(const nlohmann::json& j, std::size_t row, const char* what) {
  if (j.is_null()) return {};
  if (!j.is_string()) throw FormatError(std::string(what) + " must be a string", row);
  return j.get<std::string>();
}

}  // namespace detail

// CSV layout: header id,article,question,optionA..optionD,answer followed by
// any number of extra columns (ignored). Every data row yields one record.
inline std::vector<RaceRecord> parse_corpus_csv(std::string_view text) {
  const auto rows = detail::parse_csv(text);
  if (rows.empty()) return {};
  const auto& header = rows.front();
  if (header.size() < kCorpusCsvHeader.size())
    throw FormatError("CSV header must start with id,article,question,optionA,optionB,optionC,optionD,answer");
  for (std::size_t i = 0; i < kCorpusCsvHeader.size(); ++i)
    if (detail::trim(header[i]) != kCorpusCsvHeader[i])
      throw FormatError("unexpected CSV column '" + header[i] + "', expected '" +
                        std::string(kCorpusCsvHeader[i]) + "'");

  std::vector<RaceRecord> out;
  out.reserve(rows.size() - 1);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() != header.size())
      throw FormatError("expected " + std::to_string(header.size()) + " fields, found " +
                            std::to_string(row.size()),
                        r);
    RaceRecord rec;
    rec.id = row[0];
    rec.article = row[1];
    rec.question = row[2];
    rec.options.assign(row.begin() + 3, row.begin() + 7);
    rec.answer_label = detail::parse_answer_cell(row[7], r);
    out.push_back(std::move(rec));
  }
  return out;
}

// JSON layout: an array of passages (or one passage object), each
// {id, article, questions[], options[][], answers[]}, flattened to one
// record per question index. Flattened ids are "<id>/<n>" with n 1-based.
// Error rows are 1-based passage positions.
inline std::vector<RaceRecord> parse_corpus_json(std::string_view text) {
  if (detail::is_blank(text)) return {};
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("invalid JSON: ") + e.what());
  }
  if (doc.is_object()) doc = nlohmann::json::array({std::move(doc)});
  if (!doc.is_array()) throw FormatError("JSON corpus must be an array of passage objects");

  std::vector<RaceRecord> out;
  for (std::size_t p = 0; p < doc.size(); ++p) {
    const std::size_t row = p + 1;
    const auto& obj = doc[p];
    if (!obj.is_object()) throw FormatError("passage is not an object", row);
    auto field = [&](const char* key) -> const nlohmann::json& {
      static const nlohmann::json null_value;
      auto it = obj.find(key);
      return it == obj.end() ? null_value : *it;
    };
    const auto id = detail::json_text_or_null(field("id"), row, "id");
    const auto article = detail::json_text_or_null(field("article"), row, "article");
    const auto& questions = field("questions");
    const auto& options = field("options");
    const auto& answers = field("answers");
    if (!questions.is_array() || !options.is_array() || !answers.is_array())
      throw FormatError("questions, options and answers must be arrays", row);
    if (questions.size() != options.size() || questions.size() != answers.size())
      throw FormatError("questions, options and answers differ in length", row);

    for (std::size_t q = 0; q < questions.size(); ++q) {
      RaceRecord rec;
      rec.id = id + "/" + std::to_string(q + 1);
      rec.article = article;
      rec.question = detail::json_text_or_null(questions[q], row, "question");
      if (!options[q].is_array()) throw FormatError("options entry must be an array", row);
      for (const auto& o : options[q]) rec.options.push_back(detail::json_text_or_null(o, row, "option"));
      const auto answer = detail::json_text_or_null(answers[q], row, "answer");
      rec.answer_label = detail::parse_answer_cell(answer, row);
      out.push_back(std::move(rec));
    }
  }
  return out;
}

inline std::vector<RaceRecord> load_corpus(const std::filesystem::path& path, CorpusFormat format) {
  const auto text = detail::read_file(path);
  return format == CorpusFormat::Csv ? parse_corpus_csv(text) : parse_corpus_json(text);
}

// Format from the file extension (.json -> Json, anything else -> Csv).
inline CorpusFormat guess_corpus_format(const std::filesystem::path& path) {
  return detail::iequals_ascii(path.extension().string(), ".json") ? CorpusFormat::Json
                                                                  : CorpusFormat::Csv;
}

// Serializes in the corpus CSV layout plus the derived `correct` and
// `question_type` columns.
inline std::string format_corpus_csv(const std::vector<RaceRecord>& records) {
  std::vector<std::string> header(kCorpusCsvHeader.begin(), kCorpusCsvHeader.end());
  header.emplace_back("correct");
  header.emplace_back("question_type");
  std::string out = detail::format_csv_row(header);
  for (const auto& r : records) {
    std::vector<std::string> row{r.id, r.article, r.question};
    for (std::size_t i = 0; i < 4; ++i) row.push_back(i < r.options.size() ? r.options[i] : "");
    row.push_back(r.answer_label ? to_string(*r.answer_label) : "");
    row.push_back(r.correct_text);
    row.emplace_back(r.question_type ? to_string(*r.question_type) : "");
    out += detail::format_csv_row(row);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Contractions

// Contraction -> expansion table. Keys are stored lowercase with ASCII
// apostrophes; U+2019 in the input is treated as an apostrophe.
class ContractionTable {
 public:
  ContractionTable() = default;

  explicit ContractionTable(std::vector<std::pair<std::string, std::string>> entries) {
    for (auto& [k, v] : entries) add(std::move(k), std::move(v));
  }

  static const ContractionTable& builtin() {
    static const ContractionTable table = [] {
      ContractionTable t;
      for (const auto& [k, v] : detail::kContractions) t.add(std::string(k), std::string(v));
      return t;
    }();
    return table;
  }

  // Tab-separated "key<TAB>expansion" lines; '#' starts a comment line.
  static ContractionTable parse(std::string_view text) {
    ContractionTable t;
    std::size_t n = 0;
    for (const auto& line : detail::split_lines(text)) {
      ++n;
      if (detail::is_blank(line.text) || line.text.front() == '#') continue;
      const auto tab = line.text.find('\t');
      if (tab == std::string_view::npos) throw FormatError("contraction line lacks a tab", n);
      auto key = detail::trim(line.text.substr(0, tab));
      auto value = detail::trim(line.text.substr(tab + 1));
      if (key.empty() || value.empty()) throw FormatError("empty contraction entry", n);
      if (value.find('\'') != std::string_view::npos)
        throw FormatError("expansion must not contain an apostrophe", n);
      t.add(std::string(key), std::string(value));
    }
    return t;
  }

  static ContractionTable load(const std::filesystem::path& path) {
    return parse(detail::read_file(path));
  }

  const std::vector<std::pair<std::string, std::string>>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }

  // Replaces every table key found on word boundaries. The first letter of
  // the expansion mirrors the case of the matched text's first letter.
  std::string expand(std::string_view text) const {
    // Each replacement removes at least one apostrophe, so repeated passes
    // terminate; a second pass catches keys formed across a replacement
    // boundary (e.g. "ma'" + "am not").
    std::string current(text);
    for (;;) {
      bool changed = false;
      std::string next = expand_once(current, changed);
      if (!changed) return current;
      current = std::move(next);
    }
  }

 private:
  void add(std::string key, std::string value) {
    key = detail::to_lower_ascii(key);
    entries_.emplace_back(key, std::move(value));
    std::stable_sort(entries_.begin(), entries_.end(),
                     [](const auto& a, const auto& b) { return a.first.size() > b.first.size(); });
  }

  static bool is_word_code_point(char32_t c) noexcept {
    if (c < 0x80) return detail::is_ascii_alnum(static_cast<char>(c));
    // Latin-1 punctuation/space and General Punctuation are not word chars.
    if (c <= 0xBF) return false;
    if (c >= 0x2000 && c <= 0x206F) return false;
    return true;
  }

  static bool word_before(std::string_view s, std::size_t pos) noexcept {
    if (pos == 0) return false;
    std::size_t p = pos - 1;
    while (p > 0 && (static_cast<unsigned char>(s[p]) & 0xC0) == 0x80) --p;
    return is_word_code_point(detail::decode_utf8(s, p).value);
  }

  static bool word_at(std::string_view s, std::size_t pos) noexcept {
    if (pos >= s.size()) return false;
    return is_word_code_point(detail::decode_utf8(s, pos).value);
  }

  // Matches `key` at `pos`; returns the matched byte length or 0.
  static std::size_t match_at(std::string_view s, std::size_t pos, std::string_view key) noexcept {
    std::size_t i = pos;
    for (char k : key) {
      if (i >= s.size()) return 0;
      if (k == '\'') {
        if (s[i] == '\'') {
          ++i;
        } else if (s.substr(i, 3) == "\xE2\x80\x99") {
          i += 3;
        } else {
          return 0;
        }
      } else {
        if (detail::ascii_lower(s[i]) != k) return 0;
        ++i;
      }
    }
    return i - pos;
  }

  std::string expand_once(std::string_view s, bool& changed) const {
    std::string out;
    out.reserve(s.size() + s.size() / 8);
    std::size_t i = 0;
    while (i < s.size()) {
      if (!word_before(s, i)) {
        bool replaced = false;
        for (const auto& [key, value] : entries_) {
          const std::size_t len = match_at(s, i, key);
          if (len == 0 || word_at(s, i + len)) continue;
          std::string expansion = value;
          // Mirror the case of the first letter of the match.
          const std::size_t first = s[i] == '\'' ? i + 1 : i;
          if (first < s.size() && s[first] >= 'A' && s[first] <= 'Z' && !expansion.empty())
            expansion[0] = detail::ascii_upper(expansion[0]);
          out += expansion;
          i += len;
          replaced = changed = true;
          break;
        }
        if (replaced) continue;
      }
      out.push_back(s[i]);
      ++i;
    }
    return out;
  }

  std::vector<std::pair<std::string, std::string>> entries_;
};

inline std::string expand_contractions(std::string_view text,
                                       const ContractionTable& table = ContractionTable::builtin()) {
  return table.expand(text);
}

// ---------------------------------------------------------------------------
// Filtering and derived fields

inline bool is_complete(const RaceRecord& r) noexcept {
  if (detail::is_blank(r.article) || detail::is_blank(r.question) || !r.answer_label) return false;
  if (r.options.size() != 4) return false;
  return std::none_of(r.options.begin(), r.options.end(),
                      [](const std::string& o) { return detail::is_blank(o); });
}

struct FilterResult {
  std::vector<RaceRecord> kept;
  std::size_t dropped_count = 0;
};

// Drops records with a null article/question/answer or without exactly four
// non-null options. Blank strings count as null.
inline FilterResult filter_complete(std::vector<RaceRecord> records) {
  FilterResult result;
  for (auto& r : records) {
    if (is_complete(r))
      result.kept.push_back(std::move(r));
    else
      ++result.dropped_count;
  }
  return result;
}

inline RaceRecord derive_correct_text(RaceRecord record) {
  if (!record.answer_label || index_of(*record.answer_label) >= record.options.size())
    throw InvalidArgument("record " + record.id + " has no resolvable answer");
  record.correct_text = record.options[index_of(*record.answer_label)];
  return record;
}

// A blank placeholder is a run of two or more '_' or '-' characters.
inline bool has_blank_placeholder(std::string_view question) noexcept {
  std::size_t run = 0;
  for (char c : question) {
    run = (c == '_' || c == '-') ? run + 1 : 0;
    if (run >= 2) return true;
  }
  return false;
}

inline QuestionType detect_question_type(std::string_view question) noexcept {
  return has_blank_placeholder(question) ? QuestionType::FillInBlank : QuestionType::Interrogative;
}

struct QuestionTypeSplit {
  std::vector<RaceRecord> interrogative;
  std::vector<RaceRecord> fill_in_blank;
};

inline QuestionTypeSplit split_by_question_type(std::vector<RaceRecord> records) {
  QuestionTypeSplit split;
  for (auto& r : records) {
    r.question_type = detect_question_type(r.question);
    (*r.question_type == QuestionType::FillInBlank ? split.fill_in_blank : split.interrogative)
        .push_back(std::move(r));
  }
  return split;
}

// A passage and the rows that ask about it.
struct ArticleGroup {
  std::string id;
  std::string text;
  std::vector<std::size_t> records;  // indices into the source list
};

// Groups rows by article text, in order of first appearance. The group id is
// the first row's id without its "/<n>" question suffix.
inline std::vector<ArticleGroup> group_articles(const std::vector<RaceRecord>& records) {
  std::vector<ArticleGroup> groups;
  std::map<std::string, std::size_t, std::less<>> by_text;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    auto [it, inserted] = by_text.emplace(r.article, groups.size());
    if (inserted) {
      const auto slash = r.id.rfind('/');
      groups.push_back({slash == std::string::npos ? r.id : r.id.substr(0, slash), r.article, {}});
    }
    groups[it->second].records.push_back(i);
  }
  return groups;
}

// ---------------------------------------------------------------------------
// EDA

struct EdaReport {
  std::size_t record_count = 0;
  double avg_article_words = 0.0;
  double avg_question_words = 0.0;
  std::map<Label, double> avg_option_chars;  // per label, in code points
  double avg_option_chars_overall = 0.0;
  std::map<Label, double> correct_label_proportions;

  bool operator==(const EdaReport&) const = default;
};

// Words are whitespace-separated tokens; option lengths are UTF-8 code
// points. Every label appears in the maps, with 0 when unused.
inline EdaReport corpus_stats(const std::vector<RaceRecord>& records) {
  if (records.empty()) throw InvalidArgument("corpus_stats: empty corpus");
  std::size_t article_words = 0, question_words = 0, option_chars_all = 0, option_count_all = 0;
  std::array<std::size_t, 4> option_chars{}, option_counts{}, answers{};
  for (const auto& r : records) {
    if (!r.answer_label) throw InvalidArgument("corpus_stats: record " + r.id + " has no answer");
    article_words += detail::count_words(r.article);
    question_words += detail::count_words(r.question);
    for (std::size_t i = 0; i < r.options.size() && i < 4; ++i) {
      const auto chars = detail::count_code_points(r.options[i]);
      option_chars[i] += chars;
      ++option_counts[i];
      option_chars_all += chars;
      ++option_count_all;
    }
    ++answers[index_of(*r.answer_label)];
  }
  const auto n = static_cast<double>(records.size());
  EdaReport rep;
  rep.record_count = records.size();
  rep.avg_article_words = static_cast<double>(article_words) / n;
  rep.avg_question_words = static_cast<double>(question_words) / n;
  rep.avg_option_chars_overall =
      option_count_all ? static_cast<double>(option_chars_all) / static_cast<double>(option_count_all) : 0.0;
  for (auto l : kLabels) {
    const auto i = index_of(l);
    rep.avg_option_chars[l] =
        option_counts[i] ? static_cast<double>(option_chars[i]) / static_cast<double>(option_counts[i]) : 0.0;
    rep.correct_label_proportions[l] = static_cast<double>(answers[i]) / n;
  }
  return rep;
}

inline nlohmann::json to_json(const EdaReport& r) {
  nlohmann::json j;
  j["record_count"] = r.record_count;
  j["avg_article_words"] = r.avg_article_words;
  j["avg_question_words"] = r.avg_question_words;
  j["avg_option_chars"] = r.avg_option_chars_overall;
  for (auto l : kLabels) {
    j["avg_option_chars_" + to_string(l)] = r.avg_option_chars.at(l);
    j["proportion_" + to_string(l)] = r.correct_label_proportions.at(l);
  }
  return j;
}

}  // namespace aqag
