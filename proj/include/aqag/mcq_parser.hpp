#pragma once

// Parser for generated multiple-choice questions.
//
// Grammar (line oriented, keywords case-insensitive):
//   header      := ["Question" | "Q"] digits ("." | ")") [stem]
//   option      := label (")" | "." | ":") text | "(" label ")" text
//   answer      := ["Correct"] "Answer" ":" (label | option text)
//   explanation := "Explanation" ":" text ... up to the next header
// Stem lines continue until the first option line; text lines after an
// option continue that option. Lines before the first header are preamble.

#include <algorithm>
#include <charconv>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "aqag/detail/text.hpp"
#include "aqag/error.hpp"
#include "aqag/label.hpp"

namespace aqag {

struct McqItem {
  std::size_t index = 0;
  std::string stem;
  std::map<Label, std::string> options;
  std::optional<Label> answer_label;
  std::optional<std::string> explanation;
  bool complete = false;

  bool operator==(const McqItem&) const = default;
};

// complete iff stem non-empty, all four options non-empty and an answer label
// naming one of them.
inline bool is_complete(const McqItem& item) noexcept {
  if (detail::is_blank(item.stem) || item.options.size() != 4) return false;
  for (const auto& [label, text] : item.options)
    if (detail::is_blank(text)) return false;
  return item.answer_label && item.options.count(*item.answer_label) == 1;
}

enum class IssueKind {
  Truncated,
  MissingOption,
  MissingAnswer,
  EmptyStem,
  DuplicateOption,
  DuplicateAnswer,
  UnresolvedAnswer,
  AnswerNotInOptions,
  OrphanLine,
  CountMismatch,
  DuplicateStem,
  DuplicateOptionText,
  Incomplete,
};

inline std::string_view to_string(IssueKind k) noexcept {
  switch (k) {
    case IssueKind::Truncated: return "truncated";
    case IssueKind::MissingOption: return "missing_option";
    case IssueKind::MissingAnswer: return "missing_answer";
    case IssueKind::EmptyStem: return "empty_stem";
    case IssueKind::DuplicateOption: return "duplicate_option";
    case IssueKind::DuplicateAnswer: return "duplicate_answer";
    case IssueKind::UnresolvedAnswer: return "unresolved_answer";
    case IssueKind::AnswerNotInOptions: return "answer_not_in_options";
    case IssueKind::OrphanLine: return "orphan_line";
    case IssueKind::CountMismatch: return "count_mismatch";
    case IssueKind::DuplicateStem: return "duplicate_stem";
    case IssueKind::DuplicateOptionText: return "duplicate_option_text";
    case IssueKind::Incomplete: return "incomplete";
  }
  return "unknown";
}

struct ParseIssue {
  std::size_t position = 0;  // byte offset in the parsed text
  IssueKind kind = IssueKind::Incomplete;
  std::string message;
  std::optional<std::size_t> item;  // position in ParseReport::items

  bool operator==(const ParseIssue&) const = default;
};

struct ParseReport {
  std::vector<McqItem> items;
  std::vector<ParseIssue> issues;
  std::size_t consumed_chars = 0;  // end of the last line attributed to an item
};

namespace detail {

inline std::string_view ltrim_ascii(std::string_view s) noexcept {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  return s;
}

inline bool starts_with_ci(std::string_view s, std::string_view prefix) noexcept {
  return s.size() >= prefix.size() && iequals_ascii(s.substr(0, prefix.size()), prefix);
}

inline bool at_separator_end(std::string_view rest) noexcept {
  return rest.empty() || rest.front() == ' ' || rest.front() == '\t';
}

struct HeaderMatch {
  std::size_t index;
  std::string_view stem;
};

inline std::optional<HeaderMatch> match_header(std::string_view line) noexcept {
  auto s = ltrim_ascii(line);
  if (starts_with_ci(s, "question")) {
    s = ltrim_ascii(s.substr(8));
  } else if (!s.empty() && (s.front() == 'Q' || s.front() == 'q') && s.size() > 1 && is_ascii_digit(s[1])) {
    s.remove_prefix(1);
  }
  std::size_t digits = 0;
  while (digits < s.size() && is_ascii_digit(s[digits])) ++digits;
  if (digits == 0 || digits > 9 || digits >= s.size()) return std::nullopt;
  if (s[digits] != '.' && s[digits] != ')') return std::nullopt;
  const auto rest = s.substr(digits + 1);
  if (!at_separator_end(rest)) return std::nullopt;
  std::size_t index = 0;
  std::from_chars(s.data(), s.data() + digits, index);
  return HeaderMatch{index, trim(rest)};
}

struct OptionMatch {
  Label label;
  std::string_view text;
};

inline std::optional<OptionMatch> match_option(std::string_view line) noexcept {
  auto s = ltrim_ascii(line);
  if (s.size() >= 3 && s[0] == '(' && s[2] == ')') {
    if (auto l = label_from_char(s[1]); l && at_separator_end(s.substr(3)))
      return OptionMatch{*l, trim(s.substr(3))};
    return std::nullopt;
  }
  if (s.size() >= 2) {
    if (auto l = label_from_char(s[0]); l && (s[1] == ')' || s[1] == '.' || s[1] == ':') &&
                                        at_separator_end(s.substr(2)))
      return OptionMatch{*l, trim(s.substr(2))};
  }
  return std::nullopt;
}

// Matches `keyword` followed by optional blanks and ':' (ASCII or fullwidth).
inline std::optional<std::string_view> match_keyword(std::string_view line, std::string_view keyword) noexcept {
  auto s = ltrim_ascii(line);
  if (!starts_with_ci(s, keyword)) return std::nullopt;
  s = ltrim_ascii(s.substr(keyword.size()));
  if (!s.empty() && s.front() == ':') return trim(s.substr(1));
  if (s.substr(0, 3) == "\xEF\xBC\x9A") return trim(s.substr(3));
  return std::nullopt;
}

inline std::optional<std::string_view> match_answer(std::string_view line) noexcept {
  auto s = ltrim_ascii(line);
  if (starts_with_ci(s, "correct answer")) s = ltrim_ascii(s.substr(8));
  return match_keyword(s, "answer");
}

// "B", "b", "(B)", "B)", "B.", "B) text" -> B.
inline std::optional<Label> answer_letter(std::string_view v) noexcept {
  if (!v.empty() && v.front() == '(') v.remove_prefix(1);
  if (v.empty()) return std::nullopt;
  const auto l = label_from_char(v[0]);
  if (!l) return std::nullopt;
  if (v.size() == 1) return l;
  const char next = v[1];
  if (next == ')' || next == '.' || next == ':' || next == ' ' || next == '\t' || next == ',') return l;
  return std::nullopt;
}

class McqParser {
 public:
  explicit McqParser(std::string_view text) : text_(text) {}

  ParseReport run() {
    for (const auto& line : split_lines(text_)) feed(line);
    finish_item(/*at_end=*/true);
    return std::move(report_);
  }

 private:
  enum class Phase { Stem, Options, AfterAnswer, Explanation, Skipping };

  struct Open {
    McqItem item;
    std::size_t start = 0;
    Phase phase = Phase::Stem;
    std::optional<Label> last_option;
    std::optional<std::string> answer_text;  // unresolved textual answer
    std::size_t answer_pos = 0;
    bool malformed = false;
  };

  void consume(const Line& line) { report_.consumed_chars = std::max(report_.consumed_chars, line.end); }

  void issue(std::size_t pos, IssueKind kind, std::string message) {
    report_.issues.push_back({pos, kind, std::move(message), std::nullopt});
  }

  void item_issue(std::size_t pos, IssueKind kind, std::string message) {
    report_.issues.push_back({pos, kind, std::move(message), report_.items.size()});
  }

  void malformed(const Line& line, IssueKind kind, std::string message) {
    item_issue(line.offset, kind, std::move(message));
    open_->malformed = true;
    open_->phase = Phase::Skipping;
  }

  void feed(const Line& line) {
    if (auto h = match_header(line.text)) {
      finish_item(false);
      open_.emplace();
      open_->start = line.offset;
      open_->item.index = h->index;
      open_->item.stem = std::string(h->stem);
      consume(line);
      return;
    }

    if (!open_) {
      if (match_option(line.text) || match_answer(line.text) || match_keyword(line.text, "explanation"))
        issue(line.offset, IssueKind::OrphanLine, "question content before any numbered question");
      return;
    }

    auto& o = *open_;
    if (o.phase == Phase::Skipping) {
      consume(line);
      return;
    }
    if (o.phase == Phase::Explanation) {
      *o.item.explanation += '\n';
      *o.item.explanation += line.text;
      consume(line);
      return;
    }
    if (auto e = match_keyword(line.text, "explanation")) {
      o.item.explanation = std::string(*e);
      o.phase = Phase::Explanation;
      consume(line);
      return;
    }
    if (auto a = match_answer(line.text)) {
      consume(line);
      if (o.item.answer_label || o.answer_text) {
        malformed(line, IssueKind::DuplicateAnswer, "more than one answer line");
        return;
      }
      if (auto l = answer_letter(*a)) {
        o.item.answer_label = l;
      } else {
        o.answer_text = std::string(*a);
        o.answer_pos = line.offset;
      }
      o.phase = Phase::AfterAnswer;
      return;
    }
    if (auto opt = match_option(line.text)) {
      consume(line);
      if (o.item.options.count(opt->label)) {
        malformed(line, IssueKind::DuplicateOption,
                  std::string("option ") + to_char(opt->label) + " appears twice");
        return;
      }
      o.item.options[opt->label] = std::string(opt->text);
      o.last_option = opt->label;
      if (o.phase == Phase::Stem) o.phase = Phase::Options;
      return;
    }

    if (is_blank(line.text)) return;
    if (o.phase == Phase::Stem) {
      if (!o.item.stem.empty()) o.item.stem += '\n';
      o.item.stem += trim(line.text);
      consume(line);
    } else if (o.phase == Phase::Options && o.last_option) {
      auto& text = o.item.options[*o.last_option];
      if (!text.empty()) text += '\n';
      text += trim(line.text);
      consume(line);
    }
    // Text after the answer line and before the next header is ignored.
  }

  void finish_item(bool at_end) {
    if (!open_) return;
    auto& o = *open_;
    auto& item = o.item;

    if (item.explanation) {
      item.explanation = std::string(trim(*item.explanation));
      if (item.explanation->empty()) item.explanation.reset();
    }
    if (o.answer_text) {
      const auto wanted = fold(*o.answer_text);
      std::vector<Label> hits;
      for (const auto& [label, text] : item.options)
        if (fold(text) == wanted) hits.push_back(label);
      if (hits.size() == 1) {
        item.answer_label = hits.front();
      } else {
        item_issue(o.answer_pos, IssueKind::UnresolvedAnswer,
                   "answer '" + *o.answer_text + "' matches " + std::to_string(hits.size()) + " options");
      }
    }

    item.complete = !o.malformed && is_complete(item);
    if (!item.complete && !o.malformed) {
      const bool structurally_short = item.options.size() < 4 || (!item.answer_label && !o.answer_text);
      if (at_end && structurally_short) {
        item_issue(o.start, IssueKind::Truncated, "question ends before all options and the answer");
      } else {
        if (detail::is_blank(item.stem)) item_issue(o.start, IssueKind::EmptyStem, "question has no stem");
        std::string missing;
        for (auto l : kLabels) {
          auto it = item.options.find(l);
          if (it == item.options.end() || detail::is_blank(it->second)) missing += to_char(l);
        }
        if (!missing.empty()) item_issue(o.start, IssueKind::MissingOption, "missing option(s) " + missing);
        if (!item.answer_label && !o.answer_text)
          item_issue(o.start, IssueKind::MissingAnswer, "question has no answer line");
        if (item.answer_label && !item.options.count(*item.answer_label))
          item_issue(o.start, IssueKind::AnswerNotInOptions,
                     std::string("answer ") + to_char(*item.answer_label) + " is not among the options");
      }
      // Guarantee at least one issue per incomplete item.
      const auto idx = report_.items.size();
      const bool has_issue = std::any_of(report_.issues.begin(), report_.issues.end(),
                                         [&](const ParseIssue& i) { return i.item == idx; });
      if (!has_issue) item_issue(o.start, IssueKind::Incomplete, "question is incomplete");
    }
    report_.items.push_back(std::move(item));
    open_.reset();
  }

  std::string_view text_;
  ParseReport report_;
  std::optional<Open> open_;
};

}  // namespace detail

// Total: never throws on any input; problems are reported as issues.
inline ParseReport parse_mcq_block(std::string_view text) { return detail::McqParser(text).run(); }

// Option label punctuation used by render_mcq.
enum class OptionStyle { Paren, Dot, Wrapped, LowerParen };

inline constexpr std::array<OptionStyle, 4> kOptionStyles = {OptionStyle::Paren, OptionStyle::Dot,
                                                            OptionStyle::Wrapped, OptionStyle::LowerParen};

inline std::string option_marker(Label l, OptionStyle style) {
  switch (style) {
    case OptionStyle::Dot: return std::string(1, to_char(l)) + ".";
    case OptionStyle::Wrapped: return "(" + std::string(1, to_char(l)) + ")";
    case OptionStyle::LowerParen: return std::string(1, detail::ascii_lower(to_char(l))) + ")";
    case OptionStyle::Paren: break;
  }
  return std::string(1, to_char(l)) + ")";
}

// Canonical text form of a complete item (OptionStyle::Paren is canonical).
inline std::string render_mcq(const McqItem& item, OptionStyle style = OptionStyle::Paren) {
  if (!is_complete(item)) throw InvalidArgument("render_mcq: item " + std::to_string(item.index) + " is incomplete");
  std::string out = std::to_string(item.index) + ". " + item.stem + "\n";
  for (const auto& [label, text] : item.options) out += option_marker(label, style) + " " + text + "\n";
  out += "Answer: ";
  out += to_char(*item.answer_label);
  out += '\n';
  if (item.explanation && !item.explanation->empty()) out += "Explanation: " + *item.explanation + "\n";
  return out;
}

// Batch-level checks on top of the parser's per-item issues.
inline std::vector<ParseIssue> validate_items(const ParseReport& report, std::size_t expected_count) {
  std::vector<ParseIssue> issues;
  const auto& items = report.items;
  if (items.size() != expected_count)
    issues.push_back({0, IssueKind::CountMismatch,
                      "expected " + std::to_string(expected_count) + " questions, parsed " +
                          std::to_string(items.size()),
                      std::nullopt});

  std::map<std::string, std::size_t> seen_stems;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& item = items[i];
    if (!item.complete)
      issues.push_back({0, IssueKind::Incomplete, "question " + std::to_string(item.index) + " is incomplete", i});

    const auto key = detail::fold(item.stem);
    if (!key.empty()) {
      auto [it, inserted] = seen_stems.emplace(key, i);
      if (!inserted)
        issues.push_back({0, IssueKind::DuplicateStem,
                          "question " + std::to_string(item.index) + " repeats the stem of question " +
                              std::to_string(items[it->second].index),
                          i});
    }

    if (item.answer_label) {
      auto ans = item.options.find(*item.answer_label);
      if (ans != item.options.end()) {
        const auto answer_key = detail::fold(ans->second);
        for (const auto& [label, text] : item.options) {
          if (label != *item.answer_label && detail::fold(text) == answer_key) {
            issues.push_back({0, IssueKind::DuplicateOptionText,
                              "question " + std::to_string(item.index) + ": option " + to_char(label) +
                                  " repeats the answer text",
                              i});
          }
        }
      }
    }
  }
  return issues;
}

inline nlohmann::json to_json(const McqItem& item) {
  nlohmann::json options = nlohmann::json::object();
  for (const auto& [label, text] : item.options) options[to_string(label)] = text;
  return {{"index", item.index},
          {"stem", item.stem},
          {"options", options},
          {"answer_label", item.answer_label ? nlohmann::json(to_string(*item.answer_label)) : nlohmann::json()},
          {"explanation", item.explanation ? nlohmann::json(*item.explanation) : nlohmann::json()},
          {"complete", item.complete}};
}

inline McqItem mcq_item_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw FormatError("MCQ item must be a JSON object");
  try {
    McqItem item;
    item.index = j.at("index").get<std::size_t>();
    item.stem = j.at("stem").get<std::string>();
    for (const auto& [key, value] : j.at("options").items()) {
      const auto l = parse_label(key);
      if (!l) throw FormatError("unknown option label '" + key + "'");
      item.options[*l] = value.get<std::string>();
    }
    if (auto it = j.find("answer_label"); it != j.end() && !it->is_null()) {
      item.answer_label = parse_label(it->get<std::string>());
      if (!item.answer_label) throw FormatError("unknown answer label");
    }
    if (auto it = j.find("explanation"); it != j.end() && !it->is_null())
      item.explanation = it->get<std::string>();
    item.complete = is_complete(item);
    return item;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed MCQ item: ") + e.what());
  }
}

inline nlohmann::json to_json(const ParseIssue& issue) {
  nlohmann::json j{{"position", issue.position}, {"kind", to_string(issue.kind)}, {"message", issue.message}};
  j["item"] = issue.item ? nlohmann::json(*issue.item) : nlohmann::json();
  return j;
}

inline nlohmann::json to_json(const ParseReport& report) {
  nlohmann::json items = nlohmann::json::array(), issues = nlohmann::json::array();
  for (const auto& i : report.items) items.push_back(to_json(i));
  for (const auto& i : report.issues) issues.push_back(to_json(i));
  return {{"items", items}, {"issues", issues}, {"consumed_chars", report.consumed_chars}};
}

}  // namespace aqag
