#pragma once

// Prompt construction for question generation and the Llama-2 chat wire
// format.

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "aqag/corpus.hpp"
#include "aqag/detail/prompt_texts.hpp"
#include "aqag/detail/text.hpp"
#include "aqag/error.hpp"
#include "aqag/label.hpp"

namespace aqag {

enum class PromptStyle { FillInBlank, OpenEnded };

inline std::string_view to_string(PromptStyle s) noexcept {
  return s == PromptStyle::FillInBlank ? "fib" : "open";
}

// Accepts "fib", "fill-in-blank", "open", "open-ended".
inline std::optional<PromptStyle> parse_prompt_style(std::string_view s) {
  const auto f = detail::fold(s);
  if (f == "fib" || f == "fill-in-blank" || f == "fill_in_blank") return PromptStyle::FillInBlank;
  if (f == "open" || f == "open-ended" || f == "open_ended") return PromptStyle::OpenEnded;
  return std::nullopt;
}

inline QuestionType question_type_for(PromptStyle s) noexcept {
  return s == PromptStyle::FillInBlank ? QuestionType::FillInBlank : QuestionType::Interrogative;
}

inline constexpr std::string_view kSysOpen = "<<SYS>>\n";
inline constexpr std::string_view kSysClose = "\n<</SYS>>\n\n";
inline constexpr std::string_view kInstOpen = "<s>[INST] ";
inline constexpr std::string_view kInstClose = " [/INST]";

struct ChatPrompt {
  std::string system_text;
  std::string user_text;
  PromptStyle style = PromptStyle::OpenEnded;

  bool operator==(const ChatPrompt&) const = default;
};

// Throws InvalidArgument unless the prompt can be rendered reversibly:
// user_text is non-empty and does not open with a <<SYS>> block, and
// system_text does not contain the <</SYS>> marker.
inline void validate(const ChatPrompt& p) {
  if (p.user_text.empty()) throw InvalidArgument("chat prompt has empty user text");
  if (p.system_text.find("<</SYS>>") != std::string::npos)
    throw InvalidArgument("system text must not contain <</SYS>>");
  if (std::string_view(p.user_text).substr(0, kSysOpen.size()) == kSysOpen)
    throw InvalidArgument("user text must not begin with a <<SYS>> block");
}

inline std::string_view default_system_prompt(PromptStyle style) noexcept {
  return style == PromptStyle::FillInBlank ? detail::kSystemPromptFillInBlank
                                           : detail::kSystemPromptOpenEnded;
}

struct FewShotExample {
  std::string article;
  std::string question;
  std::array<std::string, 4> options;
  Label answer_label = Label::A;
  std::string answer_text;

  static FewShotExample from_record(const RaceRecord& r) {
    if (!is_complete(r)) throw InvalidArgument("few-shot record " + r.id + " is incomplete");
    FewShotExample ex;
    ex.article = r.article;
    ex.question = r.question;
    for (std::size_t i = 0; i < 4; ++i) ex.options[i] = r.options[i];
    ex.answer_label = *r.answer_label;
    ex.answer_text = ex.options[index_of(ex.answer_label)];
    return ex;
  }
};

// Article block, numbered question, options A) to D), answer line.
inline std::string format_training_example(const FewShotExample& ex) {
  if (ex.answer_text != ex.options[index_of(ex.answer_label)])
    throw InvalidArgument("few-shot answer text does not match its answer label");
  std::string out = "Article:\n";
  out += ex.article;
  out += "\n\n1. ";
  out += ex.question;
  out += '\n';
  for (auto l : kLabels) {
    out += to_char(l);
    out += ") ";
    out += ex.options[index_of(l)];
    out += '\n';
  }
  out += "Answer: ";
  out += to_char(ex.answer_label);
  return out;
}

inline std::string build_training_example(const RaceRecord& record) {
  return format_training_example(FewShotExample::from_record(record));
}

inline constexpr std::size_t kDefaultQuestionCount = 4;
inline constexpr std::size_t kDefaultFewShotCount = 2;

// User text = few-shot examples (input order), the target article, then the
// instruction naming the question count. `system_override` replaces the
// style's default system prompt.
inline ChatPrompt build_generation_prompt(std::string_view article, PromptStyle style,
                                          const std::vector<FewShotExample>& few_shots,
                                          std::size_t question_count = kDefaultQuestionCount,
                                          std::optional<std::string> system_override = std::nullopt) {
  if (detail::is_blank(article)) throw InvalidArgument("generation prompt needs a non-empty article");
  if (question_count == 0) throw InvalidArgument("question count must be at least 1");

  std::string user;
  if (!few_shots.empty()) {
    user += "Here are example questions written for other articles.\n\n";
    for (std::size_t i = 0; i < few_shots.size(); ++i) {
      user += "Example " + std::to_string(i + 1) + ":\n";
      user += format_training_example(few_shots[i]);
      user += "\n\n";
    }
  }
  user += "Article:\n";
  user += article;
  user += "\n\n";

  const std::string_view kind =
      style == PromptStyle::FillInBlank ? "fill in the blank" : "open-ended";
  if (question_count == 1) {
    user += "Write exactly 1 " + std::string(kind) +
            " multiple choice question about the article above, numbered 1, in the format shown.";
  } else {
    const auto n = std::to_string(question_count);
    user += "Write exactly " + n + " " + std::string(kind) +
            " multiple choice questions about the article above, numbered 1 to " + n +
            ", in the format shown.";
  }

  ChatPrompt p;
  p.system_text = system_override ? std::move(*system_override) : std::string(default_system_prompt(style));
  p.user_text = std::move(user);
  p.style = style;
  return p;
}

// `<s>[INST] <<SYS>>\n{system}\n<</SYS>>\n\n{user} [/INST]`; the SYS block is
// omitted when the system text is empty.
inline std::string render_llama_chat(const ChatPrompt& p) {
  validate(p);
  std::string out(kInstOpen);
  if (!p.system_text.empty()) {
    out += kSysOpen;
    out += p.system_text;
    out += kSysClose;
  }
  out += p.user_text;
  out += kInstClose;
  return out;
}

struct ChatTurn {
  std::string system_text;
  std::string user_text;

  bool operator==(const ChatTurn&) const = default;
};

inline ChatTurn unrender_llama_chat(std::string_view text) {
  if (text.substr(0, kInstOpen.size()) != kInstOpen || text.size() < kInstOpen.size() + kInstClose.size() ||
      text.substr(text.size() - kInstClose.size()) != kInstClose)
    throw FormatError("text is not delimited by <s>[INST] ... [/INST]");
  auto body = text.substr(kInstOpen.size(), text.size() - kInstOpen.size() - kInstClose.size());
  ChatTurn turn;
  if (body.substr(0, kSysOpen.size()) == kSysOpen) {
    const auto close = body.find(kSysClose, kSysOpen.size());
    if (close == std::string_view::npos) throw FormatError("unterminated <<SYS>> block");
    turn.system_text = std::string(body.substr(kSysOpen.size(), close - kSysOpen.size()));
    body.remove_prefix(close + kSysClose.size());
  }
  turn.user_text = std::string(body);
  return turn;
}

}  // namespace aqag
