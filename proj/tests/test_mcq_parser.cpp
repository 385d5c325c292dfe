#include <gtest/gtest.h>

#include <random>
#include <set>

#include "aqag/mcq_parser.hpp"
#include "support/paths.hpp"
#include "support/random_items.hpp"

using namespace aqag;
using aqag::testing::golden;
using aqag::testing::slurp;

namespace {

bool has_issue(const std::vector<ParseIssue>& issues, IssueKind kind) {
  for (const auto& i : issues)
    if (i.kind == kind) return true;
  return false;
}

// Every incomplete item has an issue pointing at it; consumption is bounded.
void expect_report_invariants(const ParseReport& r, std::size_t input_size) {
  EXPECT_LE(r.consumed_chars, input_size);
  for (std::size_t i = 0; i < r.items.size(); ++i) {
    const auto& item = r.items[i];
    EXPECT_EQ(item.complete, is_complete(item));
    if (!item.complete) {
      bool found = false;
      for (const auto& issue : r.issues) found = found || issue.item == i;
      EXPECT_TRUE(found) << "item " << i << " is incomplete without an issue";
    }
  }
  for (const auto& issue : r.issues) {
    EXPECT_LE(issue.position, input_size);
    if (issue.item) {
      EXPECT_LT(*issue.item, r.items.size());
    }
  }
}

McqItem festival_item() {
  McqItem item;
  item.index = 2;
  item.stem = "Which city hosts the festival?";
  item.options = {{Label::A, "Paris"}, {Label::B, "Rome"}, {Label::C, "Oslo"}, {Label::D, "Lima"}};
  item.answer_label = Label::C;
  item.explanation = "The article names Oslo.";
  item.complete = true;
  return item;
}

}  // namespace

TEST(Parse, CanonicalBlock) {
  const auto r = parse_mcq_block("1. What is X?\nA) p\nB) q\nC) r\nD) s\nAnswer: B\nExplanation: because.");
  ASSERT_EQ(r.items.size(), 1u);
  const auto& item = r.items[0];
  EXPECT_TRUE(item.complete);
  EXPECT_EQ(item.index, 1u);
  EXPECT_EQ(item.stem, "What is X?");
  EXPECT_EQ(item.answer_label, Label::B);
  EXPECT_EQ(item.options.at(Label::D), "s");
  EXPECT_EQ(item.explanation, "because.");
  EXPECT_TRUE(r.issues.empty());
}

TEST(Parse, EmptyText) {
  const auto r = parse_mcq_block("");
  EXPECT_TRUE(r.items.empty());
  EXPECT_TRUE(r.issues.empty());
  EXPECT_EQ(r.consumed_chars, 0u);
}

TEST(Parse, TruncatedFinalItem) {
  const auto r = parse_mcq_block("1. What is X?\nA) p\nB) q\nC) r");
  ASSERT_EQ(r.items.size(), 1u);
  EXPECT_FALSE(r.items[0].complete);
  EXPECT_TRUE(has_issue(r.issues, IssueKind::Truncated));
  expect_report_invariants(r, 30);
}

TEST(Parse, LabelStylesNormalize) {
  for (auto style : kOptionStyles) {
    std::string text = "1. Q?\n";
    for (auto l : kLabels) text += option_marker(l, style) + " opt" + to_string(l) + "\n";
    text += "answer: c\n";
    const auto r = parse_mcq_block(text);
    ASSERT_EQ(r.items.size(), 1u) << text;
    EXPECT_TRUE(r.items[0].complete) << text;
    for (auto l : kLabels) EXPECT_EQ(r.items[0].options.at(l), "opt" + to_string(l));
    EXPECT_EQ(r.items[0].answer_label, Label::C);
  }
  const auto colon = parse_mcq_block("1) Q?\nA: w\nB: x\nC: y\nD: z\nANSWER : (d)\n");
  ASSERT_EQ(colon.items.size(), 1u);
  EXPECT_TRUE(colon.items[0].complete);
  EXPECT_EQ(colon.items[0].answer_label, Label::D);
}

TEST(Parse, WrappedStemAndMultilineExplanation) {
  const auto r = parse_mcq_block(
      "Here are the questions:\n\n"
      "Question 1: ignored header form\n"
      "1. The writer says that\nthe town is ______.\nA) big\nB) small\nC) new\nD) old\nAnswer: B\n"
      "Explanation: line one\nline two\n\n"
      "2. Next?\nA) a\nB) b\nC) c\nD) d\nAnswer: A\n");
  ASSERT_EQ(r.items.size(), 2u);
  EXPECT_EQ(r.items[0].stem, "The writer says that\nthe town is ______.");
  EXPECT_EQ(r.items[0].explanation, "line one\nline two");
  EXPECT_TRUE(r.items[1].complete);
}

TEST(Parse, AnswerAsOptionText) {
  const auto ok = parse_mcq_block("1. Q?\nA) red\nB) green\nC) blue\nD) black\nAnswer: Blue\n");
  ASSERT_EQ(ok.items.size(), 1u);
  EXPECT_EQ(ok.items[0].answer_label, Label::C);
  EXPECT_TRUE(ok.items[0].complete);

  const auto ambiguous = parse_mcq_block("1. Q?\nA) red\nB) red\nC) blue\nD) black\nAnswer: red\n");
  ASSERT_EQ(ambiguous.items.size(), 1u);
  EXPECT_FALSE(ambiguous.items[0].answer_label);
  EXPECT_TRUE(has_issue(ambiguous.issues, IssueKind::UnresolvedAnswer));

  const auto none = parse_mcq_block("1. Q?\nA) red\nB) green\nC) blue\nD) black\nAnswer: purple\n");
  EXPECT_FALSE(none.items[0].answer_label);
  EXPECT_TRUE(has_issue(none.issues, IssueKind::UnresolvedAnswer));
}

TEST(Parse, RecoversAfterMalformedItem) {
  const auto r = parse_mcq_block(
      "1. Broken?\nA) a\nA) again\nB) b\nAnswer: A\n"
      "2. Fine?\nA) a\nB) b\nC) c\nD) d\nAnswer: D\n");
  ASSERT_EQ(r.items.size(), 2u);
  EXPECT_FALSE(r.items[0].complete);
  EXPECT_TRUE(has_issue(r.issues, IssueKind::DuplicateOption));
  EXPECT_TRUE(r.items[1].complete);
  expect_report_invariants(r, 1000);
}

TEST(Parse, MissingPiecesAreReported) {
  const auto no_answer = parse_mcq_block("1. Q?\nA) a\nB) b\nC) c\nD) d\n\n2. R?\nA) a\nB) b\nC) c\nD) d\nAnswer: A\n");
  ASSERT_EQ(no_answer.items.size(), 2u);
  EXPECT_FALSE(no_answer.items[0].complete);
  EXPECT_TRUE(has_issue(no_answer.issues, IssueKind::MissingAnswer));

  const auto missing_option = parse_mcq_block("1. Q?\nA) a\nB) b\nD) d\nAnswer: A\n\n2. R?\n");
  EXPECT_TRUE(has_issue(missing_option.issues, IssueKind::MissingOption));

  const auto empty_stem = parse_mcq_block("1.\nA) a\nB) b\nC) c\nD) d\nAnswer: A\n");
  EXPECT_TRUE(has_issue(empty_stem.issues, IssueKind::EmptyStem));

  const auto orphan = parse_mcq_block("A) floating\n1. Q?\nA) a\nB) b\nC) c\nD) d\nAnswer: A\n");
  EXPECT_TRUE(has_issue(orphan.issues, IssueKind::OrphanLine));
  EXPECT_TRUE(orphan.items.at(0).complete);
}

TEST(Render, Golden) {
  EXPECT_EQ(render_mcq(festival_item()), slurp(golden("render_mcq.txt")));
}

TEST(Render, FixedPointAndRejection) {
  const auto once = render_mcq(festival_item());
  const auto r = parse_mcq_block(once);
  ASSERT_EQ(r.items.size(), 1u);
  EXPECT_EQ(render_mcq(r.items[0]), once);

  auto missing = festival_item();
  missing.options.erase(Label::D);
  missing.complete = false;
  EXPECT_THROW(render_mcq(missing), InvalidArgument);
}

TEST(RoundTrip, RandomItemsAllStyles) {
  std::mt19937 rng(2024);
  for (int i = 0; i < 400; ++i) {
    const auto item = aqag::testing::random_complete_item(rng, 1 + rng() % 20);
    for (auto style : kOptionStyles) {
      const auto text = render_mcq(item, style);
      const auto r = parse_mcq_block(text);
      ASSERT_EQ(r.items.size(), 1u) << text;
      EXPECT_EQ(r.items[0], item) << text;
      EXPECT_TRUE(r.issues.empty()) << text;
      EXPECT_EQ(r.consumed_chars, text.size());
    }
  }
}

TEST(RoundTrip, ConcatenationParsesToConcatenation) {
  std::mt19937 rng(99);
  for (int i = 0; i < 200; ++i) {
    std::vector<McqItem> a, b;
    for (std::size_t k = 1; k <= 1 + rng() % 3; ++k) a.push_back(aqag::testing::random_complete_item(rng, k));
    for (std::size_t k = 1; k <= 1 + rng() % 3; ++k) b.push_back(aqag::testing::random_complete_item(rng, k + 3));
    std::string ta, tb;
    for (const auto& x : a) ta += render_mcq(x);
    for (const auto& x : b) tb += render_mcq(x);
    auto expected = parse_mcq_block(ta).items;
    const auto rb = parse_mcq_block(tb).items;
    expected.insert(expected.end(), rb.begin(), rb.end());
    EXPECT_EQ(parse_mcq_block(ta + tb).items, expected);
  }
}

TEST(Fuzz, RandomBytesNeverBreakInvariants) {
  std::mt19937 rng(1);
  const std::string alphabet = "1234.)(:ABCDabcd \n\r\tAnswerExplanation\xef\xbc\x9a\xff";
  for (int i = 0; i < 3000; ++i) {
    std::string s(rng() % 300, '\0');
    for (auto& c : s) c = rng() % 3 ? alphabet[rng() % alphabet.size()] : static_cast<char>(rng() % 256);
    const auto r = parse_mcq_block(s);
    expect_report_invariants(r, s.size());
  }
}

TEST(Validate, Examples) {
  std::mt19937 rng(8);
  ParseReport four;
  for (std::size_t i = 1; i <= 4; ++i) {
    auto item = festival_item();
    item.index = i;
    item.stem = "Distinct question " + std::to_string(i) + "?";
    four.items.push_back(item);
  }
  EXPECT_TRUE(validate_items(four, 4).empty());

  auto three = four;
  three.items.pop_back();
  const auto mismatch = validate_items(three, 4);
  ASSERT_EQ(mismatch.size(), 1u);
  EXPECT_EQ(mismatch[0].kind, IssueKind::CountMismatch);

  auto dup = four;
  dup.items[3].stem = "  DISTINCT question 1?";
  EXPECT_TRUE(has_issue(validate_items(dup, 4), IssueKind::DuplicateStem));

  auto same_text = four;
  same_text.items[0].options[Label::A] = "oslo";
  EXPECT_TRUE(has_issue(validate_items(same_text, 4), IssueKind::DuplicateOptionText));

  auto incomplete = four;
  incomplete.items[1].answer_label.reset();
  incomplete.items[1].complete = false;
  EXPECT_TRUE(has_issue(validate_items(incomplete, 4), IssueKind::Incomplete));
}

TEST(Json, ItemRoundTrip) {
  const auto item = festival_item();
  EXPECT_EQ(mcq_item_from_json(to_json(item)), item);
  const auto j = to_json(item);
  EXPECT_EQ(j["answer_label"], "C");
  EXPECT_EQ(j["options"]["B"], "Rome");
  EXPECT_THROW(mcq_item_from_json(nlohmann::json::parse(R"({"index":1})")), FormatError);
}
