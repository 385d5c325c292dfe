#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

namespace aqag {

// Option label of a four-choice question.
enum class Label : unsigned char { A = 0, B = 1, C = 2, D = 3 };

inline constexpr std::array<Label, 4> kLabels = {Label::A, Label::B, Label::C, Label::D};

constexpr std::size_t index_of(Label l) noexcept { return static_cast<std::size_t>(l); }

constexpr char to_char(Label l) noexcept { return static_cast<char>('A' + index_of(l)); }

inline std::string to_string(Label l) { return std::string(1, to_char(l)); }

// Accepts 'A'..'D' in either case.
constexpr std::optional<Label> label_from_char(char c) noexcept {
  if (c >= 'a' && c <= 'd') return static_cast<Label>(c - 'a');
  if (c >= 'A' && c <= 'D') return static_cast<Label>(c - 'A');
  return std::nullopt;
}

// Accepts a single letter, optionally surrounded by whitespace.
inline std::optional<Label> parse_label(std::string_view s) noexcept {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (s.size() != 1) return std::nullopt;
  return label_from_char(s[0]);
}

}  // namespace aqag
