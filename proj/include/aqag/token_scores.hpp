#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "aqag/error.hpp"

namespace aqag {

// A token as echoed back by a scoring service. The first token of a request
// usually has no logprob (nothing to condition on).
struct EchoToken {
  std::string text;
  std::optional<double> logprob;

  bool operator==(const EchoToken&) const = default;
};

struct TokenScore {
  std::string text;
  double logprob = 0.0;  // natural log, <= 0

  bool operator==(const TokenScore&) const = default;
};

// Conditional log-probabilities log P(x_i | x_<i) of a scored text, in order.
class TokenScoreSequence {
 public:
  TokenScoreSequence() = default;

  explicit TokenScoreSequence(std::vector<TokenScore> tokens) : tokens_(std::move(tokens)) {
    for (const auto& t : tokens_) check(t.logprob);
  }

  // Drops tokens without a logprob (the echo-mode sentinel).
  static TokenScoreSequence from_echo(const std::vector<EchoToken>& echoed) {
    std::vector<TokenScore> kept;
    for (const auto& t : echoed)
      if (t.logprob) kept.push_back({t.text, *t.logprob});
    return TokenScoreSequence(std::move(kept));
  }

  static TokenScoreSequence from_logprobs(const std::vector<double>& logprobs) {
    std::vector<TokenScore> tokens;
    tokens.reserve(logprobs.size());
    for (double lp : logprobs) tokens.push_back({{}, lp});
    return TokenScoreSequence(std::move(tokens));
  }

  const std::vector<TokenScore>& tokens() const noexcept { return tokens_; }
  std::size_t size() const noexcept { return tokens_.size(); }
  bool empty() const noexcept { return tokens_.empty(); }

  std::vector<double> logprobs() const {
    std::vector<double> out;
    out.reserve(tokens_.size());
    for (const auto& t : tokens_) out.push_back(t.logprob);
    return out;
  }

  bool operator==(const TokenScoreSequence&) const = default;

 private:
  static void check(double lp) {
    if (!std::isfinite(lp) || lp > 0.0)
      throw InvalidArgument("token logprob must be finite and <= 0, got " + std::to_string(lp));
  }

  std::vector<TokenScore> tokens_;
};

}  // namespace aqag
