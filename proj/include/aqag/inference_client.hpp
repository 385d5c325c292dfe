#pragma once

// HTTP client for a completions-style inference service: generation,
// echo-mode token scoring and embeddings.
//
// Wire contract (POST <base>/v1/completions):
//   request  {prompt, max_tokens, temperature, stop?, logprobs?, echo, seed?, model?}
//   response {choices:[{text, finish_reason, logprobs?:{tokens, token_logprobs}}],
//             usage?:{prompt_tokens, completion_tokens}}
// Embeddings (POST <base>/v1/embeddings): {input, model?} -> {data:[{embedding}]}

#include <chrono>
#include <cmath>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "aqag/error.hpp"
#include "aqag/token_scores.hpp"

namespace aqag {

struct GenerationParams {
  std::size_t max_new_tokens = 512;
  double temperature = 0.7;
  std::vector<std::string> stop_sequences;
  std::optional<long long> seed;

  bool operator==(const GenerationParams&) const = default;
};

inline void validate(const GenerationParams& p) {
  if (p.max_new_tokens < 1) throw InvalidArgument("max_new_tokens must be >= 1");
  if (!std::isfinite(p.temperature) || p.temperature < 0.0) throw InvalidArgument("temperature must be >= 0");
}

inline nlohmann::json to_json(const GenerationParams& p) {
  nlohmann::json j{{"max_new_tokens", p.max_new_tokens}, {"temperature", p.temperature},
                   {"stop_sequences", p.stop_sequences}};
  j["seed"] = p.seed ? nlohmann::json(*p.seed) : nlohmann::json();
  return j;
}

enum class FinishReason { Stop, Length, Error };

inline std::string_view to_string(FinishReason r) noexcept {
  switch (r) {
    case FinishReason::Stop: return "stop";
    case FinishReason::Length: return "length";
    case FinishReason::Error: break;
  }
  return "error";
}

struct Usage {
  std::size_t prompt_tokens = 0;
  std::size_t completion_tokens = 0;

  bool operator==(const Usage&) const = default;
};

struct GenerationResponse {
  std::string text;
  FinishReason finish_reason = FinishReason::Stop;
  Usage usage;
};

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{500};  // doubles after each failure
};

struct ClientOptions {
  std::chrono::milliseconds timeout{60000};
  RetryPolicy retry;
  std::size_t max_in_flight = 4;
  std::optional<std::string> api_key;
  std::optional<std::string> model;
};

// "http://host:port/base" split into the origin httplib wants and a path
// prefix.
struct Endpoint {
  std::string origin;
  std::string base_path;

  static Endpoint parse(std::string_view url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string_view::npos) throw InvalidArgument("endpoint must be an http:// URL: " + std::string(url));
    const auto scheme = url.substr(0, scheme_end);
    if (scheme != "http") throw InvalidArgument("unsupported endpoint scheme (only http): " + std::string(scheme));
    const auto path_start = url.find('/', scheme_end + 3);
    Endpoint e;
    e.origin = std::string(url.substr(0, path_start));
    if (path_start != std::string_view::npos) e.base_path = std::string(url.substr(path_start));
    while (!e.base_path.empty() && e.base_path.back() == '/') e.base_path.pop_back();
    if (e.origin.size() <= scheme_end + 3) throw InvalidArgument("endpoint has no host: " + std::string(url));
    return e;
  }

  // Appends `route` (e.g. "/completions") below the /v1 prefix.
  std::string path(std::string_view route) const {
    std::string p = base_path;
    if (p.size() < 3 || p.compare(p.size() - 3, 3, "/v1") != 0) p += "/v1";
    p += route;
    return p;
  }
};

// Transport failures or 5xx answers on every allowed attempt.
class RetriesExhaustedError : public NetworkError {
 public:
  RetriesExhaustedError(int attempts, std::string last_error)
      : NetworkError("request failed after " + std::to_string(attempts) + " attempts: " + last_error),
        attempts_(attempts) {}
  int attempts() const noexcept { return attempts_; }

 private:
  int attempts_;
};

// Truncates at the earliest occurrence of any stop sequence.
inline bool apply_stop_sequences(std::string& text, const std::vector<std::string>& stops) {
  std::size_t cut = std::string::npos;
  for (const auto& s : stops) {
    if (s.empty()) continue;
    cut = std::min(cut, text.find(s));
  }
  if (cut == std::string::npos) return false;
  text.resize(cut);
  return true;
}

// Shareable across threads; at most `max_in_flight` requests are on the wire
// at once.
class InferenceClient {
 public:
  explicit InferenceClient(std::string_view endpoint_url, ClientOptions options = {})
      : endpoint_(Endpoint::parse(endpoint_url)),
        url_(endpoint_url),
        options_(std::move(options)),
        in_flight_(static_cast<std::ptrdiff_t>(std::max<std::size_t>(1, options_.max_in_flight))) {
    if (options_.max_in_flight < 1) throw InvalidArgument("max_in_flight must be >= 1");
    if (options_.max_in_flight > kMaxInFlight) throw InvalidArgument("max_in_flight too large");
    if (options_.retry.max_attempts < 1) throw InvalidArgument("retry attempts must be >= 1");
  }

  const std::string& url() const noexcept { return url_; }
  const ClientOptions& options() const noexcept { return options_; }

  std::string generation_request_body(std::string_view prompt, const GenerationParams& params) const {
    nlohmann::json body{{"prompt", prompt},
                        {"max_tokens", params.max_new_tokens},
                        {"temperature", params.temperature},
                        {"echo", false}};
    if (!params.stop_sequences.empty()) body["stop"] = params.stop_sequences;
    if (params.seed) body["seed"] = *params.seed;
    if (options_.model) body["model"] = *options_.model;
    return body.dump();
  }

  std::string scoring_request_body(std::string_view text) const {
    nlohmann::json body{{"prompt", text}, {"max_tokens", 0}, {"temperature", 0.0}, {"logprobs", 1}, {"echo", true}};
    if (options_.model) body["model"] = *options_.model;
    return body.dump();
  }

  GenerationResponse generate(std::string_view prompt, const GenerationParams& params) {
    if (prompt.empty()) throw InvalidArgument("generate: empty prompt");
    validate(params);
    const auto reply = post(endpoint_.path("/completions"), generation_request_body(prompt, params));
    const auto& choice = first_choice(reply);

    GenerationResponse r;
    if (!choice.contains("text") || !choice["text"].is_string())
      throw ProtocolError("completion choice has no text");
    r.text = choice["text"].get<std::string>();
    const auto reason = choice.value("finish_reason", nlohmann::json()).is_string()
                            ? choice["finish_reason"].get<std::string>()
                            : std::string("stop");
    r.finish_reason = reason == "stop" ? FinishReason::Stop
                      : reason == "length" ? FinishReason::Length
                                           : FinishReason::Error;
    if (auto u = reply.find("usage"); u != reply.end() && u->is_object()) {
      r.usage.prompt_tokens = u->value("prompt_tokens", std::size_t{0});
      r.usage.completion_tokens = u->value("completion_tokens", std::size_t{0});
    }
    // A length stop means the whole budget was spent, whatever the service
    // reported.
    if (r.finish_reason == FinishReason::Length) r.usage.completion_tokens = params.max_new_tokens;
    if (apply_stop_sequences(r.text, params.stop_sequences)) r.finish_reason = FinishReason::Stop;
    return r;
  }

  // Every echoed token with its logprob (absent for the first token on most
  // services).
  std::vector<EchoToken> echo_tokens(std::string_view text) {
    if (text.empty()) throw InvalidArgument("score_tokens: empty text");
    const auto reply = post(endpoint_.path("/completions"), scoring_request_body(text), /*capability=*/true);
    const auto& choice = first_choice(reply);
    const auto lp = choice.find("logprobs");
    if (lp == choice.end() || !lp->is_object() || !lp->contains("tokens") || !lp->contains("token_logprobs"))
      throw CapabilityError("endpoint does not return echoed token logprobs");
    const auto& tokens = (*lp)["tokens"];
    const auto& values = (*lp)["token_logprobs"];
    if (!tokens.is_array() || !values.is_array() || tokens.size() != values.size())
      throw ProtocolError("tokens and token_logprobs differ in shape");

    std::vector<EchoToken> out;
    out.reserve(tokens.size());
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (!tokens[i].is_string()) throw ProtocolError("token is not a string");
      EchoToken t{tokens[i].get<std::string>(), std::nullopt};
      if (!values[i].is_null()) {
        if (!values[i].is_number()) throw ProtocolError("token logprob is not a number");
        const double v = values[i].get<double>();
        if (!std::isfinite(v) || v > 0.0) throw ProtocolError("token logprob must be finite and <= 0");
        t.logprob = v;
      }
      out.push_back(std::move(t));
    }
    return out;
  }

  TokenScoreSequence score_tokens(std::string_view text) { return TokenScoreSequence::from_echo(echo_tokens(text)); }

  std::vector<double> embed(std::string_view text) {
    if (text.empty()) throw InvalidArgument("embed: empty text");
    nlohmann::json body{{"input", text}};
    if (options_.model) body["model"] = *options_.model;
    const auto reply = post(endpoint_.path("/embeddings"), body.dump(), /*capability=*/true);
    const auto data = reply.find("data");
    if (data == reply.end() || !data->is_array() || data->empty() || !(*data)[0].contains("embedding"))
      throw CapabilityError("endpoint does not return embeddings");
    std::vector<double> vec;
    try {
      vec = (*data)[0]["embedding"].get<std::vector<double>>();
    } catch (const nlohmann::json::exception&) {
      throw ProtocolError("embedding is not a numeric array");
    }
    if (vec.empty()) throw ProtocolError("embedding is empty");
    std::lock_guard lock(embed_mutex_);
    if (embed_dim_ && *embed_dim_ != vec.size())
      throw ProtocolError("embedding dimension changed from " + std::to_string(*embed_dim_) + " to " +
                          std::to_string(vec.size()));
    embed_dim_ = vec.size();
    return vec;
  }

 private:
  static constexpr std::size_t kMaxInFlight = 1024;

  static const nlohmann::json& first_choice(const nlohmann::json& reply) {
    const auto it = reply.find("choices");
    if (it == reply.end() || !it->is_array() || it->empty() || !(*it)[0].is_object())
      throw ProtocolError("response has no choices");
    return (*it)[0];
  }

  // POST with bounded concurrency and retries on transport errors / 5xx.
  // With `capability`, 404/501 mean the route is not offered.
  nlohmann::json post(const std::string& path, const std::string& body, bool capability = false) {
    std::string last_error;
    auto backoff = options_.retry.initial_backoff;
    for (int attempt = 1; attempt <= options_.retry.max_attempts; ++attempt) {
      if (attempt > 1) {
        std::this_thread::sleep_for(backoff);
        backoff *= 2;
      }
      httplib::Result res = send(path, body);
      if (!res) {
        last_error = httplib::to_string(res.error());
        continue;
      }
      const int status = res->status;
      if (status >= 500) {
        if (capability && status == 501) throw CapabilityError("endpoint does not implement " + path);
        last_error = "HTTP " + std::to_string(status) + (res->body.empty() ? "" : ": " + res->body);
        continue;
      }
      if (status < 200 || status >= 300) {
        if (capability && status == 404) throw CapabilityError("endpoint does not offer " + path);
        throw HttpStatusError(status, res->body);
      }
      try {
        auto json = nlohmann::json::parse(res->body);
        if (!json.is_object()) throw ProtocolError("response body is not a JSON object");
        return json;
      } catch (const nlohmann::json::parse_error& e) {
        throw ProtocolError(std::string("response body is not JSON: ") + e.what());
      }
    }
    throw RetriesExhaustedError(options_.retry.max_attempts, last_error);
  }

  httplib::Result send(const std::string& path, const std::string& body) {
    in_flight_.acquire();
    struct Release {
      std::counting_semaphore<kMaxInFlight>& s;
      ~Release() { s.release(); }
    } release{in_flight_};

    httplib::Client cli(endpoint_.origin);
    cli.set_connection_timeout(options_.timeout);
    cli.set_read_timeout(options_.timeout);
    cli.set_write_timeout(options_.timeout);
    cli.set_keep_alive(false);
    httplib::Headers headers;
    if (options_.api_key && !options_.api_key->empty())
      headers.emplace("Authorization", "Bearer " + *options_.api_key);
    return cli.Post(path, headers, body, "application/json");
  }

  Endpoint endpoint_;
  std::string url_;
  ClientOptions options_;
  std::counting_semaphore<kMaxInFlight> in_flight_;
  std::mutex embed_mutex_;
  std::optional<std::size_t> embed_dim_;
};

}  // namespace aqag
