#pragma once

// Fine-tuning configuration emitted for external training stacks.

#include <cmath>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "aqag/detail/io.hpp"
#include "aqag/error.hpp"
#include "aqag/metrics.hpp"

namespace aqag {

enum class Precision { Fp16, Fp32 };
enum class LrSchedule { Cosine, Constant, Linear };
enum class PaddingTokenPolicy { EosAsPad };
enum class PaddingSide { Right, Left };

NLOHMANN_JSON_SERIALIZE_ENUM(Precision, {{Precision::Fp16, "fp16"}, {Precision::Fp32, "fp32"}})
NLOHMANN_JSON_SERIALIZE_ENUM(LrSchedule,
                             {{LrSchedule::Cosine, "cosine"}, {LrSchedule::Constant, "constant"}, {LrSchedule::Linear, "linear"}})
NLOHMANN_JSON_SERIALIZE_ENUM(PaddingTokenPolicy, {{PaddingTokenPolicy::EosAsPad, "eos_as_pad"}})
NLOHMANN_JSON_SERIALIZE_ENUM(PaddingSide, {{PaddingSide::Right, "right"}, {PaddingSide::Left, "left"}})

struct AdapterSpec {
  std::string method = "lora";
  int rank = 0;
  double alpha = 0.0;

  bool operator==(const AdapterSpec&) const = default;
};

struct TrainConfig {
  std::string base_model_id;
  int batch_size = 1;
  int gradient_accumulation = 1;
  double max_grad_norm = 1.0;
  Precision precision = Precision::Fp32;
  int max_seq_len = 1;
  int epochs = 1;
  int eval_interval_steps = 1;
  LrSchedule lr_schedule = LrSchedule::Constant;
  std::string optimizer;
  QuantizationSpec quantization;
  std::string quant_type;
  std::string compute_dtype;
  PaddingTokenPolicy padding_token_policy = PaddingTokenPolicy::EosAsPad;
  PaddingSide padding_side = PaddingSide::Right;
  std::optional<double> learning_rate;
  std::optional<AdapterSpec> adapter;

  long long effective_batch() const noexcept {
    return static_cast<long long>(batch_size) * gradient_accumulation;
  }

  bool operator==(const TrainConfig&) const = default;
};

// The published QLoRA setup for the 7B base model. Learning rate and adapter
// shape were never published and stay unset.
inline TrainConfig paper_default_config() {
  TrainConfig c;
  c.base_model_id = "meta-llama/Llama-2-7b-hf";
  c.batch_size = 2;
  c.gradient_accumulation = 8;
  c.max_grad_norm = 0.3;
  c.precision = Precision::Fp16;
  c.max_seq_len = 1024;
  c.epochs = 2;
  c.eval_interval_steps = 175;
  c.lr_schedule = LrSchedule::Cosine;
  c.optimizer = "paged_adamw";
  c.quantization = {4, 32};
  c.quant_type = "nf4";
  c.compute_dtype = "float16";
  c.padding_token_policy = PaddingTokenPolicy::EosAsPad;
  c.padding_side = PaddingSide::Right;
  return c;
}

enum class Severity { Warning, Error };

struct ConfigIssue {
  Severity severity = Severity::Error;
  std::string field;
  std::string message;

  bool operator==(const ConfigIssue&) const = default;
};

inline std::vector<ConfigIssue> validate_config(const TrainConfig& c) {
  std::vector<ConfigIssue> issues;
  auto error = [&](std::string field, std::string msg) {
    issues.push_back({Severity::Error, std::move(field), std::move(msg)});
  };
  if (c.base_model_id.empty()) error("base_model_id", "must not be empty");
  if (c.batch_size < 1) error("batch_size", "must be >= 1");
  if (c.gradient_accumulation < 1) error("gradient_accumulation", "must be >= 1");
  if (!std::isfinite(c.max_grad_norm) || c.max_grad_norm <= 0.0) error("max_grad_norm", "must be > 0");
  if (c.max_seq_len < 1) error("max_seq_len", "must be >= 1");
  if (c.epochs < 1) error("epochs", "must be >= 1");
  if (c.eval_interval_steps < 1) error("eval_interval_steps", "must be >= 1");
  if (c.optimizer.empty()) error("optimizer", "must not be empty");
  if (auto q = quantization_error(c.quantization)) error("quantized_bits", *q);
  if (c.quant_type.empty()) error("quant_type", "must not be empty");
  if (c.compute_dtype.empty()) error("compute_dtype", "must not be empty");
  if (c.learning_rate) {
    if (!std::isfinite(*c.learning_rate) || *c.learning_rate <= 0.0) error("learning_rate", "must be > 0");
  } else {
    issues.push_back({Severity::Warning, "learning_rate", "not set; supply one for the target trainer"});
  }
  if (c.adapter) {
    if (c.adapter->method.empty()) error("adapter_method", "must not be empty");
    if (c.adapter->rank < 1) error("adapter_rank", "must be >= 1");
    if (!std::isfinite(c.adapter->alpha) || c.adapter->alpha <= 0.0) error("adapter_alpha", "must be > 0");
  }
  return issues;
}

inline bool has_errors(const std::vector<ConfigIssue>& issues) {
  for (const auto& i : issues)
    if (i.severity == Severity::Error) return true;
  return false;
}

inline const std::set<std::string>& train_config_keys() {
  static const std::set<std::string> keys = {
      "adapter_alpha", "adapter_method", "adapter_rank", "base_model_id", "batch_size",
      "compute_dtype", "epochs", "eval_interval_steps", "full_bits", "gradient_accumulation",
      "learning_rate", "lr_schedule", "max_grad_norm", "max_seq_len", "optimizer",
      "padding_side", "padding_token_policy", "precision", "quant_type", "quantized_bits"};
  return keys;
}

// Flat object; absent optionals are null. Keys come out sorted.
inline nlohmann::json to_json(const TrainConfig& c) {
  nlohmann::json j;
  j["base_model_id"] = c.base_model_id;
  j["batch_size"] = c.batch_size;
  j["gradient_accumulation"] = c.gradient_accumulation;
  j["max_grad_norm"] = c.max_grad_norm;
  j["precision"] = c.precision;
  j["max_seq_len"] = c.max_seq_len;
  j["epochs"] = c.epochs;
  j["eval_interval_steps"] = c.eval_interval_steps;
  j["lr_schedule"] = c.lr_schedule;
  j["optimizer"] = c.optimizer;
  j["quantized_bits"] = c.quantization.quantized_bits;
  j["full_bits"] = c.quantization.full_bits;
  j["quant_type"] = c.quant_type;
  j["compute_dtype"] = c.compute_dtype;
  j["padding_token_policy"] = c.padding_token_policy;
  j["padding_side"] = c.padding_side;
  j["learning_rate"] = c.learning_rate ? nlohmann::json(*c.learning_rate) : nlohmann::json();
  j["adapter_method"] = c.adapter ? nlohmann::json(c.adapter->method) : nlohmann::json();
  j["adapter_rank"] = c.adapter ? nlohmann::json(c.adapter->rank) : nlohmann::json();
  j["adapter_alpha"] = c.adapter ? nlohmann::json(c.adapter->alpha) : nlohmann::json();
  return j;
}

namespace detail {

template <typename E>
E enum_field(const nlohmann::json& j, const char* key) {
  const auto& v = j.at(key);
  if (!v.is_string()) throw FormatError(std::string(key) + " must be a string");
  // NLOHMANN_JSON_SERIALIZE_ENUM maps unknown strings to the first value, so
  // check the round trip.
  const E e = v.get<E>();
  if (nlohmann::json(e) != v) throw FormatError("unknown " + std::string(key) + " '" + v.get<std::string>() + "'");
  return e;
}

inline int int_field(const nlohmann::json& j, const char* key) {
  const auto& v = j.at(key);
  if (!v.is_number_integer()) throw FormatError(std::string(key) + " must be an integer");
  return v.get<int>();
}

inline double number_field(const nlohmann::json& j, const char* key) {
  const auto& v = j.at(key);
  if (!v.is_number()) throw FormatError(std::string(key) + " must be a number");
  return v.get<double>();
}

inline std::string string_field(const nlohmann::json& j, const char* key) {
  const auto& v = j.at(key);
  if (!v.is_string()) throw FormatError(std::string(key) + " must be a string");
  return v.get<std::string>();
}

}  // namespace detail

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw FormatError("train config must be a JSON object");
  for (const auto& [key, value] : j.items())
    if (!train_config_keys().count(key)) throw FormatError("unknown train config key '" + key + "'");
  for (const auto& key : train_config_keys())
    if (!j.contains(key)) throw FormatError("train config lacks key '" + key + "'");

  TrainConfig c;
  c.base_model_id = detail::string_field(j, "base_model_id");
  c.batch_size = detail::int_field(j, "batch_size");
  c.gradient_accumulation = detail::int_field(j, "gradient_accumulation");
  c.max_grad_norm = detail::number_field(j, "max_grad_norm");
  c.precision = detail::enum_field<Precision>(j, "precision");
  c.max_seq_len = detail::int_field(j, "max_seq_len");
  c.epochs = detail::int_field(j, "epochs");
  c.eval_interval_steps = detail::int_field(j, "eval_interval_steps");
  c.lr_schedule = detail::enum_field<LrSchedule>(j, "lr_schedule");
  c.optimizer = detail::string_field(j, "optimizer");
  c.quantization.quantized_bits = detail::int_field(j, "quantized_bits");
  c.quantization.full_bits = detail::int_field(j, "full_bits");
  c.quant_type = detail::string_field(j, "quant_type");
  c.compute_dtype = detail::string_field(j, "compute_dtype");
  c.padding_token_policy = detail::enum_field<PaddingTokenPolicy>(j, "padding_token_policy");
  c.padding_side = detail::enum_field<PaddingSide>(j, "padding_side");
  if (!j.at("learning_rate").is_null()) c.learning_rate = detail::number_field(j, "learning_rate");

  const bool has_method = !j.at("adapter_method").is_null(), has_rank = !j.at("adapter_rank").is_null(),
             has_alpha = !j.at("adapter_alpha").is_null();
  if (has_method != has_rank || has_rank != has_alpha)
    throw FormatError("adapter_method, adapter_rank and adapter_alpha must be set together");
  if (has_method)
    c.adapter = AdapterSpec{detail::string_field(j, "adapter_method"), detail::int_field(j, "adapter_rank"),
                            detail::number_field(j, "adapter_alpha")};
  return c;
}

inline std::string format_config(const TrainConfig& c) { return to_json(c).dump(2) + "\n"; }

// Refuses configs with error-level issues; returns the warnings.
inline std::vector<ConfigIssue> emit_config(const TrainConfig& c, const std::filesystem::path& path) {
  auto issues = validate_config(c);
  if (has_errors(issues)) {
    std::string msg = "train config is invalid:";
    for (const auto& i : issues)
      if (i.severity == Severity::Error) msg += " " + i.field + " " + i.message + ";";
    throw InvalidArgument(msg);
  }
  detail::write_file_atomic(path, format_config(c));
  return issues;
}

inline TrainConfig load_config(const std::filesystem::path& path) {
  const auto text = detail::read_file(path);
  try {
    return train_config_from_json(nlohmann::json::parse(text));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("invalid train config JSON: ") + e.what());
  }
}

}  // namespace aqag
