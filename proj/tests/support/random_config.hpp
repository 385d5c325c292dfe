#pragma once

#include <random>
#include <string>

#include "aqag/train_config.hpp"

namespace aqag::testing {

inline TrainConfig random_valid_config(std::mt19937& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto pick = [&](std::initializer_list<const char*> xs) { return std::string(*(xs.begin() + rng() % xs.size())); };
  TrainConfig c;
  c.base_model_id = pick({"meta-llama/Llama-2-7b-hf", "meta-llama/Llama-2-13b-hf", "local/model \"q\"", "m\xc3\xbcnchen"});
  c.batch_size = 1 + static_cast<int>(rng() % 64);
  c.gradient_accumulation = 1 + static_cast<int>(rng() % 32);
  c.max_grad_norm = 0.01 + unit(rng) * 10.0;
  c.precision = rng() % 2 ? Precision::Fp16 : Precision::Fp32;
  c.max_seq_len = 1 + static_cast<int>(rng() % 8192);
  c.epochs = 1 + static_cast<int>(rng() % 10);
  c.eval_interval_steps = 1 + static_cast<int>(rng() % 1000);
  c.lr_schedule = std::array{LrSchedule::Cosine, LrSchedule::Constant, LrSchedule::Linear}[rng() % 3];
  c.optimizer = pick({"paged_adamw", "adamw", "sgd"});
  const int bits[] = {4, 8, 16, 32};
  c.quantization.quantized_bits = bits[rng() % 4];
  c.quantization.full_bits = c.quantization.quantized_bits * (1 << (rng() % 3));
  c.quant_type = pick({"nf4", "fp4", "int8"});
  c.compute_dtype = pick({"float16", "bfloat16", "float32"});
  c.padding_side = rng() % 2 ? PaddingSide::Right : PaddingSide::Left;
  if (rng() % 2) c.learning_rate = std::ldexp(unit(rng) + 0.5, -static_cast<int>(rng() % 20));
  if (rng() % 2) c.adapter = AdapterSpec{pick({"lora", "qlora"}), 1 + static_cast<int>(rng() % 128), 0.5 + unit(rng) * 64};
  return c;
}

}  // namespace aqag::testing
