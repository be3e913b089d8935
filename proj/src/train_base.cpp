// SPDX-License-Identifier: Apache-2.0
#include "psl/train_base.hpp"

#include <cmath>
#include <numbers>
#include <unordered_map>

#include "psl/error.hpp"
#include "psl/optim.hpp"
#include "psl/random.hpp"

namespace psl {

BaseTrainReport train_base(DenoiserModel& model, const ToyDataset& data, const NoiseSchedule& sched,
                           const PromptEncoder& encoder, const BaseTrainConfig& config) {
  if (model.frozen()) throw ContractError("train_base: model is already frozen");
  if (data.size() == 0) throw ConfigError("train_base: dataset is empty");
  if (config.batch_size == 0) throw ConfigError("train_base: batch size must be positive");
  if (model.encoder_hash() != encoder.hash())
    throw CompatibilityError("train_base: model was built for a different prompt encoder");
  if (model.num_timesteps() != sched.steps())
    throw ConfigError("train_base: model timestep count differs from the schedule");

  BaseTrainReport report;
  if (config.iterations == 0) return report;

  const std::size_t d = encoder.dim();
  std::unordered_map<std::string, std::vector<double>> cache;
  std::vector<const std::vector<double>*> conds(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto key = data.captions[i].to_string();
    auto it = cache.find(key);
    if (it == cache.end()) it = cache.emplace(key, encoder.encode(data.captions[i])).first;
    conds[i] = &it->second;
  }

  const std::size_t epoch_length =
      config.epoch_length ? config.epoch_length : (data.size() + config.batch_size - 1) / config.batch_size;
  auto params = model.trainable_parameters();
  OptimizerState opt = OptimizerState::adamw(config.learning_rate, config.weight_decay);
  Rng rng = make_rng(config.seed, 0xba5e);
  const std::size_t B = config.batch_size;
  const int T = sched.steps();

  double epoch_sum = 0.0;
  std::size_t epoch_count = 0;
  std::vector<double> z(B * 2), eps(B * 2), cond(B * d);
  std::vector<int> ts(B);
  for (std::size_t it = 0; it < config.iterations; ++it) {
    for (std::size_t b = 0; b < B; ++b) {
      const std::size_t idx = uniform_index(rng, data.size());
      const int t = uniform_int(rng, 1, T);
      const double ab = sched.alpha_bar(t);
      const double e0 = standard_normal(rng), e1 = standard_normal(rng);
      const bool drop = uniform(rng, 0.0, 1.0) < config.null_prompt_rate;
      ts[b] = t;
      eps[2 * b] = e0;
      eps[2 * b + 1] = e1;
      z[2 * b] = std::sqrt(ab) * data.points[idx][0] + std::sqrt(1.0 - ab) * e0;
      z[2 * b + 1] = std::sqrt(ab) * data.points[idx][1] + std::sqrt(1.0 - ab) * e1;
      const auto& c = *conds[idx];
      for (std::size_t j = 0; j < d; ++j) cond[b * d + j] = drop ? 0.0 : c[j];
    }
    Tensor pred = model.predict_eps(Tensor::from({B, 2}, z), ts, Tensor::from({B, d}, cond));
    Tensor loss = mse(pred, Tensor::from({B, 2}, eps));
    const double value = loss.item();
    if (!std::isfinite(value))
      throw DivergenceError("train_base: non-finite loss at iteration " + std::to_string(it), it == 0 ? 0 : it - 1);
    backward(loss);
    if (config.cosine_decay)
      opt.learning_rate = config.learning_rate * 0.5 *
                          (1.0 + std::cos(std::numbers::pi * static_cast<double>(it) /
                                          static_cast<double>(config.iterations)));
    optimizer_step(opt, params);

    report.loss_curve.push_back(value);
    epoch_sum += value;
    if (++epoch_count == epoch_length) {
      report.epoch_means.push_back(epoch_sum / static_cast<double>(epoch_count));
      epoch_sum = 0.0;
      epoch_count = 0;
    }
  }
  if (epoch_count) report.epoch_means.push_back(epoch_sum / static_cast<double>(epoch_count));
  model.freeze();
  return report;
}

}  // namespace psl
