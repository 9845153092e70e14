#pragma once

// Shared minibatch training loop with validation-based model selection.

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "json.hpp"
#include "plcbinx/learn/tensor.hpp"

namespace plcbinx::learn {

struct TrainConfig {
  AdamConfig adam;
  std::size_t epochs = 30;
  std::size_t batch = 8;
  // Stop once validation has held its maximum possible score for
  // `perfect_patience` consecutive epochs. Ties keep the later epoch.
  bool stop_at_perfect = true;
  std::size_t perfect_patience = 2;
  // Stop after this many epochs without a validation improvement; 0 disables.
  std::size_t patience = 5;
  std::uint64_t seed = 1;
};

inline nlohmann::ordered_json to_json(const TrainConfig& c) {
  return {{"lr", c.adam.lr},         {"beta1", c.adam.beta1}, {"beta2", c.adam.beta2},
          {"eps", c.adam.eps},       {"epochs", c.epochs},    {"batch", c.batch},
          {"stop_at_perfect", c.stop_at_perfect}, {"perfect_patience", c.perfect_patience}, {"patience", c.patience},
          {"seed", c.seed}};
}

inline TrainConfig train_config_from_json(const nlohmann::ordered_json& j, TrainConfig c = {}) {
  c.adam.lr = j.value("lr", c.adam.lr);
  c.adam.beta1 = j.value("beta1", c.adam.beta1);
  c.adam.beta2 = j.value("beta2", c.adam.beta2);
  c.adam.eps = j.value("eps", c.adam.eps);
  c.epochs = j.value("epochs", c.epochs);
  c.batch = j.value("batch", c.batch);
  c.stop_at_perfect = j.value("stop_at_perfect", c.stop_at_perfect);
  c.perfect_patience = j.value("perfect_patience", c.perfect_patience);
  c.patience = j.value("patience", c.patience);
  c.seed = j.value("seed", c.seed);
  if (c.batch == 0) throw Error(ErrorKind::SchemaViolation, "batch must be positive");
  return c;
}

struct TrainLog {
  std::vector<double> epoch_loss;
  std::vector<double> validation;
  std::size_t selected_epoch = 0;  // 1-based; 0 when nothing ran
};

// `sample_loss(i, scale)` must build a tape for sample i, back-propagate
// `scale · loss` into the parameter gradients and return the unscaled loss.
// `validate` returns a score to maximise, or nullopt when there is no
// validation data (the last epoch is kept).
inline TrainLog train_minibatch(const ParamList& ps, std::size_t n, const TrainConfig& cfg,
                                const std::function<double(std::size_t, double)>& sample_loss,
                                const std::function<std::optional<double>()>& validate) {
  TrainLog log;
  if (n == 0) return log;
  Adam opt(cfg.adam);
  Rng rng(cfg.seed);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  std::optional<double> best;
  std::size_t perfect_run = 0, stale = 0;
  std::vector<std::vector<double>> best_values;
  auto snapshot = [&] {
    best_values.clear();
    for (auto* p : ps) best_values.push_back(p->value.data);
  };

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double total = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch) {
      const std::size_t end = std::min(n, start + cfg.batch);
      zero_grads(ps);
      const double scale = 1.0 / static_cast<double>(end - start);
      for (std::size_t k = start; k < end; ++k) total += sample_loss(order[k], scale);
      opt.step(ps);
    }
    log.epoch_loss.push_back(total / static_cast<double>(n));
    const auto score = validate ? validate() : std::nullopt;
    if (!score) {
      log.selected_epoch = epoch;
      continue;
    }
    log.validation.push_back(*score);
    stale = best && *score <= *best ? stale + 1 : 0;
    if (!best || *score >= *best) {
      best = score;
      log.selected_epoch = epoch;
      snapshot();
    }
    perfect_run = *score >= 1.0 ? perfect_run + 1 : 0;
    if (cfg.stop_at_perfect && perfect_run >= std::max<std::size_t>(cfg.perfect_patience, 1)) break;
    if (cfg.patience && stale >= cfg.patience) break;
  }
  if (best)
    for (std::size_t i = 0; i < ps.size(); ++i) ps[i]->value.data = best_values[i];
  zero_grads(ps);
  return log;
}

}  // namespace plcbinx::learn
