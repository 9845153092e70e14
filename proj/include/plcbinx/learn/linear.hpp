#pragma once

// Binary logistic regression over sparse features, trained by full-batch
// gradient descent with an L2 penalty. The bias is held at the training prior
// log-odds, so an all-zero input predicts the majority class.

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "json.hpp"
#include "plcbinx/common.hpp"

namespace plcbinx::learn {

using SparseVec = std::vector<std::pair<std::uint32_t, double>>;

struct LogisticConfig {
  std::size_t iterations = 400;
  double lr = 0.5;
  double l2 = 1e-4;
};

inline nlohmann::ordered_json to_json(const LogisticConfig& c) {
  return {{"iterations", c.iterations}, {"lr", c.lr}, {"l2", c.l2}};
}

inline LogisticConfig logistic_config_from_json(const nlohmann::ordered_json& j, LogisticConfig c = {}) {
  c.iterations = j.value("iterations", c.iterations);
  c.lr = j.value("lr", c.lr);
  c.l2 = j.value("l2", c.l2);
  return c;
}

class LogisticModel {
 public:
  LogisticModel() = default;
  explicit LogisticModel(std::size_t dim) : w_(dim, 0.0) {}

  // labels are 0/1
  void fit(const std::vector<SparseVec>& xs, const std::vector<int>& ys, const LogisticConfig& cfg) {
    if (xs.size() != ys.size()) throw Error(ErrorKind::LengthMismatch, "logistic fit: features vs labels");
    std::size_t pos = 0;
    for (int y : ys) pos += y == 1;
    if (pos == 0 || pos == ys.size()) throw Error(ErrorKind::SingleClassTraining, "logistic fit needs both classes");
    bias_ = std::log(static_cast<double>(pos) / static_cast<double>(ys.size() - pos));
    std::fill(w_.begin(), w_.end(), 0.0);
    const double n = static_cast<double>(xs.size());
    std::vector<double> g(w_.size());
    for (std::size_t it = 0; it < cfg.iterations; ++it) {
      std::fill(g.begin(), g.end(), 0.0);
      for (std::size_t i = 0; i < xs.size(); ++i) {
        const double err = sigmoid(score(xs[i])) - ys[i];
        for (auto [k, v] : xs[i]) g[k] += err * v;
      }
      for (std::size_t k = 0; k < w_.size(); ++k) w_[k] -= cfg.lr * (g[k] / n + cfg.l2 * w_[k]);
    }
  }

  double score(const SparseVec& x) const {
    double s = bias_;
    for (auto [k, v] : x) s += w_.at(k) * v;
    return s;
  }
  double probability(const SparseVec& x) const { return sigmoid(score(x)); }
  int predict(const SparseVec& x) const { return score(x) >= 0 ? 1 : 0; }

  std::size_t dim() const { return w_.size(); }
  double bias() const { return bias_; }
  const std::vector<double>& weights() const { return w_; }

  nlohmann::ordered_json to_json() const { return {{"dim", w_.size()}, {"bias", bias_}, {"weights", w_}}; }

  static LogisticModel from_json(const nlohmann::ordered_json& j, std::size_t expected_dim, const std::string& path) {
    LogisticModel m;
    try {
      m.bias_ = j.at("bias").get<double>();
      m.w_ = j.at("weights").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::SchemaViolation, path + ": " + e.what());
    }
    if (m.w_.size() != expected_dim)
      throw Error(ErrorKind::SchemaViolation, path + "/weights: expected " + std::to_string(expected_dim) + " values");
    return m;
  }

 private:
  static double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

  std::vector<double> w_;
  double bias_ = 0;
};

}  // namespace plcbinx::learn
