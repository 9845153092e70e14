#pragma once

// Hierarchical ACFG graph classifier: SAGE-style message passing over basic
// blocks, mean pooling into function embeddings, attention and max pooling
// into a binary embedding, and a two-layer feed-forward head.

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "plcbinx/learn/tensor.hpp"
#include "plcbinx/represent.hpp"

namespace plcbinx::learn {

struct GnnConfig {
  std::size_t bag_dim = 256;
  std::size_t hidden = 64;
  std::size_t sage_layers = 2;
  std::size_t head_hidden = 64;
  std::size_t classes = 22;
  std::uint64_t seed = 1;

  std::size_t node_in_dim() const { return bag_dim + kBbLenBuckets + 2 + 1; }
};

inline nlohmann::ordered_json to_json(const GnnConfig& c) {
  return {{"bag_dim", c.bag_dim}, {"hidden", c.hidden},       {"sage_layers", c.sage_layers},
          {"head_hidden", c.head_hidden}, {"classes", c.classes}, {"seed", c.seed}};
}

inline GnnConfig gnn_config_from_json(const nlohmann::ordered_json& j, GnnConfig c = {}) {
  c.bag_dim = j.value("bag_dim", c.bag_dim);
  c.hidden = j.value("hidden", c.hidden);
  c.sage_layers = j.value("sage_layers", c.sage_layers);
  c.head_hidden = j.value("head_hidden", c.head_hidden);
  c.classes = j.value("classes", c.classes);
  c.seed = j.value("seed", c.seed);
  if (c.sage_layers == 0) throw Error(ErrorKind::SchemaViolation, "sage_layers must be positive");
  return c;
}

// All selected functions of one binary as a single block-diagonal graph.
struct GraphBatch {
  SparseRows x;
  std::vector<std::vector<std::uint32_t>> in_nbrs;
  std::vector<std::size_t> bounds;  // node range per function

  std::size_t functions() const { return bounds.empty() ? 0 : bounds.size() - 1; }
};

inline std::vector<std::pair<std::uint32_t, double>> node_features(const AcfgNode& n, const GnnConfig& cfg) {
  std::map<std::uint32_t, double> bag;
  for (const auto& tok : n.tokens) bag[static_cast<std::uint32_t>(fnv1a64(tok) % cfg.bag_dim)] += 1;
  std::vector<std::pair<std::uint32_t, double>> f;
  for (auto [k, c] : bag) f.emplace_back(k, std::log1p(c));
  const auto base = static_cast<std::uint32_t>(cfg.bag_dim);
  f.emplace_back(base + static_cast<std::uint32_t>(n.bb_len), 1.0);
  if (n.in_degree) f.emplace_back(base + kBbLenBuckets, std::log1p(n.in_degree));
  if (n.out_degree) f.emplace_back(base + kBbLenBuckets + 1, std::log1p(n.out_degree));
  if (n.core) f.emplace_back(base + kBbLenBuckets + 2, 1.0);
  return f;
}

inline GraphBatch make_batch(const std::vector<Acfg>& graphs, const GnnConfig& cfg) {
  if (graphs.empty()) throw Error(ErrorKind::NoFunctionsSelected, "no functions selected for the graph model");
  GraphBatch b;
  b.x.cols = cfg.node_in_dim();
  b.bounds.push_back(0);
  for (const auto& g : graphs) {
    const auto base = static_cast<std::uint32_t>(b.x.rows.size());
    for (const auto& n : g.nodes) b.x.rows.push_back(node_features(n, cfg));
    b.in_nbrs.resize(b.x.rows.size());
    for (auto [s, d] : g.edges) b.in_nbrs[base + d].push_back(base + static_cast<std::uint32_t>(s));
    if (g.nodes.empty()) throw Error(ErrorKind::InvariantViolation, "ACFG without nodes: " + g.function_id);
    b.bounds.push_back(b.x.rows.size());
  }
  return b;
}

class GnnClassifier {
 public:
  explicit GnnClassifier(const GnnConfig& cfg) : cfg_(cfg) {
    Rng rng(cfg.seed);
    for (std::size_t l = 0; l < cfg.sage_layers; ++l) {
      const std::size_t in = l == 0 ? cfg.node_in_dim() : cfg.hidden;
      const std::string p = "sage" + std::to_string(l) + ".";
      layers_.push_back({Param(p + "w_self", in, cfg.hidden), Param(p + "w_neigh", in, cfg.hidden),
                         Param(p + "b", 1, cfg.hidden)});
    }
    for (auto& L : layers_) {
      L.w_self.glorot(rng);
      L.w_neigh.glorot(rng);
    }
    wa_ = Param("att.w", cfg.hidden, cfg.hidden);
    va_ = Param("att.v", cfg.hidden, 1);
    w1_ = Param("head.w1", 2 * cfg.hidden, cfg.head_hidden);
    b1_ = Param("head.b1", 1, cfg.head_hidden);
    w2_ = Param("head.w2", cfg.head_hidden, cfg.classes);
    b2_ = Param("head.b2", 1, cfg.classes);
    for (Param* p : {&wa_, &va_, &w1_, &w2_}) p->glorot(rng);
  }

  const GnnConfig& config() const { return cfg_; }

  ParamList params() {
    ParamList ps;
    for (auto& L : layers_)
      for (Param* p : {&L.w_self, &L.w_neigh, &L.b}) ps.push_back(p);
    for (Param* p : {&wa_, &va_, &w1_, &b1_, &w2_, &b2_}) ps.push_back(p);
    return ps;
  }

  // Function embeddings (one row per function); `batch` must outlive the tape.
  Tape::Id embed_functions(Tape& t, const GraphBatch& batch) {
    if (batch.functions() == 0) throw Error(ErrorKind::NoFunctionsSelected, "empty graph batch");
    Tape::Id h = 0;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      auto& L = layers_[l];
      Tape::Id self, neigh;
      if (l == 0) {
        self = t.sparse_matmul(batch.x, t.param(L.w_self));
        neigh = t.neighbor_mean(t.sparse_matmul(batch.x, t.param(L.w_neigh)), batch.in_nbrs);
      } else {
        self = t.matmul(h, t.param(L.w_self));
        neigh = t.neighbor_mean(t.matmul(h, t.param(L.w_neigh)), batch.in_nbrs);
      }
      h = t.relu(t.add_row(t.add(self, neigh), t.param(L.b)));
    }
    return t.segment_mean(h, batch.bounds);
  }

  Tape::Id attention_weights(Tape& t, Tape::Id f) {
    return t.softmax_all(t.matmul(t.tanh(t.matmul(f, t.param(wa_))), t.param(va_)));
  }

  Tape::Id forward(Tape& t, const GraphBatch& batch) {
    auto f = embed_functions(t, batch);
    auto att = t.matmul_tn(attention_weights(t, f), f);
    auto z = t.concat_cols({att, t.max_rows(f)});
    auto hid = t.relu(t.add_row(t.matmul(z, t.param(w1_)), t.param(b1_)));
    return t.add_row(t.matmul(hid, t.param(w2_)), t.param(b2_));
  }

  std::vector<double> logits(const GraphBatch& batch) {
    Tape t;
    return t.value(forward(t, batch)).data;
  }

  std::vector<double> attention(const GraphBatch& batch) {
    Tape t;
    return t.value(attention_weights(t, embed_functions(t, batch))).data;
  }

 private:
  struct Layer {
    Param w_self, w_neigh, b;
  };

  GnnConfig cfg_;
  std::vector<Layer> layers_;
  Param wa_, va_, w1_, b1_, w2_, b2_;
};

}  // namespace plcbinx::learn
