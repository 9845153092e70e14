#pragma once

// Stage-1 platform-family classifier: a small post-LN Transformer encoder over
// hashed instruction tokens with sinusoidal positions and mean pooling.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "plcbinx/learn/tensor.hpp"

namespace plcbinx::learn {

struct SeqClassifierConfig {
  std::uint32_t vocab = 4096;
  std::size_t embed_dim = 64;
  std::size_t heads = 2;
  std::size_t encoder_layers = 1;
  std::size_t ff_dim = 128;
  std::size_t max_len = 128;
  std::size_t classes = 3;
  std::uint64_t seed = 1;

  std::uint32_t pad_index() const { return vocab; }
};

inline nlohmann::ordered_json to_json(const SeqClassifierConfig& c) {
  return {{"vocab", c.vocab}, {"embed_dim", c.embed_dim}, {"heads", c.heads}, {"encoder_layers", c.encoder_layers},
          {"ff_dim", c.ff_dim}, {"max_len", c.max_len}, {"classes", c.classes}, {"seed", c.seed}};
}

inline SeqClassifierConfig seq_config_from_json(const nlohmann::ordered_json& j, SeqClassifierConfig c = {}) {
  c.vocab = j.value("vocab", c.vocab);
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.heads = j.value("heads", c.heads);
  c.encoder_layers = j.value("encoder_layers", c.encoder_layers);
  c.ff_dim = j.value("ff_dim", c.ff_dim);
  c.max_len = j.value("max_len", c.max_len);
  c.classes = j.value("classes", c.classes);
  c.seed = j.value("seed", c.seed);
  if (c.heads == 0 || c.embed_dim % c.heads != 0)
    throw Error(ErrorKind::SchemaViolation, "embed_dim must be divisible by heads");
  return c;
}

inline std::uint32_t vocab_index(std::string_view token, std::uint32_t vocab) {
  return static_cast<std::uint32_t>(fnv1a64(token) % vocab);
}

inline Mat sinusoidal_positions(std::size_t len, std::size_t dim) {
  Mat pe(len, dim);
  for (std::size_t pos = 0; pos < len; ++pos)
    for (std::size_t i = 0; i < dim; i += 2) {
      const double angle = static_cast<double>(pos) / std::pow(10000.0, static_cast<double>(i) / dim);
      pe(pos, i) = std::sin(angle);
      if (i + 1 < dim) pe(pos, i + 1) = std::cos(angle);
    }
  return pe;
}

class SeqClassifier {
 public:
  explicit SeqClassifier(const SeqClassifierConfig& cfg) : cfg_(cfg) {
    const std::size_t d = cfg.embed_dim, dh = d / cfg.heads;
    Rng rng(cfg.seed);
    embed_ = Param("embed", cfg.vocab + 1, d);
    embed_.glorot(rng);
    layers_.resize(cfg.encoder_layers);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      auto& L = layers_[l];
      const std::string p = "enc" + std::to_string(l) + ".";
      for (std::size_t h = 0; h < cfg.heads; ++h) {
        const std::string ph = p + "h" + std::to_string(h) + ".";
        L.wq.emplace_back(ph + "wq", d, dh);
        L.wk.emplace_back(ph + "wk", d, dh);
        L.wv.emplace_back(ph + "wv", d, dh);
        L.bq.emplace_back(ph + "bq", 1, dh);
        L.bk.emplace_back(ph + "bk", 1, dh);
        L.bv.emplace_back(ph + "bv", 1, dh);
      }
      L.wo = Param(p + "wo", d, d);
      L.bo = Param(p + "bo", 1, d);
      L.ln1g = Param(p + "ln1.gamma", 1, d);
      L.ln1b = Param(p + "ln1.beta", 1, d);
      L.w1 = Param(p + "ff.w1", d, cfg.ff_dim);
      L.b1 = Param(p + "ff.b1", 1, cfg.ff_dim);
      L.w2 = Param(p + "ff.w2", cfg.ff_dim, d);
      L.b2 = Param(p + "ff.b2", 1, d);
      L.ln2g = Param(p + "ln2.gamma", 1, d);
      L.ln2b = Param(p + "ln2.beta", 1, d);
      for (std::size_t h = 0; h < cfg.heads; ++h) {
        L.wq[h].glorot(rng);
        L.wk[h].glorot(rng);
        L.wv[h].glorot(rng);
      }
      L.wo.glorot(rng);
      L.w1.glorot(rng);
      L.w2.glorot(rng);
      L.ln1g.fill(1);
      L.ln2g.fill(1);
    }
    wc_ = Param("cls.w", d, cfg.classes);
    bc_ = Param("cls.b", 1, cfg.classes);
    wc_.glorot(rng);
  }

  const SeqClassifierConfig& config() const { return cfg_; }

  ParamList params() {
    ParamList ps{&embed_};
    for (auto& L : layers_) {
      for (std::size_t h = 0; h < L.wq.size(); ++h)
        for (Param* p : {&L.wq[h], &L.wk[h], &L.wv[h], &L.bq[h], &L.bk[h], &L.bv[h]}) ps.push_back(p);
      for (Param* p : {&L.wo, &L.bo, &L.ln1g, &L.ln1b, &L.w1, &L.b1, &L.w2, &L.b2, &L.ln2g, &L.ln2b}) ps.push_back(p);
    }
    ps.push_back(&wc_);
    ps.push_back(&bc_);
    return ps;
  }

  // Trailing pad indices are dropped, which is equivalent to masking them
  // out of attention and pooling.
  Tape::Id forward(Tape& t, std::vector<std::uint32_t> idx) {
    while (!idx.empty() && idx.back() == cfg_.pad_index()) idx.pop_back();
    if (idx.empty()) idx.push_back(cfg_.pad_index());
    if (idx.size() > cfg_.max_len) idx.resize(cfg_.max_len);
    const std::size_t len = idx.size(), dh = cfg_.embed_dim / cfg_.heads;
    const double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));

    Tape::Id x = t.add(t.gather(t.param(embed_), std::move(idx)), t.input(positions(len)));
    for (auto& L : layers_) {
      std::vector<Tape::Id> heads;
      for (std::size_t h = 0; h < L.wq.size(); ++h) {
        auto q = t.add_row(t.matmul(x, t.param(L.wq[h])), t.param(L.bq[h]));
        auto k = t.add_row(t.matmul(x, t.param(L.wk[h])), t.param(L.bk[h]));
        auto v = t.add_row(t.matmul(x, t.param(L.wv[h])), t.param(L.bv[h]));
        auto p = t.softmax_rows(t.scale(t.matmul_nt(q, k), att_scale));
        heads.push_back(t.matmul(p, v));
      }
      auto o = t.add_row(t.matmul(t.concat_cols(heads), t.param(L.wo)), t.param(L.bo));
      auto h1 = t.layer_norm(t.add(x, o), t.param(L.ln1g), t.param(L.ln1b));
      auto f = t.relu(t.add_row(t.matmul(h1, t.param(L.w1)), t.param(L.b1)));
      f = t.add_row(t.matmul(f, t.param(L.w2)), t.param(L.b2));
      x = t.layer_norm(t.add(h1, f), t.param(L.ln2g), t.param(L.ln2b));
    }
    return t.add_row(t.matmul(t.mean_rows(x), t.param(wc_)), t.param(bc_));
  }

  std::vector<double> logits(const std::vector<std::uint32_t>& idx) {
    Tape t;
    return t.value(forward(t, idx)).data;
  }

  std::size_t predict(const std::vector<std::uint32_t>& idx) { return argmax(logits(idx)); }

 private:
  struct Layer {
    std::vector<Param> wq, wk, wv, bq, bk, bv;
    Param wo, bo, ln1g, ln1b, w1, b1, w2, b2, ln2g, ln2b;
  };

  const Mat& positions(std::size_t len) {
    if (pe_.rows < len) pe_ = sinusoidal_positions(std::max(len, cfg_.max_len), cfg_.embed_dim);
    if (pe_view_.rows != len) {
      pe_view_ = Mat(len, cfg_.embed_dim);
      std::copy_n(pe_.data.begin(), len * cfg_.embed_dim, pe_view_.data.begin());
    }
    return pe_view_;
  }

  SeqClassifierConfig cfg_;
  Param embed_;
  std::vector<Layer> layers_;
  Param wc_, bc_;
  Mat pe_, pe_view_;
};

}  // namespace plcbinx::learn
