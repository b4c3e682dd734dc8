#include "lowmt/transformer.hpp"

#include <cmath>

#include "kernels.hpp"

namespace lowmt::nmt {

void check_batch(const ModelConfig& cfg, const FactoredBatch& b) {
  if (b.src_len > cfg.max_len || b.tgt_len > cfg.max_len) {
    throw RangeError("batch length " + std::to_string(std::max(b.src_len, b.tgt_len)) + " exceeds max_len " +
                     std::to_string(cfg.max_len));
  }
  const auto check_ids = [&](const std::vector<int>& ids) {
    for (int id : ids) {
      if (id < 0 || id >= cfg.token_vocab) {
        throw RangeError("token id " + std::to_string(id) + " outside vocabulary of " + std::to_string(cfg.token_vocab));
      }
    }
  };
  check_ids(b.src_ids);
  check_ids(b.tgt_in);
  check_ids(b.tgt_out);
  for (int f : b.src_factor) {
    if (f < 0 || f >= cfg.factor_vocab()) {
      throw RangeError("factor id " + std::to_string(f) + " outside factor vocabulary of " +
                       std::to_string(cfg.factor_vocab()));
    }
  }
}

namespace {

using kernels::layer_norm;
using kernels::layer_norm_backward;
using kernels::linear;
using kernels::linear_backward;
using kernels::NormCache;

template <typename T>
class Graph {
 public:
  Graph(const Parameters<T>& p, const ModelConfig& cfg, const FactoredBatch& b, Rng* rng)
      : p_(p), cfg_(cfg), b_(b), layout_(cfg), rng_(cfg.dropout > 0 ? rng : nullptr) {
    check_batch(cfg, b);
    B_ = b.batch;
    S_ = b.src_len;
    Tt_ = b.tgt_len;
    d_ = cfg.d_model;
    H_ = cfg.heads;
    dh_ = cfg.head_dim();
    enc_.resize(static_cast<std::size_t>(cfg.enc_layers));
    dec_.resize(static_cast<std::size_t>(cfg.dec_layers));
  }

  ForwardResult<T> forward(bool keep_logits, bool for_backward) {
    for_backward_ = for_backward;
    encode();
    decode();
    return loss(keep_logits);
  }

  void backward(Parameters<T>& g) {
    // output projection
    Matrix<T> dz;
    linear_backward(z_, p_[layout_.out_w()], dlogits_, g[layout_.out_w()], g[layout_.out_b()], &dz);
    Matrix<T> dy;
    layer_norm_backward(dec_norm_, p_[layout_.dec_norm_g()], dz, g[layout_.dec_norm_g()], g[layout_.dec_norm_b()], dy);

    Matrix<T> dmem = Matrix<T>::Zero(B_ * S_, d_);
    for (int l = cfg_.dec_layers - 1; l >= 0; --l) {
      auto& c = dec_[static_cast<std::size_t>(l)];
      const auto idx = [&](int slot) { return layout_.dec(l, slot); };
      Matrix<T> tmp, da;
      // feed-forward sublayer
      apply_dropout_backward(dy, c.drop3, tmp);
      ffn_backward(idx(ParamLayout::d_w1), c.a3, c.ffn, tmp, g, da);
      Matrix<T> dx;
      layer_norm_backward(c.n3, p_[idx(ParamLayout::d_ln3_g)], da, g[idx(ParamLayout::d_ln3_g)],
                          g[idx(ParamLayout::d_ln3_b)], dx);
      dy += dx;
      // cross-attention sublayer
      apply_dropout_backward(dy, c.drop2, tmp);
      Matrix<T> dq_in, dkv_in;
      attention_backward(idx(ParamLayout::d_cq), c.cross, tmp, g, dq_in, dkv_in);
      dmem += dkv_in;
      layer_norm_backward(c.n2, p_[idx(ParamLayout::d_ln2_g)], dq_in, g[idx(ParamLayout::d_ln2_g)],
                          g[idx(ParamLayout::d_ln2_b)], dx);
      dy += dx;
      // self-attention sublayer
      apply_dropout_backward(dy, c.drop1, tmp);
      attention_backward(idx(ParamLayout::d_sq), c.self, tmp, g, dq_in, dkv_in);
      dq_in += dkv_in;
      layer_norm_backward(c.n1, p_[idx(ParamLayout::d_ln1_g)], dq_in, g[idx(ParamLayout::d_ln1_g)],
                          g[idx(ParamLayout::d_ln1_b)], dx);
      dy += dx;
    }
    // target embedding
    {
      Matrix<T> de;
      apply_dropout_backward(dy, tgt_drop_, de);
      const T scale = std::sqrt(static_cast<T>(d_));
      auto& gt = g[ParamLayout::kTgtEmbed];
      for (int r = 0; r < B_ * Tt_; ++r) gt.row(b_.tgt_in[static_cast<std::size_t>(r)]) += scale * de.row(r);
    }

    Matrix<T> dx_enc;
    layer_norm_backward(enc_norm_, p_[layout_.enc_norm_g()], dmem, g[layout_.enc_norm_g()], g[layout_.enc_norm_b()],
                        dx_enc);
    for (int l = cfg_.enc_layers - 1; l >= 0; --l) {
      auto& c = enc_[static_cast<std::size_t>(l)];
      const auto idx = [&](int slot) { return layout_.enc(l, slot); };
      Matrix<T> tmp, da, dx;
      apply_dropout_backward(dx_enc, c.drop2, tmp);
      ffn_backward(idx(ParamLayout::e_w1), c.a2, c.ffn, tmp, g, da);
      layer_norm_backward(c.n2, p_[idx(ParamLayout::e_ln2_g)], da, g[idx(ParamLayout::e_ln2_g)],
                          g[idx(ParamLayout::e_ln2_b)], dx);
      dx_enc += dx;
      apply_dropout_backward(dx_enc, c.drop1, tmp);
      Matrix<T> dq_in, dkv_in;
      attention_backward(idx(ParamLayout::e_wq), c.self, tmp, g, dq_in, dkv_in);
      dq_in += dkv_in;
      layer_norm_backward(c.n1, p_[idx(ParamLayout::e_ln1_g)], dq_in, g[idx(ParamLayout::e_ln1_g)],
                          g[idx(ParamLayout::e_ln1_b)], dx);
      dx_enc += dx;
    }
    {
      Matrix<T> de;
      apply_dropout_backward(dx_enc, src_drop_, de);
      const T scale = std::sqrt(static_cast<T>(d_));
      const int td = cfg_.token_dim(), fd = cfg_.factor_dim;
      auto& gs = g[ParamLayout::kSrcEmbed];
      auto& gf = g[ParamLayout::kFactorEmbed];
      for (int bi = 0; bi < B_; ++bi) {
        const int f = b_.src_factor[static_cast<std::size_t>(bi)];
        for (int s = 0; s < S_; ++s) {
          const int r = bi * S_ + s;
          gs.row(b_.src_ids[static_cast<std::size_t>(r)]) += scale * de.row(r).head(td);
          if (fd > 0) gf.row(f) += scale * de.row(r).tail(fd);
        }
      }
    }
  }

  std::vector<Matrix<T>> self_attention_probs(int layer) const { return dec_[static_cast<std::size_t>(layer)].self.probs; }

 private:
  struct Attn {
    const Matrix<T>* xq = nullptr;
    const Matrix<T>* xkv = nullptr;
    int tq = 0, tk = 0;
    const std::vector<std::uint8_t>* key_mask = nullptr;
    bool causal = false;
    Matrix<T> q, k, v, ocat;
    std::vector<Matrix<T>> probs;
  };
  struct Ffn {
    Matrix<T> h;  // pre-activation
    Matrix<T> r;  // post-ReLU
  };
  struct EncLayer {
    NormCache<T> n1, n2;
    Matrix<T> a1, a2;
    Attn self;
    Ffn ffn;
    Matrix<T> drop1, drop2;
  };
  struct DecLayer {
    NormCache<T> n1, n2, n3;
    Matrix<T> a1, a2, a3;
    Attn self, cross;
    Ffn ffn;
    Matrix<T> drop1, drop2, drop3;
  };

  void dropout(Matrix<T>& x, Matrix<T>& mask) {
    if (!rng_) return;
    const double keep = 1.0 - cfg_.dropout;
    const T scale = static_cast<T>(1.0 / keep);
    mask.resize(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = uniform_real(*rng_) < keep ? scale : T(0);
    x.array() *= mask.array();
  }

  static void apply_dropout_backward(const Matrix<T>& dy, const Matrix<T>& mask, Matrix<T>& out) {
    if (mask.size() == 0) {
      out = dy;
    } else {
      out = dy.cwiseProduct(mask);
    }
  }

  void attention(int base, const Matrix<T>& xq, const Matrix<T>& xkv, int tq, int tk,
                 const std::vector<std::uint8_t>& key_mask, bool causal, Attn& a, Matrix<T>& out) {
    a.xq = &xq;
    a.xkv = &xkv;
    a.tq = tq;
    a.tk = tk;
    a.key_mask = &key_mask;
    a.causal = causal;
    linear(xq, p_[base + 0], p_[base + 1], a.q);
    linear(xkv, p_[base + 2], p_[base + 3], a.k);
    linear(xkv, p_[base + 4], p_[base + 5], a.v);
    a.ocat.resize(B_ * tq, d_);
    a.probs.assign(static_cast<std::size_t>(B_ * H_), Matrix<T>());
    const T scale = T(1) / std::sqrt(static_cast<T>(dh_));
    for (int bi = 0; bi < B_; ++bi) {
      for (int h = 0; h < H_; ++h) {
        auto& P = a.probs[static_cast<std::size_t>(bi * H_ + h)];
        P.noalias() = a.q.block(bi * tq, h * dh_, tq, dh_) * a.k.block(bi * tk, h * dh_, tk, dh_).transpose();
        P *= scale;
        for (int i = 0; i < tq; ++i) {
          kernels::masked_softmax_row<T>(P.row(i), [&](Eigen::Index j) {
            return key_mask[static_cast<std::size_t>(bi * tk + j)] && (!causal || j <= i);
          });
        }
        a.ocat.block(bi * tq, h * dh_, tq, dh_).noalias() = P * a.v.block(bi * tk, h * dh_, tk, dh_);
      }
    }
    linear(a.ocat, p_[base + 6], p_[base + 7], out);
  }

  void attention_backward(int base, const Attn& a, const Matrix<T>& dout, Parameters<T>& g, Matrix<T>& dxq,
                          Matrix<T>& dxkv) {
    Matrix<T> docat;
    linear_backward(a.ocat, p_[base + 6], dout, g[base + 6], g[base + 7], &docat);
    Matrix<T> dq = Matrix<T>::Zero(a.q.rows(), d_);
    Matrix<T> dk = Matrix<T>::Zero(a.k.rows(), d_);
    Matrix<T> dv = Matrix<T>::Zero(a.v.rows(), d_);
    const T scale = T(1) / std::sqrt(static_cast<T>(dh_));
    Matrix<T> dP, dS;
    for (int bi = 0; bi < B_; ++bi) {
      for (int h = 0; h < H_; ++h) {
        const auto& P = a.probs[static_cast<std::size_t>(bi * H_ + h)];
        const auto dO = docat.block(bi * a.tq, h * dh_, a.tq, dh_);
        const auto Vb = a.v.block(bi * a.tk, h * dh_, a.tk, dh_);
        dv.block(bi * a.tk, h * dh_, a.tk, dh_).noalias() += P.transpose() * dO;
        dP.noalias() = dO * Vb.transpose();
        dS = P.cwiseProduct(dP);
        const Eigen::Matrix<T, Eigen::Dynamic, 1> rows = dS.rowwise().sum();
        dS -= P.cwiseProduct(rows.replicate(1, P.cols()));
        dS *= scale;
        dq.block(bi * a.tq, h * dh_, a.tq, dh_).noalias() += dS * a.k.block(bi * a.tk, h * dh_, a.tk, dh_);
        dk.block(bi * a.tk, h * dh_, a.tk, dh_).noalias() += dS.transpose() * a.q.block(bi * a.tq, h * dh_, a.tq, dh_);
      }
    }
    linear_backward(*a.xq, p_[base + 0], dq, g[base + 0], g[base + 1], &dxq);
    Matrix<T> dxk, dxv;
    linear_backward(*a.xkv, p_[base + 2], dk, g[base + 2], g[base + 3], &dxk);
    linear_backward(*a.xkv, p_[base + 4], dv, g[base + 4], g[base + 5], &dxv);
    dxkv = dxk + dxv;
  }

  void ffn(int base, const Matrix<T>& x, Ffn& f, Matrix<T>& out) {
    linear(x, p_[base + 0], p_[base + 1], f.h);
    f.r = f.h.cwiseMax(T(0));
    linear(f.r, p_[base + 2], p_[base + 3], out);
  }

  void ffn_backward(int base, const Matrix<T>& x, const Ffn& f, const Matrix<T>& dout, Parameters<T>& g,
                    Matrix<T>& dx) {
    Matrix<T> dr;
    linear_backward(f.r, p_[base + 2], dout, g[base + 2], g[base + 3], &dr);
    dr = dr.cwiseProduct((f.h.array() > T(0)).template cast<T>().matrix());
    linear_backward(x, p_[base + 0], dr, g[base + 0], g[base + 1], &dx);
  }

  void encode() {
    const T scale = std::sqrt(static_cast<T>(d_));
    const auto& es = p_[ParamLayout::kSrcEmbed];
    const auto& ef = p_[ParamLayout::kFactorEmbed];
    const int td = cfg_.token_dim(), fd = cfg_.factor_dim;
    positions_ = sinusoidal_positions<T>(std::max(S_, Tt_), d_);
    Matrix<T> x(B_ * S_, d_);
    for (int bi = 0; bi < B_; ++bi) {
      const int f = b_.src_factor[static_cast<std::size_t>(bi)];
      for (int s = 0; s < S_; ++s) {
        const int r = bi * S_ + s;
        x.row(r).head(td) = es.row(b_.src_ids[static_cast<std::size_t>(r)]) * scale;
        if (fd > 0) x.row(r).tail(fd) = ef.row(f) * scale;
        x.row(r) += positions_.row(s);
      }
    }
    dropout(x, src_drop_);
    for (int l = 0; l < cfg_.enc_layers; ++l) {
      auto& c = enc_[static_cast<std::size_t>(l)];
      const auto idx = [&](int slot) { return layout_.enc(l, slot); };
      Matrix<T> out;
      layer_norm(x, p_[idx(ParamLayout::e_ln1_g)], p_[idx(ParamLayout::e_ln1_b)], c.a1, &c.n1);
      attention(idx(ParamLayout::e_wq), c.a1, c.a1, S_, S_, b_.src_mask, false, c.self, out);
      dropout(out, c.drop1);
      x += out;
      layer_norm(x, p_[idx(ParamLayout::e_ln2_g)], p_[idx(ParamLayout::e_ln2_b)], c.a2, &c.n2);
      ffn(idx(ParamLayout::e_w1), c.a2, c.ffn, out);
      dropout(out, c.drop2);
      x += out;
    }
    layer_norm(x, p_[layout_.enc_norm_g()], p_[layout_.enc_norm_b()], mem_, &enc_norm_);
  }

  void decode() {
    const T scale = std::sqrt(static_cast<T>(d_));
    const auto& et = p_[ParamLayout::kTgtEmbed];
    Matrix<T> y(B_ * Tt_, d_);
    for (int bi = 0; bi < B_; ++bi) {
      for (int t = 0; t < Tt_; ++t) {
        const int r = bi * Tt_ + t;
        y.row(r) = et.row(b_.tgt_in[static_cast<std::size_t>(r)]) * scale + positions_.row(t);
      }
    }
    dropout(y, tgt_drop_);
    for (int l = 0; l < cfg_.dec_layers; ++l) {
      auto& c = dec_[static_cast<std::size_t>(l)];
      const auto idx = [&](int slot) { return layout_.dec(l, slot); };
      Matrix<T> out;
      layer_norm(y, p_[idx(ParamLayout::d_ln1_g)], p_[idx(ParamLayout::d_ln1_b)], c.a1, &c.n1);
      attention(idx(ParamLayout::d_sq), c.a1, c.a1, Tt_, Tt_, b_.tgt_mask, true, c.self, out);
      dropout(out, c.drop1);
      y += out;
      layer_norm(y, p_[idx(ParamLayout::d_ln2_g)], p_[idx(ParamLayout::d_ln2_b)], c.a2, &c.n2);
      attention(idx(ParamLayout::d_cq), c.a2, mem_, Tt_, S_, b_.src_mask, false, c.cross, out);
      dropout(out, c.drop2);
      y += out;
      layer_norm(y, p_[idx(ParamLayout::d_ln3_g)], p_[idx(ParamLayout::d_ln3_b)], c.a3, &c.n3);
      ffn(idx(ParamLayout::d_w1), c.a3, c.ffn, out);
      dropout(out, c.drop3);
      y += out;
    }
    layer_norm(y, p_[layout_.dec_norm_g()], p_[layout_.dec_norm_b()], z_, &dec_norm_);
  }

  ForwardResult<T> loss(bool keep_logits) {
    Matrix<T> logits;
    linear(z_, p_[layout_.out_w()], p_[layout_.out_b()], logits);
    const int V = cfg_.token_vocab;
    const double eps = cfg_.label_smoothing;
    ForwardResult<T> res;
    res.tokens = 0;
    for (auto m : b_.tgt_mask) res.tokens += m;
    if (for_backward_) dlogits_ = Matrix<T>::Zero(logits.rows(), logits.cols());
    const double inv_tokens = res.tokens ? 1.0 / static_cast<double>(res.tokens) : 0.0;
    std::vector<double> probs(static_cast<std::size_t>(V));
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
      if (!b_.tgt_mask[static_cast<std::size_t>(r)]) continue;
      const auto row = logits.row(r);
      double mx = -std::numeric_limits<double>::infinity();
      double sum_logits = 0;
      for (int j = 0; j < V; ++j) {
        mx = std::max(mx, static_cast<double>(row(j)));
        sum_logits += static_cast<double>(row(j));
      }
      double z = 0;
      for (int j = 0; j < V; ++j) {
        probs[static_cast<std::size_t>(j)] = std::exp(static_cast<double>(row(j)) - mx);
        z += probs[static_cast<std::size_t>(j)];
      }
      const double lse = mx + std::log(z);
      const int y = b_.tgt_out[static_cast<std::size_t>(r)];
      const double nll = lse - static_cast<double>(row(y));
      const double smooth = lse - sum_logits / V;
      res.nll_sum += nll;
      res.loss_sum += (1.0 - eps) * nll + eps * smooth;
      if (for_backward_) {
        auto drow = dlogits_.row(r);
        for (int j = 0; j < V; ++j) {
          drow(j) = static_cast<T>((probs[static_cast<std::size_t>(j)] / z - eps / V) * inv_tokens);
        }
        drow(y) -= static_cast<T>((1.0 - eps) * inv_tokens);
      }
    }
    res.loss = res.loss_sum * inv_tokens;
    if (keep_logits) res.logits = std::move(logits);
    return res;
  }

  const Parameters<T>& p_;
  const ModelConfig& cfg_;
  const FactoredBatch& b_;
  ParamLayout layout_;
  Rng* rng_;
  bool for_backward_ = false;
  int B_ = 0, S_ = 0, Tt_ = 0, d_ = 0, H_ = 0, dh_ = 0;

  Matrix<T> positions_;
  Matrix<T> src_drop_, tgt_drop_;
  std::vector<EncLayer> enc_;
  std::vector<DecLayer> dec_;
  NormCache<T> enc_norm_, dec_norm_;
  Matrix<T> mem_, z_, dlogits_;
};

}  // namespace

template <typename T>
ForwardResult<T> forward(const Parameters<T>& params, const ModelConfig& cfg, const FactoredBatch& batch,
                         const ForwardOptions& opts) {
  Graph<T> g(params, cfg, batch, opts.dropout_rng);
  return g.forward(opts.keep_logits, false);
}

template <typename T>
GradientResult<T> backward(const Parameters<T>& params, const ModelConfig& cfg, const FactoredBatch& batch,
                           Rng* dropout_rng) {
  Graph<T> graph(params, cfg, batch, dropout_rng);
  auto fr = graph.forward(false, true);
  GradientResult<T> out;
  out.grads = params.zeros_like();
  graph.backward(out.grads);
  out.loss = fr.loss;
  out.nll_sum = fr.nll_sum;
  out.tokens = fr.tokens;
  return out;
}

template <typename T>
std::vector<Matrix<T>> decoder_self_attention(const Parameters<T>& params, const ModelConfig& cfg,
                                              const FactoredBatch& batch, int layer) {
  if (layer < 0 || layer >= cfg.dec_layers) throw RangeError("decoder layer out of range");
  Graph<T> g(params, cfg, batch, nullptr);
  g.forward(false, false);
  return g.self_attention_probs(layer);
}

template ForwardResult<float> forward<float>(const Parameters<float>&, const ModelConfig&, const FactoredBatch&,
                                             const ForwardOptions&);
template ForwardResult<double> forward<double>(const Parameters<double>&, const ModelConfig&, const FactoredBatch&,
                                               const ForwardOptions&);
template GradientResult<float> backward<float>(const Parameters<float>&, const ModelConfig&, const FactoredBatch&, Rng*);
template GradientResult<double> backward<double>(const Parameters<double>&, const ModelConfig&, const FactoredBatch&,
                                                 Rng*);
template std::vector<Matrix<float>> decoder_self_attention<float>(const Parameters<float>&, const ModelConfig&,
                                                                  const FactoredBatch&, int);
template std::vector<Matrix<double>> decoder_self_attention<double>(const Parameters<double>&, const ModelConfig&,
                                                                    const FactoredBatch&, int);

}  // namespace lowmt::nmt
