#include "lowmt/decoding.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "kernels.hpp"
#include "lowmt/util.hpp"

namespace lowmt::nmt {
namespace {

using kernels::layer_norm;
using kernels::linear;
using M = Matrix<float>;
using StridedMap = Eigen::Map<const M, 0, Eigen::OuterStride<>>;

struct EncodedSource {
  std::vector<M> keys;    // per decoder layer, [S x d]
  std::vector<M> values;
};

class Inference {
 public:
  Inference(const Parameters<float>& p, const ModelConfig& cfg)
      : p_(p), cfg_(cfg), layout_(cfg), d_(cfg.d_model), H_(cfg.heads), dh_(cfg.head_dim()) {
    positions_ = sinusoidal_positions<float>(cfg.max_len, d_);
  }

  EncodedSource encode(std::span<const int> ids, int factor) const {
    const int S = static_cast<int>(ids.size());
    const float scale = std::sqrt(static_cast<float>(d_));
    const int td = cfg_.token_dim(), fd = cfg_.factor_dim;
    M x(S, d_);
    for (int s = 0; s < S; ++s) {
      x.row(s).head(td) = p_[ParamLayout::kSrcEmbed].row(ids[static_cast<std::size_t>(s)]) * scale;
      if (fd > 0) x.row(s).tail(fd) = p_[ParamLayout::kFactorEmbed].row(factor) * scale;
      x.row(s) += positions_.row(s);
    }
    M a, q, k, v, o, out, h;
    const float att_scale = 1.0f / std::sqrt(static_cast<float>(dh_));
    for (int l = 0; l < cfg_.enc_layers; ++l) {
      const auto idx = [&](int slot) { return layout_.enc(l, slot); };
      layer_norm<float>(x, p_[idx(ParamLayout::e_ln1_g)], p_[idx(ParamLayout::e_ln1_b)], a, nullptr);
      linear(a, p_[idx(ParamLayout::e_wq)], p_[idx(ParamLayout::e_bq)], q);
      linear(a, p_[idx(ParamLayout::e_wk)], p_[idx(ParamLayout::e_bk)], k);
      linear(a, p_[idx(ParamLayout::e_wv)], p_[idx(ParamLayout::e_bv)], v);
      o.resize(S, d_);
      M P;
      for (int hh = 0; hh < H_; ++hh) {
        P.noalias() = q.middleCols(hh * dh_, dh_) * k.middleCols(hh * dh_, dh_).transpose();
        P *= att_scale;
        for (int i = 0; i < S; ++i) kernels::masked_softmax_row<float>(P.row(i), [](Eigen::Index) { return true; });
        o.middleCols(hh * dh_, dh_).noalias() = P * v.middleCols(hh * dh_, dh_);
      }
      linear(o, p_[idx(ParamLayout::e_wo)], p_[idx(ParamLayout::e_bo)], out);
      x += out;
      layer_norm<float>(x, p_[idx(ParamLayout::e_ln2_g)], p_[idx(ParamLayout::e_ln2_b)], a, nullptr);
      linear(a, p_[idx(ParamLayout::e_w1)], p_[idx(ParamLayout::e_b1)], h);
      h = h.cwiseMax(0.0f);
      linear(h, p_[idx(ParamLayout::e_w2)], p_[idx(ParamLayout::e_b2)], out);
      x += out;
    }
    M mem;
    layer_norm<float>(x, p_[layout_.enc_norm_g()], p_[layout_.enc_norm_b()], mem, nullptr);
    EncodedSource e;
    for (int l = 0; l < cfg_.dec_layers; ++l) {
      M kk, vv;
      linear(mem, p_[layout_.dec(l, ParamLayout::d_ck)], p_[layout_.dec(l, ParamLayout::d_cbk)], kk);
      linear(mem, p_[layout_.dec(l, ParamLayout::d_cv)], p_[layout_.dec(l, ParamLayout::d_cbv)], vv);
      e.keys.push_back(std::move(kk));
      e.values.push_back(std::move(vv));
    }
    return e;
  }

  const ModelConfig& cfg() const { return cfg_; }
  const Parameters<float>& params() const { return p_; }
  const ParamLayout& layout() const { return layout_; }
  const M& positions() const { return positions_; }
  int d() const { return d_; }
  int heads() const { return H_; }
  int head_dim() const { return dh_; }

 private:
  const Parameters<float>& p_;
  const ModelConfig& cfg_;
  ParamLayout layout_;
  int d_, H_, dh_;
  M positions_;
};

/// Rows of in-progress hypotheses with per-layer self-attention caches.
class DecoderState {
 public:
  DecoderState(const Inference& inf, const std::vector<EncodedSource>& sources, std::vector<int> row_source,
               int capacity)
      : inf_(inf), sources_(sources), row_source_(std::move(row_source)), cap_(capacity) {
    const int L = inf.cfg().dec_layers;
    const auto R = static_cast<Eigen::Index>(row_source_.size());
    kc_.assign(static_cast<std::size_t>(L), M::Zero(R, static_cast<Eigen::Index>(cap_) * inf.d()));
    vc_.assign(static_cast<std::size_t>(L), M::Zero(R, static_cast<Eigen::Index>(cap_) * inf.d()));
  }

  int rows() const { return static_cast<int>(row_source_.size()); }
  int position() const { return t_; }

  /// Feeds one token per row at the current position; returns [rows x V] log-probabilities.
  M step(const std::vector<int>& tokens) {
    if (t_ >= cap_) throw RangeError("decoder ran past its position capacity");
    const auto& p = inf_.params();
    const auto& lay = inf_.layout();
    const int d = inf_.d(), H = inf_.heads(), dh = inf_.head_dim();
    const int R = rows();
    const float scale = std::sqrt(static_cast<float>(d));
    const float att_scale = 1.0f / std::sqrt(static_cast<float>(dh));
    M x(R, d);
    for (int r = 0; r < R; ++r) {
      x.row(r) = p[ParamLayout::kTgtEmbed].row(tokens[static_cast<std::size_t>(r)]) * scale + inf_.positions().row(t_);
    }
    M a, q, k, v, o(R, d), out, h;
    Eigen::VectorXf scores;
    for (int l = 0; l < inf_.cfg().dec_layers; ++l) {
      const auto idx = [&](int slot) { return lay.dec(l, slot); };
      auto& kc = kc_[static_cast<std::size_t>(l)];
      auto& vc = vc_[static_cast<std::size_t>(l)];
      // self-attention over positions 0..t
      layer_norm<float>(x, p[idx(ParamLayout::d_ln1_g)], p[idx(ParamLayout::d_ln1_b)], a, nullptr);
      linear(a, p[idx(ParamLayout::d_sq)], p[idx(ParamLayout::d_sbq)], q);
      linear(a, p[idx(ParamLayout::d_sk)], p[idx(ParamLayout::d_sbk)], k);
      linear(a, p[idx(ParamLayout::d_sv)], p[idx(ParamLayout::d_sbv)], v);
      for (int r = 0; r < R; ++r) {
        kc.row(r).segment(static_cast<Eigen::Index>(t_) * d, d) = k.row(r);
        vc.row(r).segment(static_cast<Eigen::Index>(t_) * d, d) = v.row(r);
        for (int hh = 0; hh < H; ++hh) {
          StridedMap K(kc.row(r).data() + hh * dh, t_ + 1, dh, Eigen::OuterStride<>(d));
          StridedMap Vv(vc.row(r).data() + hh * dh, t_ + 1, dh, Eigen::OuterStride<>(d));
          scores.noalias() = K * q.row(r).segment(hh * dh, dh).transpose();
          scores *= att_scale;
          kernels::masked_softmax_row<float>(scores, [](Eigen::Index) { return true; });
          o.row(r).segment(hh * dh, dh).noalias() = scores.transpose() * Vv;
        }
      }
      linear(o, p[idx(ParamLayout::d_so)], p[idx(ParamLayout::d_sbo)], out);
      x += out;
      // cross-attention over the encoded source
      layer_norm<float>(x, p[idx(ParamLayout::d_ln2_g)], p[idx(ParamLayout::d_ln2_b)], a, nullptr);
      linear(a, p[idx(ParamLayout::d_cq)], p[idx(ParamLayout::d_cbq)], q);
      for (int r = 0; r < R; ++r) {
        const auto& src = sources_[static_cast<std::size_t>(row_source_[static_cast<std::size_t>(r)])];
        const M& K = src.keys[static_cast<std::size_t>(l)];
        const M& Vv = src.values[static_cast<std::size_t>(l)];
        for (int hh = 0; hh < H; ++hh) {
          scores.noalias() = K.middleCols(hh * dh, dh) * q.row(r).segment(hh * dh, dh).transpose();
          scores *= att_scale;
          kernels::masked_softmax_row<float>(scores, [](Eigen::Index) { return true; });
          o.row(r).segment(hh * dh, dh).noalias() = scores.transpose() * Vv.middleCols(hh * dh, dh);
        }
      }
      linear(o, p[idx(ParamLayout::d_co)], p[idx(ParamLayout::d_cbo)], out);
      x += out;
      layer_norm<float>(x, p[idx(ParamLayout::d_ln3_g)], p[idx(ParamLayout::d_ln3_b)], a, nullptr);
      linear(a, p[idx(ParamLayout::d_w1)], p[idx(ParamLayout::d_b1)], h);
      h = h.cwiseMax(0.0f);
      linear(h, p[idx(ParamLayout::d_w2)], p[idx(ParamLayout::d_b2)], out);
      x += out;
    }
    M z, logits;
    layer_norm<float>(x, p[lay.dec_norm_g()], p[lay.dec_norm_b()], z, nullptr);
    linear(z, p[lay.out_w()], p[lay.out_b()], logits);
    for (int r = 0; r < R; ++r) {
      auto row = logits.row(r);
      const float mx = row.maxCoeff();
      const float lse = mx + std::log((row.array() - mx).exp().sum());
      row.array() -= lse;
    }
    ++t_;
    return logits;
  }

  /// Keeps rows `parents` (in that order), duplicating caches as needed.
  void reorder(const std::vector<int>& parents) {
    const auto used = static_cast<Eigen::Index>(t_) * inf_.d();
    for (auto* caches : {&kc_, &vc_}) {
      for (auto& c : *caches) {
        M next(static_cast<Eigen::Index>(parents.size()), c.cols());
        for (std::size_t i = 0; i < parents.size(); ++i) {
          next.row(static_cast<Eigen::Index>(i)).head(used) = c.row(parents[i]).head(used);
        }
        c = std::move(next);
      }
    }
    std::vector<int> src;
    for (int pr : parents) src.push_back(row_source_[static_cast<std::size_t>(pr)]);
    row_source_ = std::move(src);
  }

 private:
  const Inference& inf_;
  const std::vector<EncodedSource>& sources_;
  std::vector<int> row_source_;
  int cap_;
  int t_ = 0;
  std::vector<M> kc_, vc_;
};

std::vector<int> source_ids(const SubwordModel& sw, const ModelConfig& cfg, std::string_view text) {
  auto ids = sw.encode(text);
  const auto limit = static_cast<std::size_t>(cfg.max_len - 1);
  if (ids.size() > limit) ids.resize(limit);
  for (int id : ids) {
    if (id >= cfg.token_vocab) throw RangeError("subword model does not match the checkpoint vocabulary");
  }
  ids.push_back(SubwordModel::eos_id);
  return ids;
}

int effective_max_len(const ModelConfig& cfg, int requested) {
  const int cap = cfg.max_len - 1;
  return requested <= 0 ? cap : std::min(requested, cap);
}

int argmax_lowest(const M& logprobs, int row) {
  const auto r = logprobs.row(row);
  int best = 0;
  for (int j = 1; j < r.size(); ++j) {
    if (r(j) > r(best)) best = j;
  }
  return best;
}

Translation finish(const SubwordModel& sw, std::vector<int> ids, double score, bool truncated) {
  Translation t;
  t.ids = std::move(ids);
  t.text = sw.decode(t.ids);
  // byte tokens can spell tabs and line breaks; outputs must stay one TSV field
  std::replace_if(t.text.begin(), t.text.end(), [](char c) { return c == '\t' || c == '\n' || c == '\r'; }, ' ');
  t.score = score;
  t.truncated = truncated;
  return t;
}

Translation greedy(const Inference& inf, const SubwordModel& sw, std::vector<EncodedSource>& srcs, int max_len) {
  DecoderState st(inf, srcs, {0}, max_len + 1);
  std::vector<int> out;
  int token = SubwordModel::bos_id;
  double score = 0;
  for (int step = 0; step < max_len; ++step) {
    const M lp = st.step({token});
    token = argmax_lowest(lp, 0);
    score += lp(0, token);
    if (token == SubwordModel::eos_id) return finish(sw, std::move(out), score, false);
    out.push_back(token);
  }
  return finish(sw, std::move(out), score, true);
}

Translation beam(const Inference& inf, const SubwordModel& sw, std::vector<EncodedSource>& srcs, int max_len,
                 int k, double alpha) {
  struct Hyp {
    std::vector<int> ids;
    double score;
  };
  struct Done {
    std::vector<int> ids;
    double score;
    double norm;
  };
  struct Cand {
    double score;
    int row;
    int token;
  };
  const auto normalized = [&](double score, std::size_t len) {
    return score / std::pow(static_cast<double>(std::max<std::size_t>(len, 1)), alpha);
  };
  DecoderState st(inf, srcs, {0}, max_len + 1);
  std::vector<Hyp> active{{{}, 0.0}};
  std::vector<Done> done;
  std::vector<int> feed{SubwordModel::bos_id};
  for (int step = 0; step < max_len && !active.empty(); ++step) {
    const M lp = st.step(feed);
    std::vector<Cand> cands;
    cands.reserve(active.size() * static_cast<std::size_t>(lp.cols()));
    for (int r = 0; r < static_cast<int>(active.size()); ++r) {
      for (int v = 0; v < lp.cols(); ++v) cands.push_back({active[static_cast<std::size_t>(r)].score + lp(r, v), r, v});
    }
    const std::size_t take = std::min(cands.size(), static_cast<std::size_t>(2 * k));
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(take), cands.end(),
                      [](const Cand& a, const Cand& b) {
                        if (a.score != b.score) return a.score > b.score;
                        if (a.row != b.row) return a.row < b.row;
                        return a.token < b.token;
                      });
    std::vector<Hyp> next;
    std::vector<int> parents;
    feed.clear();
    for (std::size_t i = 0; i < take && static_cast<int>(next.size()) < k; ++i) {
      const auto& c = cands[i];
      const auto& parent = active[static_cast<std::size_t>(c.row)];
      if (c.token == SubwordModel::eos_id) {
        if (static_cast<int>(done.size()) < k) done.push_back({parent.ids, c.score, normalized(c.score, parent.ids.size() + 1)});
        continue;
      }
      Hyp h{parent.ids, c.score};
      h.ids.push_back(c.token);
      next.push_back(std::move(h));
      parents.push_back(c.row);
      feed.push_back(c.token);
    }
    if (static_cast<int>(done.size()) >= k) break;
    active = std::move(next);
    if (!active.empty()) st.reorder(parents);
  }
  if (!done.empty()) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < done.size(); ++i) {
      if (done[i].norm > done[best].norm) best = i;
    }
    return finish(sw, std::move(done[best].ids), done[best].score, false);
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < active.size(); ++i) {
    if (normalized(active[i].score, active[i].ids.size()) > normalized(active[best].score, active[best].ids.size())) {
      best = i;
    }
  }
  if (active.empty()) return finish(sw, {}, 0.0, true);
  return finish(sw, std::move(active[best].ids), active[best].score, true);
}

}  // namespace

Translation translate(const Parameters<float>& params, const ModelConfig& cfg, const SubwordModel& subword,
                      std::string_view src_text, const LangId& tgt_lang, const DecodeOptions& opts) {
  const int factor = cfg.factor_of(tgt_lang);
  Inference inf(params, cfg);
  std::vector<EncodedSource> srcs;
  srcs.push_back(inf.encode(source_ids(subword, cfg, src_text), factor));
  const int max_len = effective_max_len(cfg, opts.max_len);
  if (opts.mode == DecodeMode::greedy) return greedy(inf, subword, srcs, max_len);
  if (opts.beam_size < 1) throw ConfigError("beam_size must be at least 1");
  return beam(inf, subword, srcs, max_len, opts.beam_size, opts.length_alpha);
}

std::vector<Translation> translate_batch(const Parameters<float>& params, const ModelConfig& cfg,
                                         const SubwordModel& subword, std::span<const std::string> sources,
                                         std::span<const LangId> tgt_langs, int max_len_req, int batch_rows) {
  if (tgt_langs.size() != 1 && tgt_langs.size() != sources.size()) {
    throw ConfigError("translate_batch needs one target language or one per source");
  }
  Inference inf(params, cfg);
  const int max_len = effective_max_len(cfg, max_len_req);
  std::vector<Translation> results(sources.size());
  const std::size_t chunk = static_cast<std::size_t>(std::max(1, batch_rows));
  for (std::size_t begin = 0; begin < sources.size(); begin += chunk) {
    const std::size_t end = std::min(sources.size(), begin + chunk);
    std::vector<EncodedSource> srcs;
    std::vector<int> rows;
    for (std::size_t i = begin; i < end; ++i) {
      const auto& lang = tgt_langs.size() == 1 ? tgt_langs[0] : tgt_langs[i];
      srcs.push_back(inf.encode(source_ids(subword, cfg, sources[i]), cfg.factor_of(lang)));
      rows.push_back(static_cast<int>(i - begin));
    }
    DecoderState st(inf, srcs, rows, max_len + 1);
    std::vector<std::vector<int>> out(end - begin);
    std::vector<double> score(end - begin, 0.0);
    std::vector<int> feed(rows.size(), SubwordModel::bos_id);
    std::vector<int> alive = rows;  // sentence index (relative) per row
    for (int step = 0; step < max_len && !alive.empty(); ++step) {
      const M lp = st.step(feed);
      std::vector<int> keep, next_feed, next_alive;
      for (int r = 0; r < static_cast<int>(alive.size()); ++r) {
        const int s = alive[static_cast<std::size_t>(r)];
        const int tok = argmax_lowest(lp, r);
        score[static_cast<std::size_t>(s)] += lp(r, tok);
        if (tok == SubwordModel::eos_id) {
          results[begin + static_cast<std::size_t>(s)] = finish(subword, out[static_cast<std::size_t>(s)], score[static_cast<std::size_t>(s)], false);
          continue;
        }
        out[static_cast<std::size_t>(s)].push_back(tok);
        keep.push_back(r);
        next_feed.push_back(tok);
        next_alive.push_back(s);
      }
      if (keep.size() != alive.size() && !keep.empty()) st.reorder(keep);
      alive = std::move(next_alive);
      feed = std::move(next_feed);
    }
    for (int s : alive) {
      results[begin + static_cast<std::size_t>(s)] =
          finish(subword, out[static_cast<std::size_t>(s)], score[static_cast<std::size_t>(s)], true);
    }
  }
  return results;
}

Matrix<float> forced_decode_logprobs(const Parameters<float>& params, const ModelConfig& cfg,
                                     std::span<const int> src_ids, int factor, std::span<const int> tgt_in) {
  Inference inf(params, cfg);
  std::vector<EncodedSource> srcs;
  srcs.push_back(inf.encode(src_ids, factor));
  DecoderState st(inf, srcs, {0}, static_cast<int>(tgt_in.size()));
  M out(static_cast<Eigen::Index>(tgt_in.size()), cfg.token_vocab);
  for (std::size_t t = 0; t < tgt_in.size(); ++t) out.row(static_cast<Eigen::Index>(t)) = st.step({tgt_in[t]}).row(0);
  return out;
}

}  // namespace lowmt::nmt
