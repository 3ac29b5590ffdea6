#include "riskcast/net.hpp"

#include <cmath>

namespace riskcast::net {

void ModelConfig::validate() const {
  auto positive = [](int v, const char* what) {
    if (v < 1) throw InputError(std::string("model config: ") + what + " must be >= 1");
  };
  positive(feature_dim, "feature_dim");
  positive(context_dim, "context_dim");
  positive(object_dim, "object_dim");
  positive(graph_dim, "graph_dim");
  positive(temporal_hidden, "temporal_hidden");
  positive(accident_hidden, "accident_hidden");
  positive(heads, "heads");
  positive(obj_attn_hidden, "obj_attn_hidden");
  positive(head_hidden, "head_hidden");
  positive(graph_layers, "graph_layers");
  if (dropout1 < 0.0 || dropout1 >= 1.0 || dropout2 < 0.0 || dropout2 >= 1.0)
    throw InputError("model config: dropout rates must lie in [0, 1)");
  if (smooth_mix < 0.0 || smooth_mix > 1.0)
    throw InputError("model config: smooth_mix must lie in [0, 1]");
  if (smooth_fields.empty()) throw InputError("model config: smooth_fields must be nonempty");
  for (int f : smooth_fields)
    if (f < 1) throw InputError("model config: smooth receptive fields must be >= 1");
  edge.validate();
}

int ParamSet::add(const std::string& name, int rows, int cols) {
  names_.push_back(name);
  values_.emplace_back(Eigen::MatrixXd::Zero(rows, cols));
  return static_cast<int>(values_.size()) - 1;
}

int ParamSet::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return static_cast<int>(i);
  return -1;
}

Eigen::MatrixXd& ParamSet::at(const std::string& name) {
  const int i = index_of(name);
  if (i < 0) throw InputError("unknown parameter: " + name);
  return values_[i];
}

const Eigen::MatrixXd& ParamSet::at(const std::string& name) const {
  const int i = index_of(name);
  if (i < 0) throw InputError("unknown parameter: " + name);
  return values_[i];
}

std::size_t ParamSet::total_size() const {
  std::size_t n = 0;
  for (const auto& m : values_) n += static_cast<std::size_t>(m.size());
  return n;
}

std::vector<Eigen::MatrixXd> ParamSet::zeros_like() const {
  std::vector<Eigen::MatrixXd> g;
  g.reserve(values_.size());
  for (const auto& m : values_) g.emplace_back(Eigen::MatrixXd::Zero(m.rows(), m.cols()));
  return g;
}

namespace {

double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

void init_matrix(Eigen::MatrixXd& m, std::mt19937_64& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = a * (2.0 * unit_uniform(rng) - 1.0);
}

}  // namespace

Eigen::MatrixXd smoothing_operator(int frames, int field) {
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(frames, frames);
  for (int t = 0; t < frames; ++t) {
    const int completed = (t + 1) / field;  // trailing blocks finished by frame t
    if (completed >= 1) {
      const int begin = (completed - 1) * field;
      for (int s = begin; s < begin + field; ++s) p(s, t) = 1.0 / field;
    } else {
      for (int s = 0; s <= t; ++s) p(s, t) = 1.0 / (t + 1);
    }
  }
  return p;
}

Model::Model(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  const int D = cfg_.feature_dim;
  const int A = cfg_.context_dim * cfg_.heads;  // q/k/v projection width
  const int F = cfg_.fused_dim();
  const int HT = cfg_.temporal_hidden;
  const int HA = cfg_.accident_hidden;

  idx_.ctx_q = params_.add("ctx.q", A, D);
  idx_.ctx_qb = params_.add("ctx.q_bias", A, 1);
  idx_.ctx_k = params_.add("ctx.k", A, D);
  idx_.ctx_kb = params_.add("ctx.k_bias", A, 1);
  idx_.ctx_v = params_.add("ctx.v", A, D);
  idx_.ctx_vb = params_.add("ctx.v_bias", A, 1);

  idx_.obj_theta = params_.add("obj.theta", cfg_.obj_attn_hidden, D);
  idx_.obj_b = params_.add("obj.bias", cfg_.obj_attn_hidden, 1);
  idx_.obj_beta = params_.add("obj.beta", cfg_.obj_attn_hidden, 1);
  idx_.obj_val = params_.add("obj.value", cfg_.object_dim, D);
  idx_.obj_vb = params_.add("obj.value_bias", cfg_.object_dim, 1);

  for (int l = 0; l < cfg_.graph_layers; ++l) {
    const int in = l == 0 ? cfg_.node_dim() : cfg_.graph_dim;
    const std::string tag = "graph.l" + std::to_string(l);
    idx_.graph_self.push_back(params_.add(tag + ".self", cfg_.graph_dim, in));
    idx_.graph_nbr.push_back(params_.add(tag + ".nbr", cfg_.graph_dim, in));
    idx_.graph_bias.push_back(params_.add(tag + ".bias", cfg_.graph_dim, 1));
  }

  idx_.fuse_wm = params_.add("fuse.wm", F, 1);

  idx_.gru_wz = params_.add("gru.wz", HT, F);
  idx_.gru_uz = params_.add("gru.uz", HT, HT);
  idx_.gru_bz = params_.add("gru.bz", HT, 1);
  idx_.gru_wr = params_.add("gru.wr", HT, F);
  idx_.gru_ur = params_.add("gru.ur", HT, HT);
  idx_.gru_br = params_.add("gru.br", HT, 1);
  idx_.gru_wh = params_.add("gru.wh", HT, F);
  idx_.gru_uh = params_.add("gru.uh", HT, HT);
  idx_.gru_bh = params_.add("gru.bh", HT, 1);

  for (std::size_t k = 0; k < cfg_.smooth_fields.size(); ++k)
    idx_.smooth_mix.push_back(params_.add("smooth.mix" + std::to_string(k), HT, HT));

  idx_.head_l1 = params_.add("head.l1", cfg_.head_hidden, HT);
  idx_.head_l1b = params_.add("head.l1_bias", cfg_.head_hidden, 1);
  idx_.head_l2 = params_.add("head.l2", 2, cfg_.head_hidden);
  idx_.head_l2b = params_.add("head.l2_bias", 2, 1);

  idx_.acc_in = params_.add("acc.in", HA, 4);
  idx_.acc_inb = params_.add("acc.in_bias", HA, 1);
  idx_.acc_wz = params_.add("acc.wz", HA, HA);
  idx_.acc_uz = params_.add("acc.uz", HA, HA);
  idx_.acc_bz = params_.add("acc.bz", HA, 1);
  idx_.acc_wr = params_.add("acc.wr", HA, HA);
  idx_.acc_ur = params_.add("acc.ur", HA, HA);
  idx_.acc_br = params_.add("acc.br", HA, 1);
  idx_.acc_wh = params_.add("acc.wh", HA, HA);
  idx_.acc_uh = params_.add("acc.uh", HA, HA);
  idx_.acc_bh = params_.add("acc.bh", HA, 1);
  idx_.acc_out = params_.add("acc.out", 2, HA);
  idx_.acc_outb = params_.add("acc.out_bias", 2, 1);

  std::mt19937_64 rng(derive_seed(seed, 0x6d6f64ULL));
  for (int i = 0; i < params_.count(); ++i) {
    const std::string& name = params_.name(i);
    if (name.ends_with("_bias") || name == "obj.bias" || name.ends_with(".bz") ||
        name.ends_with(".br") || name.ends_with(".bh") || name.find(".bias") != std::string::npos) {
      continue;  // biases start at zero
    }
    if (name.rfind("smooth.mix", 0) == 0) {
      params_.at(i).setIdentity();
      continue;
    }
    init_matrix(params_.at(i), rng);
    // The feature attention emits softmax-weighted features whose entries
    // scale like 1/F; the recurrence's input projections start F times larger
    // so the fused signal enters at unit scale.
    if (name == "gru.wz" || name == "gru.wr" || name == "gru.wh")
      params_.at(i) *= static_cast<double>(F);
    // Layers feeding a tanh directly from raw features start well inside the
    // linear range; plain Xavier leaves them saturated at typical feature
    // scales.
    if (name == "obj.theta" || name.rfind("graph.l", 0) == 0)
      params_.at(i) *= 0.3;
  }
}

ad::Var Model::p(ad::Tape& t, int index, std::vector<Eigen::MatrixXd>* grads) const {
  return t.param(&params_.at(index), grads ? &(*grads)[index] : nullptr);
}

ad::Var Model::context_attention(ad::Tape& t, ad::Var context,
                                 std::vector<Eigen::MatrixXd>* grads) const {
  const int dg = cfg_.context_dim;  // per-head width
  ad::Var q = t.add(t.matmul(p(t, idx_.ctx_q, grads), context), p(t, idx_.ctx_qb, grads));
  ad::Var k = t.add(t.matmul(p(t, idx_.ctx_k, grads), context), p(t, idx_.ctx_kb, grads));
  ad::Var v = t.add(t.matmul(p(t, idx_.ctx_v, grads), context), p(t, idx_.ctx_vb, grads));
  ad::Var out;
  for (int g = 0; g < cfg_.heads; ++g) {
    ad::Var qg = t.rows(q, g * dg, dg);
    ad::Var kg = t.rows(k, g * dg, dg);
    ad::Var vg = t.rows(v, g * dg, dg);
    ad::Var logit = t.affine(t.matmul(t.transpose(qg), kg), 1.0 / std::sqrt(double(dg)));
    ad::Var attn = t.softmax_col(logit);  // single token: weight 1
    ad::Var head = t.matmul(vg, attn);
    out = g == 0 ? head : t.add(out, head);
  }
  return out;
}

ad::Var Model::object_attention(ad::Tape& t, const scene::FrameObservation& frame,
                                std::vector<Eigen::MatrixXd>* grads) const {
  std::vector<int> live;
  for (int n = 0; n < frame.num_objects(); ++n)
    if (frame.present[n]) live.push_back(n);
  if (live.empty()) return t.constant(Eigen::MatrixXd::Zero(cfg_.object_dim, 1));

  Eigen::MatrixXd op(cfg_.feature_dim, static_cast<int>(live.size()));
  for (std::size_t c = 0; c < live.size(); ++c) op.col(c) = frame.objects[live[c]];
  ad::Var objs = t.constant(std::move(op));
  ad::Var ones_row = t.constant(Eigen::MatrixXd::Ones(1, static_cast<int>(live.size())));

  ad::Var scores_mat =
      t.tanh(t.add(t.matmul(p(t, idx_.obj_theta, grads), objs),
                   t.matmul(p(t, idx_.obj_b, grads), ones_row)));
  ad::Var logits = t.matmul(t.transpose(scores_mat), p(t, idx_.obj_beta, grads));  // k x 1
  ad::Var weights = t.softmax_col(logits);
  ad::Var values = t.add(t.matmul(p(t, idx_.obj_val, grads), objs),
                         t.matmul(p(t, idx_.obj_vb, grads), ones_row));
  return t.matmul(values, weights);
}

ad::Var Model::graph_encode(ad::Tape& t, const geometry::CollisionGraph& graph,
                            std::vector<Eigen::MatrixXd>* grads) const {
  const int n = static_cast<int>(graph.present.size());
  if (n == 0 || graph.num_present < 2)
    return t.constant(Eigen::MatrixXd::Zero(cfg_.graph_dim, 1));

  ad::Var x = t.constant(graph.node_features.transpose());    // node_dim x N
  ad::Var wT = t.constant(graph.weights.transpose());         // neighbor mixing
  ad::Var ones_row = t.constant(Eigen::MatrixXd::Ones(1, n));

  ad::Var h = x;
  for (int l = 0; l < cfg_.graph_layers; ++l) {
    ad::Var self = t.matmul(p(t, idx_.graph_self[l], grads), h);
    ad::Var nbr = t.matmul(p(t, idx_.graph_nbr[l], grads), t.matmul(h, wT));
    ad::Var bias = t.matmul(p(t, idx_.graph_bias[l], grads), ones_row);
    h = t.tanh(t.add(t.add(self, nbr), bias));
  }

  // Weight-respecting aggregation: node strength = half the sum of incident
  // edge weights; strengths over present nodes sum to 1.
  Eigen::MatrixXd strength(n, 1);
  for (int i = 0; i < n; ++i)
    strength(i, 0) = 0.5 * (graph.weights.row(i).sum() + graph.weights.col(i).sum());
  return t.matmul(h, t.constant(std::move(strength)));
}

ad::Var Model::smooth(ad::Tape& t, ad::Var seq, std::vector<Eigen::MatrixXd>* grads) const {
  const int frames = static_cast<int>(t.value(seq).cols());
  for (int f : cfg_.smooth_fields)
    if (frames < f)
      throw ComputeError("smooth: sequence of " + std::to_string(frames) +
                         " frames is shorter than receptive field " + std::to_string(f) +
                         "; choose smaller fields");
  ad::Var acc;
  for (std::size_t k = 0; k < cfg_.smooth_fields.size(); ++k) {
    ad::Var pooled = t.matmul(seq, t.constant(smoothing_operator(frames, cfg_.smooth_fields[k])));
    ad::Var mixed = t.matmul(p(t, idx_.smooth_mix[k], grads), pooled);
    acc = k == 0 ? mixed : t.add(acc, mixed);
  }
  ad::Var mean_scales = t.affine(acc, 1.0 / static_cast<double>(cfg_.smooth_fields.size()));
  return t.add(seq, t.affine(mean_scales, cfg_.smooth_mix));
}

Eigen::MatrixXd Model::smooth_eval(const Eigen::MatrixXd& seq) const {
  ad::Tape t;
  return t.value(smooth(t, t.constant(seq), nullptr));
}

ad::Var Model::gru_cell(ad::Tape& t, ad::Var x, ad::Var h, int wz, int uz, int bz, int wr, int ur,
                        int br, int wh, int uh, int bh,
                        std::vector<Eigen::MatrixXd>* grads) const {
  ad::Var z = t.sigmoid(t.add(t.add(t.matmul(p(t, wz, grads), x), t.matmul(p(t, uz, grads), h)),
                              p(t, bz, grads)));
  ad::Var r = t.sigmoid(t.add(t.add(t.matmul(p(t, wr, grads), x), t.matmul(p(t, ur, grads), h)),
                              p(t, br, grads)));
  ad::Var cand = t.tanh(t.add(
      t.add(t.matmul(p(t, wh, grads), x), t.matmul(p(t, uh, grads), t.cwise_mul(r, h))),
      p(t, bh, grads)));
  // h' = (1 - z) . h + z . cand
  return t.add(t.cwise_mul(t.affine(z, -1.0, 1.0), h), t.cwise_mul(z, cand));
}

ad::Var Model::dropout(ad::Tape& t, ad::Var x, double rate, bool training,
                       std::mt19937_64* rng) const {
  if (!training || rate <= 0.0) return x;
  const Eigen::MatrixXd& v = t.value(x);
  Eigen::MatrixXd mask(v.rows(), v.cols());
  const double keep = 1.0 - rate;
  for (Eigen::Index r = 0; r < v.rows(); ++r)
    for (Eigen::Index c = 0; c < v.cols(); ++c)
      mask(r, c) = unit_uniform(*rng) < keep ? 1.0 / keep : 0.0;
  return t.cwise_mul(x, t.constant(std::move(mask)));
}

ad::Var Model::accident_video_head(ad::Tape& t, ad::Var scores,
                                   std::vector<Eigen::MatrixXd>* grads) const {
  const int frames = static_cast<int>(t.value(scores).rows());
  ad::Var mean = t.affine(t.sum(scores), 1.0 / frames);
  ad::Var mean_sq = t.affine(t.sum(t.cwise_mul(scores, scores)), 1.0 / frames);
  ad::Var variance = t.sub(mean_sq, t.cwise_mul(mean, mean));  // population convention
  ad::Var mx = t.max_entries(scores);
  ad::Var range = t.sub(scores, t.matmul(t.constant(Eigen::MatrixXd::Ones(frames, 1)), mean));

  ad::Var h = t.constant(Eigen::MatrixXd::Zero(cfg_.accident_hidden, 1));
  for (int f = 0; f < frames; ++f) {
    ad::Var row = t.vstack({mean, variance, mx, t.rows(range, f, 1)});
    ad::Var u = t.add(t.matmul(p(t, idx_.acc_in, grads), row), p(t, idx_.acc_inb, grads));
    h = gru_cell(t, u, h, idx_.acc_wz, idx_.acc_uz, idx_.acc_bz, idx_.acc_wr, idx_.acc_ur,
                 idx_.acc_br, idx_.acc_wh, idx_.acc_uh, idx_.acc_bh, grads);
  }
  ad::Var logits = t.add(t.matmul(p(t, idx_.acc_out, grads), h), p(t, idx_.acc_outb, grads));
  return t.rows(t.softmax_col(logits), 1, 1);
}

Model::Outputs Model::forward(ad::Tape& t, const SampleView& view,
                              std::vector<Eigen::MatrixXd>* grads, bool training,
                              std::mt19937_64* rng) const {
  const scene::VideoSample& s = *view.sample;
  const int frames = s.num_frames();
  if (frames == 0) throw ComputeError("forward: sample has no frames");
  if (cfg_.collision && (!view.graphs || static_cast<int>(view.graphs->size()) != frames))
    throw ComputeError("forward: collision branch enabled but graphs are missing");
  if (static_cast<int>(s.frames[0].context.size()) != cfg_.feature_dim)
    throw ComputeError("forward: sample feature dim " +
                       std::to_string(s.frames[0].context.size()) +
                       " does not match model feature dim " + std::to_string(cfg_.feature_dim));
  if (training && !rng) throw ComputeError("forward: training mode requires an rng");

  const int F = cfg_.fused_dim();
  std::vector<ad::Var> hidden_cols;
  hidden_cols.reserve(frames);
  ad::Var h = t.constant(Eigen::MatrixXd::Zero(cfg_.temporal_hidden, 1));

  for (int f = 0; f < frames; ++f) {
    const scene::FrameObservation& fr = s.frames[f];
    ad::Var ic = cfg_.context_attn
                     ? context_attention(t, t.constant(Eigen::MatrixXd(fr.context)), grads)
                     : t.constant(Eigen::MatrixXd::Zero(cfg_.context_dim, 1));
    ad::Var io = cfg_.object_attn ? object_attention(t, fr, grads)
                                  : t.constant(Eigen::MatrixXd::Zero(cfg_.object_dim, 1));
    ad::Var gv = cfg_.collision ? graph_encode(t, (*view.graphs)[f], grads)
                                : t.constant(Eigen::MatrixXd::Zero(cfg_.graph_dim, 1));
    ad::Var fused = t.vstack({ic, io, gv});
    ad::Var wf;
    if (cfg_.temporal_attn) {
      ad::Var attn = t.softmax_col(t.cwise_mul(t.tanh(fused), p(t, idx_.fuse_wm, grads)));
      wf = t.cwise_mul(fused, attn);
    } else {
      // Ablated attention path: softmax over a zeroed score vector, i.e.
      // uniform weights.
      wf = t.affine(fused, 1.0 / F);
    }
    h = gru_cell(t, wf, h, idx_.gru_wz, idx_.gru_uz, idx_.gru_bz, idx_.gru_wr, idx_.gru_ur,
                 idx_.gru_br, idx_.gru_wh, idx_.gru_uh, idx_.gru_bh, grads);
    hidden_cols.push_back(h);
  }

  ad::Var seq = t.hstack(hidden_cols);
  ad::Var smoothed = cfg_.smooth ? smooth(t, seq, grads) : seq;

  std::vector<ad::Var> score_rows;
  score_rows.reserve(frames);
  for (int f = 0; f < frames; ++f) {
    ad::Var xcol = t.col(smoothed, f);
    ad::Var d1 = dropout(t, xcol, cfg_.dropout1, training, rng);
    ad::Var a1 =
        t.tanh(t.add(t.matmul(p(t, idx_.head_l1, grads), d1), p(t, idx_.head_l1b, grads)));
    ad::Var d2 = dropout(t, a1, cfg_.dropout2, training, rng);
    ad::Var logits =
        t.add(t.matmul(p(t, idx_.head_l2, grads), d2), p(t, idx_.head_l2b, grads));
    score_rows.push_back(t.rows(t.softmax_col(logits), 1, 1));
  }
  ad::Var scores = t.vstack(score_rows);

  ad::Var lp;
  if (!cfg_.accident_head) {
    lp = t.max_entries(scores);
  } else if (cfg_.accident_from_scores) {
    lp = accident_video_head(t, scores, grads);
  } else {
    // Alternative: feature-axis statistics of the hidden sequence.
    const int HT = cfg_.temporal_hidden;
    ad::Var hcur = t.constant(Eigen::MatrixXd::Zero(cfg_.accident_hidden, 1));
    for (int f = 0; f < frames; ++f) {
      ad::Var xcol = t.col(smoothed, f);
      ad::Var mean = t.affine(t.sum(xcol), 1.0 / HT);
      ad::Var var = t.sub(t.affine(t.sum(t.cwise_mul(xcol, xcol)), 1.0 / HT),
                          t.cwise_mul(mean, mean));
      ad::Var mx = t.max_entries(xcol);
      ad::Var row = t.vstack({mean, var, mx, t.sub(mx, mean)});
      ad::Var u = t.add(t.matmul(p(t, idx_.acc_in, grads), row), p(t, idx_.acc_inb, grads));
      hcur = gru_cell(t, u, hcur, idx_.acc_wz, idx_.acc_uz, idx_.acc_bz, idx_.acc_wr, idx_.acc_ur,
                      idx_.acc_br, idx_.acc_wh, idx_.acc_uh, idx_.acc_bh, grads);
    }
    ad::Var logits =
        t.add(t.matmul(p(t, idx_.acc_out, grads), hcur), p(t, idx_.acc_outb, grads));
    lp = t.rows(t.softmax_col(logits), 1, 1);
  }
  return Outputs{scores, lp};
}

RiskCurve Model::predict(const scene::VideoSample& sample,
                         const std::vector<geometry::CollisionGraph>* graphs) const {
  ad::Tape t;
  SampleView view{&sample, graphs};
  Outputs out = forward(t, view, nullptr, false, nullptr);
  RiskCurve curve;
  curve.scores = t.value(out.scores).col(0);
  curve.video_prob = t.scalar_value(out.video_prob);
  return curve;
}

}  // namespace riskcast::net
