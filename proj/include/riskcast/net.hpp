#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "riskcast/geometry.hpp"
#include "riskcast/scene.hpp"
#include "riskcast/tape.hpp"

namespace riskcast::net {

struct ModelConfig {
  int feature_dim = 16;       // D, must match the dataset
  int context_dim = 512;      // H_c
  int object_dim = 256;       // O_o
  int graph_dim = 256;        // F_d
  int temporal_hidden = 512;  // H_T
  int accident_hidden = 32;   // H_A
  int heads = 8;
  int obj_attn_hidden = 128;
  int head_hidden = 64;
  int graph_layers = 2;
  double dropout1 = 0.5;
  double dropout2 = 0.1;
  std::vector<int> smooth_fields = {20, 10, 5};
  double smooth_mix = 0.15;

  // Module toggles (ablation rows).
  bool context_attn = true;
  bool object_attn = true;
  bool collision = true;
  bool temporal_attn = true;
  bool smooth = true;
  bool accident_head = true;

  geometry::GraphMode collision_mode = geometry::GraphMode::k3D;
  geometry::EdgeWeightConfig edge;

  // Accident module input: per-frame score statistics over the time axis
  // (default) or feature-axis statistics of the hidden sequence.
  bool accident_from_scores = true;

  int fused_dim() const { return context_dim + object_dim + graph_dim; }
  int node_dim() const { return 2 * feature_dim; }
  void validate() const;
};

struct RiskCurve {
  Eigen::VectorXd scores;  // length T, each in [0, 1]
  double video_prob = 0.0;
};

// Ordered, named parameter arrays. Order is the checkpoint field order.
class ParamSet {
 public:
  int add(const std::string& name, int rows, int cols);
  int index_of(const std::string& name) const;  // -1 when absent
  Eigen::MatrixXd& at(int idx) { return values_[idx]; }
  const Eigen::MatrixXd& at(int idx) const { return values_[idx]; }
  Eigen::MatrixXd& at(const std::string& name);
  const Eigen::MatrixXd& at(const std::string& name) const;
  const std::string& name(int idx) const { return names_[idx]; }
  int count() const { return static_cast<int>(values_.size()); }
  std::size_t total_size() const;

  // Parallel structure holding gradients (same shapes, zero).
  std::vector<Eigen::MatrixXd> zeros_like() const;

 private:
  std::vector<std::string> names_;
  std::vector<Eigen::MatrixXd> values_;
};

// Bundles per-frame observation pointers so forward passes need not copy.
struct SampleView {
  const scene::VideoSample* sample = nullptr;
  const std::vector<geometry::CollisionGraph>* graphs = nullptr;  // null when collision off
};

class Model {
 public:
  Model(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

  struct Outputs {
    ad::Var scores;      // T x 1 probabilities
    ad::Var video_prob;  // 1 x 1
  };

  // Builds the full forward pass on the tape. When training is true, dropout
  // masks are drawn from *rng (caller controls determinism); in evaluation
  // mode dropout is identity.
  Outputs forward(ad::Tape& t, const SampleView& view, std::vector<Eigen::MatrixXd>* grads,
                  bool training, std::mt19937_64* rng) const;

  // Evaluation-mode convenience: scores and video probability as plain data.
  RiskCurve predict(const scene::VideoSample& sample,
                    const std::vector<geometry::CollisionGraph>* graphs) const;

  // Individual module surfaces (unit-test targets). All take/return tape vars;
  // grads may be null for value-only use.
  ad::Var context_attention(ad::Tape& t, ad::Var context, std::vector<Eigen::MatrixXd>* grads) const;
  ad::Var object_attention(ad::Tape& t, const scene::FrameObservation& frame,
                           std::vector<Eigen::MatrixXd>* grads) const;
  ad::Var graph_encode(ad::Tape& t, const geometry::CollisionGraph& graph,
                       std::vector<Eigen::MatrixXd>* grads) const;
  // Smooth module over a (dim x T) sequence.
  ad::Var smooth(ad::Tape& t, ad::Var seq, std::vector<Eigen::MatrixXd>* grads) const;
  Eigen::MatrixXd smooth_eval(const Eigen::MatrixXd& seq) const;
  // Statistical-pooling video head over a (T x 1) score sequence.
  ad::Var accident_video_head(ad::Tape& t, ad::Var scores,
                              std::vector<Eigen::MatrixXd>* grads) const;

 private:
  struct ParamRefs;  // helper binding params/grads onto a tape

  ModelConfig cfg_;
  ParamSet params_;

  // Named indices resolved once at construction.
  struct Idx {
    int ctx_q, ctx_qb, ctx_k, ctx_kb, ctx_v, ctx_vb;
    int obj_theta, obj_b, obj_beta, obj_val, obj_vb;
    std::vector<int> graph_self, graph_nbr, graph_bias;
    int fuse_wm;
    int gru_wz, gru_uz, gru_bz, gru_wr, gru_ur, gru_br, gru_wh, gru_uh, gru_bh;
    std::vector<int> smooth_mix;
    int head_l1, head_l1b, head_l2, head_l2b;
    int acc_in, acc_inb;
    int acc_wz, acc_uz, acc_bz, acc_wr, acc_ur, acc_br, acc_wh, acc_uh, acc_bh;
    int acc_out, acc_outb;
  } idx_;

  ad::Var p(ad::Tape& t, int index, std::vector<Eigen::MatrixXd>* grads) const;
  ad::Var gru_cell(ad::Tape& t, ad::Var x, ad::Var h, int wz, int uz, int bz, int wr, int ur,
                   int br, int wh, int uh, int bh, std::vector<Eigen::MatrixXd>* grads) const;
  ad::Var dropout(ad::Tape& t, ad::Var x, double rate, bool training, std::mt19937_64* rng) const;
};

// A (T x T) pooling-then-upsample operator for one receptive field: trailing
// block averages held until the next block completes; the partial leading
// block uses the running mean. Strictly causal (column t only weights rows
// <= t).
Eigen::MatrixXd smoothing_operator(int frames, int field);

}  // namespace riskcast::net
