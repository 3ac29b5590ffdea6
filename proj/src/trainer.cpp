#include "riskcast/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "json.hpp"

namespace riskcast::train {

using nlohmann::json;

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw InputError("train config: learning rate must be positive");
  if (batch_size < 1) throw InputError("train config: batch size must be >= 1");
  if (epochs < 1) throw InputError("train config: epochs must be >= 1");
  if (plateau_patience < 1) throw InputError("train config: plateau patience must be >= 1");
  if (!(plateau_factor > 0.0) || plateau_factor >= 1.0)
    throw InputError("train config: plateau factor must lie in (0, 1)");
  model.validate();
  loss.validate();
}

void Adam::step(std::vector<Eigen::MatrixXd>& params, std::vector<Eigen::MatrixXd>& grads) {
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(Eigen::MatrixXd::Zero(p.rows(), p.cols()));
      v_.emplace_back(Eigen::MatrixXd::Zero(p.rows(), p.cols()));
    }
  }
  if (clip_norm_ > 0.0) {
    double sq = 0.0;
    for (const auto& g : grads) sq += g.squaredNorm();
    const double norm = std::sqrt(sq);
    if (norm > clip_norm_) {
      const double scale = clip_norm_ / norm;
      for (auto& g : grads) g *= scale;
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, t_);
  const double bc2 = 1.0 - std::pow(beta2_, t_);
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].size() == 0) continue;  // parameter untouched this step
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grads[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grads[i].cwiseProduct(grads[i]);
    params[i].array() -=
        lr_ * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + eps_);
  }
}

std::vector<std::vector<geometry::CollisionGraph>> build_graph_cache(
    const std::vector<scene::VideoSample>& samples, const net::ModelConfig& cfg) {
  std::vector<std::vector<geometry::CollisionGraph>> cache;
  if (!cfg.collision) return cache;
  cache.reserve(samples.size());
  for (const auto& s : samples)
    cache.push_back(geometry::build_graph_sequence(s, cfg.collision_mode, cfg.edge));
  return cache;
}

eval::EvalReport evaluate(const net::Model& model, const std::vector<scene::VideoSample>& split,
                          double frame_rate) {
  if (split.empty()) throw InputError("evaluate: empty split");
  std::vector<eval::VideoScore> scored;
  scored.reserve(split.size());
  for (const auto& s : split) {
    std::vector<geometry::CollisionGraph> graphs;
    if (model.config().collision)
      graphs = geometry::build_graph_sequence(s, model.config().collision_mode,
                                              model.config().edge);
    net::RiskCurve curve = model.predict(s, model.config().collision ? &graphs : nullptr);
    scored.push_back(eval::VideoScore::from_curve(std::move(curve), s.label, s.accident_frame));
  }
  return eval::evaluate_videos(scored, frame_rate);
}

namespace {

eval::EvalReport evaluate_cached(const net::Model& model,
                                 const std::vector<scene::VideoSample>& split,
                                 const std::vector<std::vector<geometry::CollisionGraph>>& cache,
                                 double frame_rate) {
  std::vector<eval::VideoScore> scored;
  scored.reserve(split.size());
  for (std::size_t i = 0; i < split.size(); ++i) {
    const auto* graphs = model.config().collision ? &cache[i] : nullptr;
    net::RiskCurve curve = model.predict(split[i], graphs);
    scored.push_back(
        eval::VideoScore::from_curve(std::move(curve), split[i].label, split[i].accident_frame));
  }
  return eval::evaluate_videos(scored, frame_rate);
}

std::string batch_diagnostic(const std::vector<scene::VideoSample>& split,
                             const std::vector<int>& batch_idx,
                             const loss::BatchLossVars& losses) {
  std::ostringstream out;
  out << "non-finite loss (L_S=" << losses.frame_loss << ", L_p=" << losses.video_loss
      << ") on batch:";
  for (int i : batch_idx) out << " " << split[i].sample_id;
  return out.str();
}

}  // namespace

TrainResult train(const std::vector<scene::VideoSample>& train_split,
                  const std::vector<scene::VideoSample>& test_split, const TrainConfig& config,
                  const std::function<void(const StepRecord&)>& step_sink,
                  const std::function<void(const EvalPoint&)>& eval_sink) {
  config.validate();
  if (train_split.empty()) throw InputError("train: empty training split");
  if (test_split.empty()) throw InputError("train: empty test split (needed for half-epoch evals)");

  net::Model model(config.model, config.seed);
  const auto train_graphs = build_graph_cache(train_split, config.model);
  const auto test_graphs = build_graph_cache(test_split, config.model);

  loss::UncertaintyParams sigmas;  // log-sigmas start at 0 (sigma = 1)
  Eigen::MatrixXd ls1(1, 1), ls2(1, 1);
  ls1(0, 0) = sigmas.log_sigma1;
  ls2(0, 0) = sigmas.log_sigma2;

  // Model params plus the two log-sigmas share one optimizer.
  std::vector<Eigen::MatrixXd> opt_params;
  for (int i = 0; i < model.params().count(); ++i) opt_params.push_back(model.params().at(i));
  opt_params.push_back(ls1);
  opt_params.push_back(ls2);
  Adam adam(config.learning_rate, config.clip_norm);

  TrainResult result;
  result.config = config.model;

  const int steps_per_epoch =
      (static_cast<int>(train_split.size()) + config.batch_size - 1) / config.batch_size;
  const int half_mark = std::max(1, steps_per_epoch / 2);

  std::mt19937_64 shuffle_rng(derive_seed(config.seed, 0x5175ULL));
  std::vector<int> order(train_split.size());
  std::iota(order.begin(), order.end(), 0);

  int global_step = 0;
  double best_ap = -1.0, best_mtta = -1.0;
  double monitor_best = -1.0;  // plateau detector tracks AP only
  int evals_since_improvement = 0;

  auto run_eval = [&](double epoch_pos) {
    // Push current optimizer state back into the model for evaluation.
    for (int i = 0; i < model.params().count(); ++i) model.params().at(i) = opt_params[i];
    EvalPoint pt;
    pt.step = global_step;
    pt.epoch = epoch_pos;
    pt.report = evaluate_cached(model, test_split, test_graphs, config.frame_rate);
    result.evals.push_back(pt);
    if (eval_sink) eval_sink(pt);

    const double ap = pt.report.ap;
    const double mt = pt.report.mtta;
    if (ap > best_ap || (ap == best_ap && mt > best_mtta)) {
      best_ap = ap;
      best_mtta = mt;
      result.best_params.assign(opt_params.begin(), opt_params.end() - 2);
    }
    if (ap > monitor_best) {
      monitor_best = ap;
      evals_since_improvement = 0;
    } else if (++evals_since_improvement >= config.plateau_patience) {
      adam.set_learning_rate(std::max(adam.learning_rate() * config.plateau_factor,
                                      config.min_learning_rate));
      evals_since_improvement = 0;
    }
  };

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (int step = 0; step < steps_per_epoch; ++step) {
      std::vector<int> batch_idx;
      for (int b = 0; b < config.batch_size; ++b) {
        const int k = step * config.batch_size + b;
        if (k >= static_cast<int>(order.size())) break;
        batch_idx.push_back(order[k]);
      }
      if (batch_idx.empty()) continue;

      // Bind the optimizer's copies for this step.
      for (int i = 0; i < model.params().count(); ++i) model.params().at(i) = opt_params[i];
      std::vector<Eigen::MatrixXd> grads(opt_params.size());

      ad::Tape tape;
      std::mt19937_64 dropout_rng(derive_seed(config.seed, 0xd0ULL) ^
                                  derive_seed(static_cast<std::uint64_t>(global_step), 0x11ULL));
      std::vector<net::Model::Outputs> outs;
      std::vector<int> labels, taus;
      for (int i : batch_idx) {
        net::SampleView view{&train_split[i],
                             config.model.collision ? &train_graphs[i] : nullptr};
        // Route model-parameter gradients into the leading grad slots.
        outs.push_back(model.forward(tape, view, &grads, true, &dropout_rng));
        labels.push_back(train_split[i].label);
        taus.push_back(train_split[i].accident_frame);
      }
      ad::Var vs1 = tape.param(&opt_params[opt_params.size() - 2], &grads[grads.size() - 2]);
      ad::Var vs2 = tape.param(&opt_params[opt_params.size() - 1], &grads[grads.size() - 1]);
      loss::BatchLossVars losses =
          loss::batch_loss(tape, outs, labels, taus, config.loss, vs1, vs2);

      const double combined = tape.scalar_value(losses.combined);
      if (!std::isfinite(combined) || !std::isfinite(losses.frame_loss) ||
          !std::isfinite(losses.video_loss))
        throw ComputeError(batch_diagnostic(train_split, batch_idx, losses));

      tape.backward(losses.combined);
      adam.step(opt_params, grads);
      ++global_step;

      StepRecord rec;
      rec.step = global_step;
      rec.frame_loss = losses.frame_loss;
      rec.video_loss = losses.video_loss;
      rec.combined = combined;
      rec.sigma1 = std::exp(opt_params[opt_params.size() - 2](0, 0));
      rec.sigma2 = std::exp(opt_params[opt_params.size() - 1](0, 0));
      rec.learning_rate = adam.learning_rate();
      result.steps.push_back(rec);
      if (step_sink) step_sink(rec);

      if (step + 1 == half_mark) run_eval(epoch + 0.5);
    }
    run_eval(epoch + 1.0);
  }

  for (int i = 0; i < model.params().count(); ++i) model.params().at(i) = opt_params[i];
  result.final_params.assign(opt_params.begin(), opt_params.end() - 2);
  if (result.best_params.empty()) result.best_params = result.final_params;
  result.final_sigmas.log_sigma1 = opt_params[opt_params.size() - 2](0, 0);
  result.final_sigmas.log_sigma2 = opt_params[opt_params.size() - 1](0, 0);
  result.best_ap = best_ap;
  result.best_mtta = best_mtta;
  return result;
}

// --- checkpoint io ---------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'R', 'C', 'K', 'P', 'T', '0', '0', '1'};

void put_u32(std::ofstream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::ifstream& in, const std::string& path) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw InputError("corrupt checkpoint (truncated): " + path);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

json config_to_json(const net::ModelConfig& c) {
  json j;
  j["feature_dim"] = c.feature_dim;
  j["context_dim"] = c.context_dim;
  j["object_dim"] = c.object_dim;
  j["graph_dim"] = c.graph_dim;
  j["temporal_hidden"] = c.temporal_hidden;
  j["accident_hidden"] = c.accident_hidden;
  j["heads"] = c.heads;
  j["obj_attn_hidden"] = c.obj_attn_hidden;
  j["head_hidden"] = c.head_hidden;
  j["graph_layers"] = c.graph_layers;
  j["dropout1"] = c.dropout1;
  j["dropout2"] = c.dropout2;
  j["smooth_fields"] = c.smooth_fields;
  j["smooth_mix"] = c.smooth_mix;
  j["context_attn"] = c.context_attn;
  j["object_attn"] = c.object_attn;
  j["collision"] = c.collision;
  j["temporal_attn"] = c.temporal_attn;
  j["smooth"] = c.smooth;
  j["accident_head"] = c.accident_head;
  j["collision_mode"] = c.collision_mode == geometry::GraphMode::k3D ? "3d" : "2d";
  j["accident_from_scores"] = c.accident_from_scores;
  j["edge_alpha_d"] = c.edge.alpha_d;
  j["edge_alpha_m"] = c.edge.alpha_m;
  j["edge_scaling"] = c.edge.coordinate_scaling;
  j["edge_epsilon"] = c.edge.epsilon;
  j["edge_squared"] = c.edge.squared_distance;
  return j;
}

net::ModelConfig config_from_json(const json& j) {
  net::ModelConfig c;
  c.feature_dim = j.at("feature_dim").get<int>();
  c.context_dim = j.at("context_dim").get<int>();
  c.object_dim = j.at("object_dim").get<int>();
  c.graph_dim = j.at("graph_dim").get<int>();
  c.temporal_hidden = j.at("temporal_hidden").get<int>();
  c.accident_hidden = j.at("accident_hidden").get<int>();
  c.heads = j.at("heads").get<int>();
  c.obj_attn_hidden = j.at("obj_attn_hidden").get<int>();
  c.head_hidden = j.at("head_hidden").get<int>();
  c.graph_layers = j.at("graph_layers").get<int>();
  c.dropout1 = j.at("dropout1").get<double>();
  c.dropout2 = j.at("dropout2").get<double>();
  c.smooth_fields = j.at("smooth_fields").get<std::vector<int>>();
  c.smooth_mix = j.at("smooth_mix").get<double>();
  c.context_attn = j.at("context_attn").get<bool>();
  c.object_attn = j.at("object_attn").get<bool>();
  c.collision = j.at("collision").get<bool>();
  c.temporal_attn = j.at("temporal_attn").get<bool>();
  c.smooth = j.at("smooth").get<bool>();
  c.accident_head = j.at("accident_head").get<bool>();
  c.collision_mode = j.at("collision_mode").get<std::string>() == "2d" ? geometry::GraphMode::k2D
                                                                       : geometry::GraphMode::k3D;
  c.accident_from_scores = j.at("accident_from_scores").get<bool>();
  c.edge.alpha_d = j.at("edge_alpha_d").get<double>();
  c.edge.alpha_m = j.at("edge_alpha_m").get<double>();
  const auto sc = j.at("edge_scaling").get<std::vector<double>>();
  for (std::size_t i = 0; i < 3 && i < sc.size(); ++i) c.edge.coordinate_scaling[i] = sc[i];
  c.edge.epsilon = j.at("edge_epsilon").get<double>();
  c.edge.squared_distance = j.at("edge_squared").get<bool>();
  return c;
}

}  // namespace

void save_checkpoint(const std::string& path, const net::ModelConfig& cfg,
                     const net::ParamSet& params, const loss::UncertaintyParams& sigmas) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write checkpoint: " + path);
  out.write(kMagic, sizeof(kMagic));
  const std::string cfg_str = config_to_json(cfg).dump();
  put_u32(out, static_cast<std::uint32_t>(cfg_str.size()));
  out.write(cfg_str.data(), static_cast<std::streamsize>(cfg_str.size()));

  put_u32(out, static_cast<std::uint32_t>(params.count() + 2));
  auto write_array = [&](const std::string& name, const Eigen::MatrixXd& m) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(out, static_cast<std::uint32_t>(m.rows()));
    put_u32(out, static_cast<std::uint32_t>(m.cols()));
    // Row-major little-endian float64.
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        const double d = m(r, c);
        out.write(reinterpret_cast<const char*>(&d), 8);
      }
  };
  for (int i = 0; i < params.count(); ++i) write_array(params.name(i), params.at(i));
  Eigen::MatrixXd s1(1, 1), s2(1, 1);
  s1(0, 0) = sigmas.log_sigma1;
  s2(0, 0) = sigmas.log_sigma2;
  write_array("loss.log_sigma1", s1);
  write_array("loss.log_sigma2", s2);
  out.close();
  if (!out) throw InputError("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    throw InputError("not a checkpoint (bad magic): " + path);
  const std::uint32_t cfg_len = get_u32(in, path);
  std::string cfg_str(cfg_len, '\0');
  in.read(cfg_str.data(), cfg_len);
  if (!in) throw InputError("corrupt checkpoint (truncated config): " + path);

  Checkpoint ck;
  ck.config = config_from_json(json::parse(cfg_str));
  const std::uint32_t count = get_u32(in, path);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = get_u32(in, path);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const std::uint32_t rows = get_u32(in, path);
    const std::uint32_t cols = get_u32(in, path);
    Eigen::MatrixXd m(rows, cols);
    for (std::uint32_t r = 0; r < rows; ++r)
      for (std::uint32_t c = 0; c < cols; ++c) {
        double d;
        in.read(reinterpret_cast<char*>(&d), 8);
        if (!in) throw InputError("corrupt checkpoint (truncated array): " + path);
        m(r, c) = d;
      }
    if (name == "loss.log_sigma1")
      ck.sigmas.log_sigma1 = m(0, 0);
    else if (name == "loss.log_sigma2")
      ck.sigmas.log_sigma2 = m(0, 0);
    else
      ck.params.emplace_back(std::move(name), std::move(m));
  }
  return ck;
}

net::Model model_from_checkpoint(const Checkpoint& ck) {
  net::Model model(ck.config, 0);
  for (const auto& [name, value] : ck.params) {
    const int idx = model.params().index_of(name);
    if (idx < 0) throw InputError("checkpoint parameter '" + name + "' unknown to this config");
    if (model.params().at(idx).rows() != value.rows() ||
        model.params().at(idx).cols() != value.cols())
      throw InputError("checkpoint parameter '" + name + "' has mismatched shape");
    model.params().at(idx) = value;
  }
  return model;
}

}  // namespace riskcast::train
