#pragma once

// Actor-critic MLP policy trained with the PPO clipped surrogate. Forward and
// backward passes are written out by hand; Eigen only supplies the dense
// matrix products.

#include "cage2/dynamics.hpp"
#include "cage2/random.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

namespace cage2 {

// Per host: one-hot access (7), running-service bits (m), scanned bits (m).
inline std::size_t encoded_dimension(const Scenario& s) {
  return s.host_count() * (kAccessStateCount + 2 * s.service_count());
}

inline void encode_state_into(const Scenario& s, const State& st, double* out) {
  const std::size_t m = s.service_count();
  const std::size_t block = kAccessStateCount + 2 * m;
  std::fill(out, out + s.host_count() * block, 0.0);
  for (HostIndex h = 0; h < s.host_count(); ++h) {
    double* host = out + h * block;
    host[static_cast<std::size_t>(st[h].access)] = 1.0;
    for (ServiceIndex e = 0; e < m; ++e) {
      if (st[h].running.contains(e)) host[kAccessStateCount + e] = 1.0;
      if (st[h].scanned.contains(e)) host[kAccessStateCount + m + e] = 1.0;
    }
  }
}

inline std::vector<double> encode_state(const Scenario& s, const State& st) {
  std::vector<double> x(encoded_dimension(s));
  encode_state_into(s, st, x.data());
  return x;
}

// ---------------------------------------------------------------------------
// Parameters

// Layer sizes and the flat layout shared by parameters, gradients and the
// Adam moments: actor layers (W, b)..., then critic layers (W, b)...; each W
// is stored column-major with shape (out x in).
class NetworkShape {
 public:
  NetworkShape() = default;
  NetworkShape(std::size_t input_dim, std::size_t action_count, std::vector<std::size_t> hidden = {64, 64})
      : input_dim_(input_dim), action_count_(action_count), hidden_(std::move(hidden)) {
    std::size_t offset = 0;
    for (int net = 0; net < 2; ++net) {
      std::vector<std::size_t> sizes{input_dim_};
      sizes.insert(sizes.end(), hidden_.begin(), hidden_.end());
      sizes.push_back(net == 0 ? action_count_ : 1);
      auto& layers = net == 0 ? actor_ : critic_;
      for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        Layer layer{sizes[l], sizes[l + 1], offset, 0};
        offset += layer.in * layer.out;
        layer.bias_offset = offset;
        offset += layer.out;
        layers.push_back(layer);
      }
    }
    total_ = offset;
  }

  struct Layer {
    std::size_t in = 0, out = 0;
    std::size_t weight_offset = 0, bias_offset = 0;
  };

  std::size_t input_dim() const { return input_dim_; }
  std::size_t action_count() const { return action_count_; }
  const std::vector<std::size_t>& hidden() const { return hidden_; }
  const std::vector<Layer>& actor() const { return actor_; }
  const std::vector<Layer>& critic() const { return critic_; }
  std::size_t parameter_count() const { return total_; }

  friend bool operator==(const NetworkShape& a, const NetworkShape& b) {
    return a.input_dim_ == b.input_dim_ && a.action_count_ == b.action_count_ && a.hidden_ == b.hidden_;
  }

 private:
  std::size_t input_dim_ = 0, action_count_ = 0;
  std::vector<std::size_t> hidden_;
  std::vector<Layer> actor_, critic_;
  std::size_t total_ = 0;
};

struct PolicyParams {
  NetworkShape shape;
  std::vector<double> values;

  static PolicyParams zeros(NetworkShape shape) {
    PolicyParams p{std::move(shape), {}};
    p.values.assign(p.shape.parameter_count(), 0.0);
    return p;
  }

  // Weights and biases ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), drawn layer by
  // layer in the flat order from `rng`.
  static PolicyParams initialize(NetworkShape shape, Rng& rng) {
    PolicyParams p = zeros(std::move(shape));
    auto fill = [&](const NetworkShape::Layer& layer) {
      const double bound = 1.0 / std::sqrt(double(layer.in));
      std::uniform_real_distribution<double> u(-bound, bound);
      for (std::size_t i = 0; i < layer.in * layer.out; ++i) p.values[layer.weight_offset + i] = u(rng);
      for (std::size_t i = 0; i < layer.out; ++i) p.values[layer.bias_offset + i] = u(rng);
    };
    for (const auto& l : p.shape.actor()) fill(l);
    for (const auto& l : p.shape.critic()) fill(l);
    return p;
  }

  friend bool operator==(const PolicyParams&, const PolicyParams&) = default;
};

namespace detail {

using ConstMatMap = Eigen::Map<const Eigen::MatrixXd>;
using MatMap = Eigen::Map<Eigen::MatrixXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;
using VecMap = Eigen::Map<Eigen::VectorXd>;

inline ConstMatMap weight(const std::vector<double>& v, const NetworkShape::Layer& l) {
  return ConstMatMap(v.data() + l.weight_offset, Eigen::Index(l.out), Eigen::Index(l.in));
}
inline ConstVecMap bias(const std::vector<double>& v, const NetworkShape::Layer& l) {
  return ConstVecMap(v.data() + l.bias_offset, Eigen::Index(l.out));
}
inline MatMap weight(std::vector<double>& v, const NetworkShape::Layer& l) {
  return MatMap(v.data() + l.weight_offset, Eigen::Index(l.out), Eigen::Index(l.in));
}
inline VecMap bias(std::vector<double>& v, const NetworkShape::Layer& l) {
  return VecMap(v.data() + l.bias_offset, Eigen::Index(l.out));
}

// Activations of every layer for a batch (columns are samples). acts[0] is
// the input; hidden layers use tanh, the last layer is linear.
inline std::vector<Eigen::MatrixXd> mlp_forward(const std::vector<double>& v,
                                                const std::vector<NetworkShape::Layer>& layers,
                                                const Eigen::MatrixXd& input) {
  std::vector<Eigen::MatrixXd> acts;
  acts.reserve(layers.size() + 1);
  acts.push_back(input);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Eigen::MatrixXd z = weight(v, layers[l]) * acts.back();
    z.colwise() += bias(v, layers[l]);
    if (l + 1 < layers.size()) z = z.array().tanh().matrix();
    acts.push_back(std::move(z));
  }
  return acts;
}

// Accumulates parameter gradients given dLoss/d(output) for the batch.
inline void mlp_backward(const std::vector<double>& v, const std::vector<NetworkShape::Layer>& layers,
                         const std::vector<Eigen::MatrixXd>& acts, Eigen::MatrixXd grad_out,
                         std::vector<double>& grad) {
  for (std::size_t l = layers.size(); l-- > 0;) {
    weight(grad, layers[l]) += grad_out * acts[l].transpose();
    bias(grad, layers[l]) += grad_out.rowwise().sum();
    if (l == 0) break;
    Eigen::MatrixXd upstream = weight(v, layers[l]).transpose() * grad_out;
    grad_out = upstream.array() * (1.0 - acts[l].array().square());
  }
}

// Column-wise log-softmax.
inline Eigen::MatrixXd log_softmax(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd out(logits.rows(), logits.cols());
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    const double mx = logits.col(c).maxCoeff();
    const double lse = mx + std::log((logits.col(c).array() - mx).exp().sum());
    out.col(c) = logits.col(c).array() - lse;
  }
  return out;
}

}  // namespace detail

struct PolicyOutput {
  std::vector<double> probabilities;
  double value = 0.0;
};

inline PolicyOutput forward(const PolicyParams& p, std::span<const double> x) {
  if (x.size() != p.shape.input_dim())
    throw std::invalid_argument("forward: feature dimension " + std::to_string(x.size()) + " does not match network input " +
                                std::to_string(p.shape.input_dim()));
  Eigen::MatrixXd input = Eigen::Map<const Eigen::VectorXd>(x.data(), Eigen::Index(x.size()));
  auto actor = detail::mlp_forward(p.values, p.shape.actor(), input);
  auto critic = detail::mlp_forward(p.values, p.shape.critic(), input);
  Eigen::MatrixXd logp = detail::log_softmax(actor.back());
  PolicyOutput out;
  out.probabilities.resize(p.shape.action_count());
  for (std::size_t a = 0; a < out.probabilities.size(); ++a) out.probabilities[a] = std::exp(logp(Eigen::Index(a), 0));
  out.value = critic.back()(0, 0);
  return out;
}

struct SampledAction {
  std::size_t index = 0;
  double log_probability = 0.0;
};

inline SampledAction sample_action(const std::vector<double>& probabilities, Rng& rng) {
  const double u = uniform01(rng);
  double cumulative = 0.0;
  std::size_t chosen = probabilities.size() - 1;
  for (std::size_t a = 0; a < probabilities.size(); ++a) {
    cumulative += probabilities[a];
    if (u < cumulative) {
      chosen = a;
      break;
    }
  }
  // Guard against landing on a zero-probability tail entry through rounding.
  while (probabilities[chosen] == 0.0 && chosen > 0) --chosen;
  return {chosen, std::log(probabilities[chosen])};
}

inline SampledAction greedy_action(const std::vector<double>& probabilities) {
  auto it = std::max_element(probabilities.begin(), probabilities.end());
  return {std::size_t(it - probabilities.begin()), std::log(*it)};
}

// ---------------------------------------------------------------------------
// Trajectories and advantages

struct TrajectoryBuffer {
  std::size_t feature_dim = 0;
  std::vector<double> features;  // row per step, feature_dim wide
  std::vector<std::size_t> actions;
  std::vector<double> log_probs;
  std::vector<double> rewards;
  std::vector<bool> episode_end;

  explicit TrajectoryBuffer(std::size_t dim = 0) : feature_dim(dim) {}

  std::size_t size() const { return actions.size(); }
  bool empty() const { return actions.empty(); }

  void push(std::span<const double> x, std::size_t action, double log_prob, double reward, bool last) {
    if (x.size() != feature_dim) throw std::invalid_argument("TrajectoryBuffer: feature dimension mismatch");
    features.insert(features.end(), x.begin(), x.end());
    actions.push_back(action);
    log_probs.push_back(log_prob);
    rewards.push_back(reward);
    episode_end.push_back(last);
  }

  void append(const TrajectoryBuffer& other) {
    features.insert(features.end(), other.features.begin(), other.features.end());
    actions.insert(actions.end(), other.actions.begin(), other.actions.end());
    log_probs.insert(log_probs.end(), other.log_probs.begin(), other.log_probs.end());
    rewards.insert(rewards.end(), other.rewards.begin(), other.rewards.end());
    episode_end.insert(episode_end.end(), other.episode_end.begin(), other.episode_end.end());
  }

  Eigen::MatrixXd feature_matrix() const {
    return Eigen::Map<const Eigen::MatrixXd>(features.data(), Eigen::Index(feature_dim), Eigen::Index(size()));
  }
};

struct AdvantageEstimates {
  std::vector<double> returns;     // G_t, discounted within each episode
  std::vector<double> advantages;  // G_t - V(s_t)
};

// A trailing episode without an end flag is treated as ending at the last step.
inline AdvantageEstimates monte_carlo_advantages(const TrajectoryBuffer& buf, const std::vector<double>& values,
                                                 double gamma) {
  if (buf.empty()) throw std::invalid_argument("monte_carlo_advantages: empty buffer");
  if (values.size() != buf.size()) throw std::invalid_argument("monte_carlo_advantages: one value per step required");
  AdvantageEstimates out;
  out.returns.resize(buf.size());
  out.advantages.resize(buf.size());
  double running = 0.0;
  for (std::size_t i = buf.size(); i-- > 0;) {
    if (buf.episode_end[i]) running = 0.0;
    running = buf.rewards[i] + gamma * running;
    out.returns[i] = running;
    out.advantages[i] = running - values[i];
  }
  return out;
}

inline std::vector<double> normalize_advantages(std::vector<double> a) {
  const double n = double(a.size());
  double mean = 0.0;
  for (double x : a) mean += x;
  mean /= n;
  double var = 0.0;
  for (double x : a) var += (x - mean) * (x - mean);
  const double sd = std::sqrt(var / n);
  for (double& x : a) x = (x - mean) / (sd + 1e-8);
  return a;
}

// ---------------------------------------------------------------------------
// PPO objective

struct PpoConfig {
  double learning_rate = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double adam_epsilon = 1e-8;
  std::size_t epochs = 10;
  double clip = 0.2;
  double gamma = 0.99;
  double value_coef = 0.5;
  double entropy_coef = 0.0;
  bool normalize_advantages = true;
};

struct PpoBatch {
  Eigen::MatrixXd features;  // input_dim x N
  std::vector<std::size_t> actions;
  std::vector<double> old_log_probs;
  std::vector<double> advantages;
  std::vector<double> returns;

  std::size_t size() const { return actions.size(); }
};

struct PpoLoss {
  double total = 0.0;
  double policy = 0.0;  // -mean(min(rho A, clip(rho) A))
  double value = 0.0;   // value_coef * mean((V - G)^2)
  double entropy = 0.0;
  double clip_fraction = 0.0;
};

// Loss and, when `grad` is non-null, its exact gradient w.r.t. the flat
// parameters (actor and critic).
inline PpoLoss ppo_loss(const PolicyParams& p, const PpoBatch& batch, const PpoConfig& cfg,
                        std::vector<double>* grad = nullptr) {
  const std::size_t n = batch.size();
  const double inv_n = 1.0 / double(n);
  auto actor = detail::mlp_forward(p.values, p.shape.actor(), batch.features);
  auto critic = detail::mlp_forward(p.values, p.shape.critic(), batch.features);
  const Eigen::MatrixXd logp = detail::log_softmax(actor.back());
  const Eigen::MatrixXd probs = logp.array().exp();

  PpoLoss loss;
  Eigen::MatrixXd grad_logits = Eigen::MatrixXd::Zero(logp.rows(), logp.cols());
  Eigen::MatrixXd grad_value(1, Eigen::Index(n));
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Index c = Eigen::Index(i);
    const Eigen::Index a = Eigen::Index(batch.actions[i]);
    const double adv = batch.advantages[i];
    const double ratio = std::exp(logp(a, c) - batch.old_log_probs[i]);
    const double clipped = std::clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip);
    const double unclipped_obj = ratio * adv;
    const double clipped_obj = clipped * adv;
    loss.policy -= std::min(unclipped_obj, clipped_obj) * inv_n;
    if (unclipped_obj > clipped_obj) loss.clip_fraction += inv_n;

    double entropy = 0.0;
    for (Eigen::Index k = 0; k < logp.rows(); ++k) entropy -= probs(k, c) * logp(k, c);
    loss.entropy += entropy * inv_n;

    // The min picks the unclipped term whenever it is the smaller one; in the
    // clipped branch the objective is constant in theta.
    if (unclipped_obj <= clipped_obj) {
      const double coef = -adv * ratio * inv_n;  // d(-obj)/d(log pi_a)
      grad_logits.col(c) -= coef * probs.col(c);
      grad_logits(a, c) += coef;
    }
    if (cfg.entropy_coef != 0.0) {
      for (Eigen::Index k = 0; k < logp.rows(); ++k)
        grad_logits(k, c) += cfg.entropy_coef * inv_n * probs(k, c) * (logp(k, c) + entropy);
    }

    const double err = critic.back()(0, c) - batch.returns[i];
    loss.value += cfg.value_coef * err * err * inv_n;
    grad_value(0, c) = 2.0 * cfg.value_coef * err * inv_n;
  }
  loss.total = loss.policy + loss.value - cfg.entropy_coef * loss.entropy;

  if (grad != nullptr) {
    grad->assign(p.values.size(), 0.0);
    detail::mlp_backward(p.values, p.shape.actor(), actor, std::move(grad_logits), *grad);
    detail::mlp_backward(p.values, p.shape.critic(), critic, std::move(grad_value), *grad);
  }
  return loss;
}

struct OptimizerState {
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::size_t step = 0;

  static OptimizerState for_params(const PolicyParams& p) {
    return {std::vector<double>(p.values.size(), 0.0), std::vector<double>(p.values.size(), 0.0), 0};
  }
};

// Adam descent step on the flat parameter vector.
inline void adam_step(std::vector<double>& params, const std::vector<double>& grad, OptimizerState& opt,
                      const PpoConfig& cfg) {
  if (opt.first_moment.size() != params.size() || opt.second_moment.size() != params.size())
    throw std::invalid_argument("adam_step: optimizer state shape mismatch");
  ++opt.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, double(opt.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, double(opt.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    opt.first_moment[i] = cfg.beta1 * opt.first_moment[i] + (1.0 - cfg.beta1) * grad[i];
    opt.second_moment[i] = cfg.beta2 * opt.second_moment[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
    const double m_hat = opt.first_moment[i] / c1;
    const double v_hat = opt.second_moment[i] / c2;
    params[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.adam_epsilon);
  }
}

class NonFiniteLoss : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct UpdateStats {
  PpoLoss first_epoch;
  PpoLoss last_epoch;
};

inline std::vector<double> critic_values(const PolicyParams& p, const Eigen::MatrixXd& features) {
  auto critic = detail::mlp_forward(p.values, p.shape.critic(), features);
  const Eigen::MatrixXd& v = critic.back();
  return std::vector<double>(v.data(), v.data() + v.size());
}

// Builds the PPO batch from a buffer using the critic before the update.
inline PpoBatch make_ppo_batch(const PolicyParams& p, const TrajectoryBuffer& buf, const PpoConfig& cfg) {
  PpoBatch batch;
  batch.features = buf.feature_matrix();
  auto est = monte_carlo_advantages(buf, critic_values(p, batch.features), cfg.gamma);
  batch.actions = buf.actions;
  batch.old_log_probs = buf.log_probs;
  batch.returns = std::move(est.returns);
  batch.advantages = cfg.normalize_advantages ? normalize_advantages(std::move(est.advantages)) : std::move(est.advantages);
  return batch;
}

// `epochs` full-batch Adam steps on the clipped surrogate plus critic
// regression. On a non-finite loss or gradient the parameters and optimizer
// are left untouched and NonFiniteLoss is thrown.
inline UpdateStats ppo_update(PolicyParams& params, OptimizerState& opt, const TrajectoryBuffer& buf,
                              const PpoConfig& cfg) {
  if (buf.empty()) throw std::invalid_argument("ppo_update: empty buffer");
  const PpoBatch batch = make_ppo_batch(params, buf, cfg);
  PolicyParams work = params;
  OptimizerState work_opt = opt;
  UpdateStats stats;
  std::vector<double> grad;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    PpoLoss loss = ppo_loss(work, batch, cfg, &grad);
    bool finite = std::isfinite(loss.total);
    for (double g : grad) finite = finite && std::isfinite(g);
    if (!finite) {
      std::ostringstream msg;
      msg << "non-finite PPO loss at epoch " << epoch << ": policy=" << loss.policy << " value=" << loss.value
          << " entropy=" << loss.entropy;
      throw NonFiniteLoss(msg.str());
    }
    if (epoch == 0) stats.first_epoch = loss;
    stats.last_epoch = loss;
    adam_step(work.values, grad, work_opt, cfg);
  }
  params = std::move(work);
  opt = std::move(work_opt);
  return stats;
}

// ---------------------------------------------------------------------------
// Checkpoints: a small versioned text format. Parameters are written as
// hexadecimal floats so a round trip is exact and bytes are deterministic.

inline constexpr std::string_view kCheckpointMagic = "cage2-bfppo-checkpoint";
inline constexpr int kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void write_checkpoint(std::ostream& out, const PolicyParams& p, std::uint64_t fingerprint) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fingerprint));
  out << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
  out << "fingerprint " << buf << '\n';
  out << "input_dim " << p.shape.input_dim() << '\n';
  out << "action_count " << p.shape.action_count() << '\n';
  out << "hidden";
  for (std::size_t h : p.shape.hidden()) out << ' ' << h;
  out << '\n';
  out << "parameters " << p.values.size() << '\n';
  for (double v : p.values) {
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::hex);
    out.write(buf, end - buf);
    out << '\n';
  }
}

struct Checkpoint {
  PolicyParams params;
  std::uint64_t fingerprint = 0;
};

inline Checkpoint read_checkpoint(std::istream& in) {
  auto expect = [&](const std::string& key) {
    std::string got;
    if (!(in >> got) || got != key) throw CheckpointError("checkpoint: expected '" + key + "'");
  };
  expect(std::string(kCheckpointMagic));
  int version = 0;
  if (!(in >> version) || version != kCheckpointVersion)
    throw CheckpointError("checkpoint: unsupported version " + std::to_string(version));
  expect("fingerprint");
  std::string hex;
  in >> hex;
  Checkpoint cp;
  cp.fingerprint = std::stoull(hex, nullptr, 16);
  std::size_t input_dim = 0, action_count = 0, count = 0;
  expect("input_dim");
  in >> input_dim;
  expect("action_count");
  in >> action_count;
  expect("hidden");
  std::string line;
  std::getline(in, line);
  std::istringstream hidden_line(line);
  std::vector<std::size_t> hidden;
  for (std::size_t h; hidden_line >> h;) hidden.push_back(h);
  expect("parameters");
  in >> count;
  cp.params = PolicyParams::zeros(NetworkShape(input_dim, action_count, hidden));
  if (count != cp.params.values.size())
    throw CheckpointError("checkpoint: parameter count " + std::to_string(count) + " does not match the layer shapes");
  std::string token;
  for (std::size_t i = 0; i < count; ++i) {
    if (!(in >> token)) throw CheckpointError("checkpoint: truncated parameter list");
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v, std::chars_format::hex);
    if (ec != std::errc{} || ptr != token.data() + token.size())
      throw CheckpointError("checkpoint: malformed parameter '" + token + "'");
    cp.params.values[i] = v;
  }
  return cp;
}

inline void save_checkpoint(const std::string& path, const PolicyParams& p, std::uint64_t fingerprint) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write checkpoint '" + path + "'");
  write_checkpoint(out, p, fingerprint);
  if (!out) throw CheckpointError("failed writing checkpoint '" + path + "'");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path + "'");
  return read_checkpoint(in);
}

}  // namespace cage2
