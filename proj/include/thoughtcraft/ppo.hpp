#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "thoughtcraft/error.hpp"
#include "thoughtcraft/policy.hpp"
#include "thoughtcraft/rng.hpp"

namespace thoughtcraft {

enum class OptimizerKind : std::uint8_t { Adam, Sgd };

struct TrainerConfig {
  double gamma = 0.99;
  double lambda = 0.95;
  double clip = 0.2;
  int epochs = 4;
  int minibatch = 256;
  double learning_rate = 3e-4;
  double entropy_coef = 0.01;
  double value_coef = 0.5;
  double max_grad_norm = 0.5;
  OptimizerKind optimizer = OptimizerKind::Adam;

  bool operator==(const TrainerConfig&) const = default;
};

inline void validate(const TrainerConfig& c) {
  auto fail = [](const std::string& m) { throw Error(Errc::ConfigInvalid, "trainer: " + m); };
  if (!(c.gamma > 0 && c.gamma <= 1)) fail("gamma must lie in (0, 1]");
  if (!(c.lambda > 0 && c.lambda <= 1)) fail("lambda must lie in (0, 1]");
  if (!(c.clip > 0 && c.clip < 1)) fail("clip must lie in (0, 1)");
  if (c.epochs < 1) fail("epochs must be >= 1");
  if (c.minibatch < 1) fail("minibatch must be >= 1");
  if (!(c.learning_rate > 0)) fail("learning_rate must be > 0");
  if (c.entropy_coef < 0 || c.value_coef < 0) fail("loss coefficients must be >= 0");
  if (!(c.max_grad_norm > 0)) fail("max_grad_norm must be > 0");
}

inline nlohmann::json to_json(const TrainerConfig& c) {
  return {{"gamma", c.gamma},
          {"lambda", c.lambda},
          {"clip", c.clip},
          {"epochs", c.epochs},
          {"minibatch", c.minibatch},
          {"learning_rate", c.learning_rate},
          {"entropy_coef", c.entropy_coef},
          {"value_coef", c.value_coef},
          {"max_grad_norm", c.max_grad_norm},
          {"optimizer", c.optimizer == OptimizerKind::Adam ? "adam" : "sgd"}};
}

/// Missing keys keep their defaults; unknown keys are rejected.
inline TrainerConfig trainer_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(Errc::ConfigInvalid, "trainer config must be an object");
  TrainerConfig c;
  try {
    for (const auto& [k, v] : j.items()) {
      if (k == "gamma") c.gamma = v.get<double>();
      else if (k == "lambda") c.lambda = v.get<double>();
      else if (k == "clip") c.clip = v.get<double>();
      else if (k == "epochs") c.epochs = v.get<int>();
      else if (k == "minibatch") c.minibatch = v.get<int>();
      else if (k == "learning_rate") c.learning_rate = v.get<double>();
      else if (k == "entropy_coef") c.entropy_coef = v.get<double>();
      else if (k == "value_coef") c.value_coef = v.get<double>();
      else if (k == "max_grad_norm") c.max_grad_norm = v.get<double>();
      else if (k == "optimizer") {
        const auto s = v.get<std::string>();
        if (s == "adam") c.optimizer = OptimizerKind::Adam;
        else if (s == "sgd") c.optimizer = OptimizerKind::Sgd;
        else throw Error(Errc::ConfigInvalid, "trainer: optimizer must be 'adam' or 'sgd'");
      } else {
        throw Error(Errc::ConfigInvalid, "trainer: unknown field '" + k + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ConfigInvalid, std::string("trainer: ") + e.what());
  }
  validate(c);
  return c;
}

// ---------------------------------------------------------------------------
// replay buffer

/// Transitions stored column-wise. Episodes are laid end to end; `dones`
/// marks the last transition of each one.
class ReplayBuffer {
 public:
  ReplayBuffer() = default;
  explicit ReplayBuffer(int feature_dim) : dim_(feature_dim) {}

  int feature_dim() const { return dim_; }
  std::size_t size() const { return actions_.size(); }
  bool empty() const { return actions_.empty(); }

  void push(std::span<const double> features, int action, double log_prob, double reward, double value, bool done,
            const ActionMask& mask) {
    if (static_cast<int>(features.size()) != dim_) throw Error(Errc::DimensionMismatch, "transition feature size");
    features_.insert(features_.end(), features.begin(), features.end());
    actions_.push_back(action);
    log_probs_.push_back(log_prob);
    rewards_.push_back(reward);
    values_.push_back(value);
    dones_.push_back(done ? 1 : 0);
    masks_.push_back(mask);
  }

  void append(const ReplayBuffer& o) {
    if (o.dim_ != dim_) throw Error(Errc::DimensionMismatch, "merging buffers of different feature size");
    features_.insert(features_.end(), o.features_.begin(), o.features_.end());
    actions_.insert(actions_.end(), o.actions_.begin(), o.actions_.end());
    log_probs_.insert(log_probs_.end(), o.log_probs_.begin(), o.log_probs_.end());
    rewards_.insert(rewards_.end(), o.rewards_.begin(), o.rewards_.end());
    values_.insert(values_.end(), o.values_.begin(), o.values_.end());
    dones_.insert(dones_.end(), o.dones_.begin(), o.dones_.end());
    masks_.insert(masks_.end(), o.masks_.begin(), o.masks_.end());
  }

  void clear() {
    features_.clear();
    actions_.clear();
    log_probs_.clear();
    rewards_.clear();
    values_.clear();
    dones_.clear();
    masks_.clear();
  }

  std::span<const double> features(std::size_t i) const {
    return {features_.data() + i * static_cast<std::size_t>(dim_), static_cast<std::size_t>(dim_)};
  }
  int action(std::size_t i) const { return actions_[i]; }
  double log_prob(std::size_t i) const { return log_probs_[i]; }
  const ActionMask& mask(std::size_t i) const { return masks_[i]; }

  std::span<const double> rewards() const { return rewards_; }
  std::span<const double> values() const { return values_; }
  std::span<const std::uint8_t> dones() const { return dones_; }

 private:
  int dim_ = 0;
  std::vector<double> features_;
  std::vector<int> actions_;
  std::vector<double> log_probs_;
  std::vector<double> rewards_;
  std::vector<double> values_;
  std::vector<std::uint8_t> dones_;
  std::vector<ActionMask> masks_;
};

// ---------------------------------------------------------------------------
// advantages

struct Advantages {
  std::vector<double> advantages;
  std::vector<double> returns;
};

/// Backward recursion
///   delta_t = r_t + gamma V_{t+1} (1 - done_t) - V_t
///   A_t     = delta_t + gamma lambda (1 - done_t) A_{t+1}
/// `bootstrap` stands in for V_T after the final transition when it is not
/// terminal.
inline Advantages compute_gae(std::span<const double> rewards, std::span<const double> values,
                              std::span<const std::uint8_t> dones, double gamma, double lambda,
                              double bootstrap = 0.0) {
  const std::size_t n = rewards.size();
  if (values.size() != n || dones.size() != n)
    throw Error(Errc::LengthMismatch, "rewards, values and dones must have equal length");
  Advantages out;
  out.advantages.assign(n, 0.0);
  out.returns.assign(n, 0.0);
  double next_value = bootstrap;
  double next_adv = 0.0;
  for (std::size_t k = n; k-- > 0;) {
    const double live = dones[k] ? 0.0 : 1.0;
    const double delta = rewards[k] + gamma * next_value * live - values[k];
    next_adv = delta + gamma * lambda * live * next_adv;
    out.advantages[k] = next_adv;
    out.returns[k] = next_adv + values[k];
    next_value = values[k];
  }
  return out;
}

/// Zero mean, unit (population) standard deviation; the deviation is floored
/// so a constant batch does not divide by zero.
inline std::vector<double> normalize_advantages(std::span<const double> a) {
  std::vector<double> out(a.begin(), a.end());
  if (out.empty()) return out;
  const double mean = std::accumulate(out.begin(), out.end(), 0.0) / static_cast<double>(out.size());
  double var = 0.0;
  for (double v : out) var += (v - mean) * (v - mean);
  const double sd = std::max(std::sqrt(var / static_cast<double>(out.size())), 1e-8);
  for (double& v : out) v = (v - mean) / sd;
  return out;
}

// ---------------------------------------------------------------------------
// loss

struct LossStats {
  double total = 0.0;
  double policy = 0.0;
  double value = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
};

/// Clipped-surrogate loss over the transitions `idx`, averaged:
///   L = -min(r A, clip(r) A) + c_v (V - R)^2 - c_e H
/// `adv` and `ret` are indexed by buffer position. When `grad` is non-null it
/// receives dL/dtheta in the network's flat layout.
inline LossStats ppo_loss(const PolicyNet& net, const ReplayBuffer& buf, std::span<const std::size_t> idx,
                          std::span<const double> adv, std::span<const double> ret, const TrainerConfig& cfg,
                          Eigen::VectorXd* grad) {
  if (buf.feature_dim() != net.input_dim()) throw Error(Errc::DimensionMismatch, "buffer and policy feature size");
  const Eigen::Index B = static_cast<Eigen::Index>(idx.size());
  const Eigen::Index D = net.input_dim();
  LossStats st;
  if (grad) grad->setZero(static_cast<Eigen::Index>(net.size()));
  if (B == 0) return st;

  Eigen::MatrixXd X(D, B);
  for (Eigen::Index j = 0; j < B; ++j)
    X.col(j) = Eigen::Map<const Eigen::VectorXd>(buf.features(idx[static_cast<std::size_t>(j)]).data(), D);
  const Eigen::MatrixXd H1 = ((net.w1() * X).colwise() + net.b1()).array().tanh();
  const Eigen::MatrixXd H2 = ((net.w2() * H1).colwise() + net.b2()).array().tanh();
  const Eigen::MatrixXd L = (net.wp() * H2).colwise() + net.bp();
  const Eigen::RowVectorXd V = (net.wv() * H2).array() + net.bv();

  Eigen::MatrixXd dL = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(kNumActions), B);
  Eigen::RowVectorXd dV(B);
  const double inv_b = 1.0 / static_cast<double>(B);
  int clipped_count = 0;
  for (Eigen::Index j = 0; j < B; ++j) {
    const std::size_t i = idx[static_cast<std::size_t>(j)];
    const ActionMask& mask = buf.mask(i);
    const Probabilities p = detail::masked_softmax(L.col(j).data(), mask);
    const auto a = static_cast<std::size_t>(buf.action(i));
    const double logp = std::log(p[a]);
    const double ratio = std::exp(logp - buf.log_prob(i));
    const double A = adv[i];
    const double clipped_ratio = std::clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip);
    st.policy -= std::min(ratio * A, clipped_ratio * A);
    if (std::abs(ratio - 1.0) > cfg.clip) ++clipped_count;
    st.approx_kl += buf.log_prob(i) - logp;
    // Past the clip boundary on the side the surrogate is minimised, the
    // sample carries no policy gradient.
    const bool saturated = (A > 0 && ratio > 1.0 + cfg.clip) || (A < 0 && ratio < 1.0 - cfg.clip);
    const double g_logp = saturated ? 0.0 : -A * ratio * inv_b;

    double H = 0.0;
    for (std::size_t k = 0; k < kNumActions; ++k)
      if (p[k] > 0.0) H -= p[k] * std::log(p[k]);
    st.entropy += H;

    const double err = V(j) - ret[i];
    st.value += err * err;
    dV(j) = 2.0 * cfg.value_coef * err * inv_b;

    for (std::size_t k = 0; k < kNumActions; ++k) {
      if (!mask[k]) continue;
      double g = g_logp * ((k == a ? 1.0 : 0.0) - p[k]);
      if (p[k] > 0.0) g += cfg.entropy_coef * p[k] * (std::log(p[k]) + H) * inv_b;
      dL(static_cast<Eigen::Index>(k), j) = g;
    }
  }
  st.policy *= inv_b;
  st.value *= inv_b;
  st.entropy *= inv_b;
  st.approx_kl *= inv_b;
  st.clip_fraction = clipped_count * inv_b;
  st.total = st.policy + cfg.value_coef * st.value - cfg.entropy_coef * st.entropy;
  if (!grad) return st;

  double* g = grad->data();
  const Eigen::Index Hd = net.hidden();
  Eigen::Map<RowMatrix> gw1(g + net.off_w1(), Hd, D);
  Eigen::Map<Eigen::VectorXd> gb1(g + net.off_b1(), Hd);
  Eigen::Map<RowMatrix> gw2(g + net.off_w2(), Hd, Hd);
  Eigen::Map<Eigen::VectorXd> gb2(g + net.off_b2(), Hd);
  Eigen::Map<RowMatrix> gwp(g + net.off_wp(), static_cast<Eigen::Index>(kNumActions), Hd);
  Eigen::Map<Eigen::VectorXd> gbp(g + net.off_bp(), static_cast<Eigen::Index>(kNumActions));
  Eigen::Map<RowMatrix> gwv(g + net.off_wv(), 1, Hd);

  gwp.noalias() = dL * H2.transpose();
  gbp = dL.rowwise().sum();
  gwv.noalias() = dV * H2.transpose();
  g[net.off_bv()] = dV.sum();

  const Eigen::MatrixXd dZ2 =
      ((net.wp().transpose() * dL + net.wv().transpose() * dV).array() * (1.0 - H2.array().square())).matrix();
  gw2.noalias() = dZ2 * H1.transpose();
  gb2 = dZ2.rowwise().sum();
  const Eigen::MatrixXd dZ1 = ((net.w2().transpose() * dZ2).array() * (1.0 - H1.array().square())).matrix();
  gw1.noalias() = dZ1 * X.transpose();
  gb1 = dZ1.rowwise().sum();
  return st;
}

// ---------------------------------------------------------------------------
// optimizer

/// First/second moment estimates with bias correction. The SGD switch uses
/// none of the state.
struct OptimizerState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  long steps = 0;
};

inline void optimizer_step(PolicyNet& net, const Eigen::VectorXd& grad, const TrainerConfig& cfg,
                           OptimizerState& state) {
  Eigen::VectorXd& theta = net.params();
  if (cfg.optimizer == OptimizerKind::Sgd) {
    theta -= cfg.learning_rate * grad;
    return;
  }
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  if (state.m.size() != theta.size()) {
    state.m = Eigen::VectorXd::Zero(theta.size());
    state.v = Eigen::VectorXd::Zero(theta.size());
    state.steps = 0;
  }
  ++state.steps;
  state.m = b1 * state.m + (1.0 - b1) * grad;
  state.v = b2 * state.v + (1.0 - b2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.steps));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.steps));
  theta.array() -= cfg.learning_rate * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + eps);
}

/// Scales `grad` in place so its L2 norm is at most `cap`; returns the norm
/// before scaling.
inline double clip_grad_norm(Eigen::VectorXd& grad, double cap) {
  const double norm = grad.norm();
  if (norm > cap) grad *= cap / norm;
  return norm;
}

struct UpdateStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
  double grad_norm = 0.0;
  int minibatches = 0;
};

/// One PPO update over the whole buffer: GAE, advantage normalization, then
/// `epochs` passes of shuffled minibatches.
inline UpdateStats ppo_update(PolicyNet& net, const ReplayBuffer& buf, const TrainerConfig& cfg, Rng& rng,
                              OptimizerState& opt) {
  if (buf.empty()) throw Error(Errc::EmptyBuffer, "ppo_update on an empty buffer");
  validate(cfg);
  const Advantages gae = compute_gae(buf.rewards(), buf.values(), buf.dones(), cfg.gamma, cfg.lambda);
  const std::vector<double> adv = normalize_advantages(gae.advantages);

  const std::size_t n = buf.size();
  std::vector<std::size_t> order(n);
  Eigen::VectorXd grad(static_cast<Eigen::Index>(net.size()));
  UpdateStats out;
  for (int e = 0; e < cfg.epochs; ++e) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t k = n; k > 1; --k) std::swap(order[k - 1], order[rng.below(k)]);
    for (std::size_t lo = 0; lo < n; lo += static_cast<std::size_t>(cfg.minibatch)) {
      const std::size_t hi = std::min(n, lo + static_cast<std::size_t>(cfg.minibatch));
      std::span<const std::size_t> batch(order.data() + lo, hi - lo);
      const LossStats st = ppo_loss(net, buf, batch, adv, gae.returns, cfg, &grad);
      if (!grad.allFinite()) throw Error(Errc::NonFiniteGradient, "non-finite gradient in PPO update");
      out.grad_norm += clip_grad_norm(grad, cfg.max_grad_norm);
      optimizer_step(net, grad, cfg, opt);
      out.policy_loss += st.policy;
      out.value_loss += st.value;
      out.entropy += st.entropy;
      out.clip_fraction += st.clip_fraction;
      out.approx_kl += st.approx_kl;
      ++out.minibatches;
    }
  }
  const double m = out.minibatches;
  out.policy_loss /= m;
  out.value_loss /= m;
  out.entropy /= m;
  out.clip_fraction /= m;
  out.approx_kl /= m;
  out.grad_norm /= m;
  return out;
}

inline UpdateStats ppo_update(PolicyNet& net, const ReplayBuffer& buf, const TrainerConfig& cfg, Rng& rng) {
  OptimizerState fresh;
  return ppo_update(net, buf, cfg, rng, fresh);
}

}  // namespace thoughtcraft
