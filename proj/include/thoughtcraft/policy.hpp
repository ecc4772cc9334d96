#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <span>
#include <string>

#include <Eigen/Dense>

#include "thoughtcraft/error.hpp"
#include "thoughtcraft/profile.hpp"
#include "thoughtcraft/rng.hpp"

namespace thoughtcraft {

inline constexpr int kHiddenWidth = 64;

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Probabilities = std::array<double, kNumActions>;

/// Two tanh hidden layers feeding a logit head and a value head.
///
/// All weights live in one flat vector so the optimizer, the checkpoint code
/// and finite-difference tests can treat the network as a point in R^n. Layout,
/// each matrix row-major (out x in):
///   W1 (H x D), b1 (H), W2 (H x H), b2 (H), Wp (A x H), bp (A), wv (H), bv (1)
class PolicyNet {
 public:
  PolicyNet() = default;

  explicit PolicyNet(int input_dim, int hidden = kHiddenWidth) : input_dim_(input_dim), hidden_(hidden) {
    if (input_dim < 1 || hidden < 1) throw Error(Errc::DimensionMismatch, "policy dimensions must be positive");
    theta_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(param_count(input_dim, hidden)));
  }

  /// Glorot-scaled Gaussian trunk; the policy head starts small so the
  /// untrained policy is close to uniform over legal actions.
  static PolicyNet random(int input_dim, Rng& rng, int hidden = kHiddenWidth) {
    PolicyNet net(input_dim, hidden);
    auto fill = [&rng](auto m, double scale) {
      for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = scale * rng.normal();
    };
    fill(net.w1(), std::sqrt(2.0 / (input_dim + hidden)));
    fill(net.w2(), std::sqrt(2.0 / (2.0 * hidden)));
    fill(net.wp(), 0.01 * std::sqrt(1.0 / hidden));
    fill(net.wv(), std::sqrt(1.0 / hidden));
    return net;
  }

  static std::size_t param_count(int d, int h) {
    const std::size_t D = static_cast<std::size_t>(d), H = static_cast<std::size_t>(h), A = kNumActions;
    return H * D + H + H * H + H + A * H + A + H + 1;
  }

  int input_dim() const { return input_dim_; }
  int hidden() const { return hidden_; }
  std::size_t size() const { return static_cast<std::size_t>(theta_.size()); }

  Eigen::VectorXd& params() { return theta_; }
  const Eigen::VectorXd& params() const { return theta_; }

  Eigen::Map<RowMatrix> w1() { return block(theta_.data(), off_w1(), hidden_, input_dim_); }
  Eigen::Map<Eigen::VectorXd> b1() { return vec(theta_.data(), off_b1(), hidden_); }
  Eigen::Map<RowMatrix> w2() { return block(theta_.data(), off_w2(), hidden_, hidden_); }
  Eigen::Map<Eigen::VectorXd> b2() { return vec(theta_.data(), off_b2(), hidden_); }
  Eigen::Map<RowMatrix> wp() { return block(theta_.data(), off_wp(), kNumActions, hidden_); }
  Eigen::Map<Eigen::VectorXd> bp() { return vec(theta_.data(), off_bp(), kNumActions); }
  Eigen::Map<RowMatrix> wv() { return block(theta_.data(), off_wv(), 1, hidden_); }
  double& bv() { return theta_[static_cast<Eigen::Index>(off_bv())]; }

  Eigen::Map<const RowMatrix> w1() const { return cblock(off_w1(), hidden_, input_dim_); }
  Eigen::Map<const Eigen::VectorXd> b1() const { return cvec(off_b1(), hidden_); }
  Eigen::Map<const RowMatrix> w2() const { return cblock(off_w2(), hidden_, hidden_); }
  Eigen::Map<const Eigen::VectorXd> b2() const { return cvec(off_b2(), hidden_); }
  Eigen::Map<const RowMatrix> wp() const { return cblock(off_wp(), kNumActions, hidden_); }
  Eigen::Map<const Eigen::VectorXd> bp() const { return cvec(off_bp(), kNumActions); }
  Eigen::Map<const RowMatrix> wv() const { return cblock(off_wv(), 1, hidden_); }
  double bv() const { return theta_[static_cast<Eigen::Index>(off_bv())]; }

  // Offsets into the flat parameter vector, exposed for gradients of the same shape.
  std::size_t off_w1() const { return 0; }
  std::size_t off_b1() const { return off_w1() + H() * D(); }
  std::size_t off_w2() const { return off_b1() + H(); }
  std::size_t off_b2() const { return off_w2() + H() * H(); }
  std::size_t off_wp() const { return off_b2() + H(); }
  std::size_t off_bp() const { return off_wp() + kNumActions * H(); }
  std::size_t off_wv() const { return off_bp() + kNumActions; }
  std::size_t off_bv() const { return off_wv() + H(); }

  bool operator==(const PolicyNet& o) const {
    return input_dim_ == o.input_dim_ && hidden_ == o.hidden_ && theta_.size() == o.theta_.size() &&
           (theta_.size() == 0 || std::memcmp(theta_.data(), o.theta_.data(), size() * sizeof(double)) == 0);
  }

 private:
  std::size_t D() const { return static_cast<std::size_t>(input_dim_); }
  std::size_t H() const { return static_cast<std::size_t>(hidden_); }
  static Eigen::Map<RowMatrix> block(double* base, std::size_t off, Eigen::Index r, Eigen::Index c) {
    return Eigen::Map<RowMatrix>(base + off, r, c);
  }
  static Eigen::Map<Eigen::VectorXd> vec(double* base, std::size_t off, Eigen::Index n) {
    return Eigen::Map<Eigen::VectorXd>(base + off, n);
  }
  Eigen::Map<const RowMatrix> cblock(std::size_t off, Eigen::Index r, Eigen::Index c) const {
    return Eigen::Map<const RowMatrix>(theta_.data() + off, r, c);
  }
  Eigen::Map<const Eigen::VectorXd> cvec(std::size_t off, Eigen::Index n) const {
    return Eigen::Map<const Eigen::VectorXd>(theta_.data() + off, n);
  }

  int input_dim_ = 0;
  int hidden_ = 0;
  Eigen::VectorXd theta_;
};

struct PolicyOutput {
  Probabilities probs{};
  double value = 0.0;
};

namespace detail {

/// Softmax restricted to legal entries; illegal entries get probability 0.
inline Probabilities masked_softmax(const double* logits, const ActionMask& mask) {
  double hi = -std::numeric_limits<double>::infinity();
  bool any = false;
  for (std::size_t a = 0; a < kNumActions; ++a)
    if (mask[a]) {
      hi = std::max(hi, logits[a]);
      any = true;
    }
  if (!any) throw Error(Errc::EmptyMask, "no legal action");
  Probabilities p{};
  double z = 0.0;
  for (std::size_t a = 0; a < kNumActions; ++a)
    if (mask[a]) z += p[a] = std::exp(logits[a] - hi);
  for (double& v : p) v /= z;
  return p;
}

}  // namespace detail

inline PolicyOutput forward(const PolicyNet& net, std::span<const double> features, const ActionMask& mask) {
  if (static_cast<int>(features.size()) != net.input_dim())
    throw Error(Errc::DimensionMismatch, "expected " + std::to_string(net.input_dim()) + " features, got " +
                                             std::to_string(features.size()));
  Eigen::Map<const Eigen::VectorXd> x(features.data(), static_cast<Eigen::Index>(features.size()));
  const Eigen::VectorXd h1 = (net.w1() * x + net.b1()).array().tanh();
  const Eigen::VectorXd h2 = (net.w2() * h1 + net.b2()).array().tanh();
  const Eigen::VectorXd logits = net.wp() * h2 + net.bp();
  PolicyOutput out;
  out.probs = detail::masked_softmax(logits.data(), mask);
  out.value = (net.wv() * h2)(0, 0) + net.bv();
  return out;
}

inline ActionMask full_mask() {
  ActionMask m;
  m.fill(true);
  return m;
}

struct SampledAction {
  int action = 0;
  double log_prob = 0.0;
};

inline void check_distribution(const Probabilities& p) {
  double sum = 0.0;
  for (double v : p) {
    if (!std::isfinite(v) || v < 0.0) throw Error(Errc::InvalidDistribution, "probabilities must be finite and >= 0");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-6) throw Error(Errc::InvalidDistribution, "probabilities sum to " + std::to_string(sum));
}

/// Inverse-CDF draw. Zero-probability entries are never returned.
inline SampledAction sample_action(const Probabilities& p, Rng& rng) {
  check_distribution(p);
  const double u = rng.uniform();
  double acc = 0.0;
  int last = -1;
  for (std::size_t a = 0; a < kNumActions; ++a) {
    if (p[a] <= 0.0) continue;
    last = static_cast<int>(a);
    acc += p[a];
    if (u < acc) return {last, std::log(p[a])};
  }
  // u landed in the rounding slack above the final cumulative sum.
  return {last, std::log(p[static_cast<std::size_t>(last)])};
}

/// Greedy choice, ties broken towards the lower action index.
inline int argmax_action(const Probabilities& p) {
  int best = 0;
  for (std::size_t a = 1; a < kNumActions; ++a)
    if (p[a] > p[static_cast<std::size_t>(best)]) best = static_cast<int>(a);
  return best;
}

// ---------------------------------------------------------------------------
// checkpoints
//
// Little-endian binary: magic "TCPOLICY", u32 version, u32 input_dim,
// u32 hidden, u32 actions, u64 count, then `count` IEEE doubles in the flat
// layout above.

inline constexpr char kCheckpointMagic[8] = {'T', 'C', 'P', 'O', 'L', 'I', 'C', 'Y'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline void save_checkpoint(const PolicyNet& net, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::EnvironmentFailure, "cannot write checkpoint '" + path.string() + "'");
  auto put32 = [&](std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); };
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  put32(kCheckpointVersion);
  put32(static_cast<std::uint32_t>(net.input_dim()));
  put32(static_cast<std::uint32_t>(net.hidden()));
  put32(static_cast<std::uint32_t>(kNumActions));
  const std::uint64_t n = net.size();
  out.write(reinterpret_cast<const char*>(&n), sizeof n);
  out.write(reinterpret_cast<const char*>(net.params().data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (!out) throw Error(Errc::EnvironmentFailure, "short write to '" + path.string() + "'");
}

inline PolicyNet load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::FileMissing, "cannot open checkpoint '" + path.string() + "'");
  auto bad = [&](const std::string& why) { return Error(Errc::MalformedRecord, "checkpoint '" + path.string() + "': " + why); };
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) throw bad("bad magic");
  std::uint32_t version = 0, dim = 0, hidden = 0, actions = 0;
  std::uint64_t n = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  in.read(reinterpret_cast<char*>(&dim), sizeof dim);
  in.read(reinterpret_cast<char*>(&hidden), sizeof hidden);
  in.read(reinterpret_cast<char*>(&actions), sizeof actions);
  in.read(reinterpret_cast<char*>(&n), sizeof n);
  if (!in) throw bad("truncated header");
  if (version != kCheckpointVersion) throw bad("unsupported version " + std::to_string(version));
  if (actions != kNumActions) throw bad("action count " + std::to_string(actions));
  if (dim == 0 || hidden == 0 || dim > 1u << 20 || hidden > 1u << 16) throw bad("implausible layer sizes");
  PolicyNet net(static_cast<int>(dim), static_cast<int>(hidden));
  if (n != net.size()) throw bad("parameter count does not match layer sizes");
  in.read(reinterpret_cast<char*>(net.params().data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (!in) throw bad("truncated parameters");
  for (Eigen::Index i = 0; i < net.params().size(); ++i)
    if (!std::isfinite(net.params()[i])) throw bad("non-finite parameter");
  return net;
}

}  // namespace thoughtcraft
