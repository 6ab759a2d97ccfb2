#pragma once

// Residual bottleneck projector for feature distillation, trained with a
// symmetric (CLIP-style) cross-entropy over correspondence similarity
// matrices.

#include "vsnerf/features.hpp"
#include "vsnerf/optimizer.hpp"

#include <iostream>

namespace vsnerf {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Parameters live in one flat vector, in this order (all row-major):
///   W_down [hidden x c_in], b_down [hidden], W_up [c_out x hidden], b_up [c_out],
///   W_skip [c_out x c_in] (only when c_in != c_out; otherwise the skip is identity).
/// Forward: z = W_up relu(W_down x + b_down) + b_up + skip(x), output z / |z|.
class BottleneckProjector {
 public:
  BottleneckProjector() = default;
  BottleneckProjector(int c_in, int c_out, int hidden, double temperature = 0.07)
      : c_in_(c_in), c_out_(c_out), hidden_(hidden), temperature_(temperature) {
    require(c_in >= 1 && c_out >= 1 && hidden >= 1, "projector: dimensions must be positive");
    require(c_out <= c_in, "projector: output dimension ", c_out, " exceeds input dimension ", c_in);
    require(temperature > 0.0, "projector: temperature must be positive");
    params_.assign(parameter_count(), 0.0);
  }

  int c_in() const { return c_in_; }
  int c_out() const { return c_out_; }
  int hidden() const { return hidden_; }
  double temperature() const { return temperature_; }
  bool has_skip_matrix() const { return c_in_ != c_out_; }

  std::size_t parameter_count() const {
    std::size_t n = static_cast<std::size_t>(hidden_) * c_in_ + hidden_ + static_cast<std::size_t>(c_out_) * hidden_ + c_out_;
    if (has_skip_matrix()) n += static_cast<std::size_t>(c_out_) * c_in_;
    return n;
  }

  AlignedVector<double>& params() { return params_; }
  const AlignedVector<double>& params() const { return params_; }

  struct Offsets {
    std::size_t w_down, b_down, w_up, b_up, w_skip;
  };
  Offsets offsets() const {
    Offsets o{};
    o.w_down = 0;
    o.b_down = o.w_down + static_cast<std::size_t>(hidden_) * c_in_;
    o.w_up = o.b_down + hidden_;
    o.b_up = o.w_up + static_cast<std::size_t>(c_out_) * hidden_;
    o.w_skip = o.b_up + c_out_;
    return o;
  }

  template <typename Vec>
  static auto mat(Vec& v, std::size_t offset, int rows, int cols) {
    using Ptr = decltype(v.data());
    using Scalar = std::remove_pointer_t<Ptr>;
    using M = std::conditional_t<std::is_const_v<Scalar>, const RowMatrix, RowMatrix>;
    return Eigen::Map<M>(v.data() + offset, rows, cols);
  }
  template <typename Vec>
  static auto vec(Vec& v, std::size_t offset, int n) {
    using Scalar = std::remove_pointer_t<decltype(v.data())>;
    using V = std::conditional_t<std::is_const_v<Scalar>, const Eigen::VectorXd, Eigen::VectorXd>;
    return Eigen::Map<V>(v.data() + offset, n);
  }

  /// He-scaled down projection, small up projection, 1/sqrt(c_in) skip.
  static BottleneckProjector random(int c_in, int c_out, int hidden, std::uint64_t seed,
                                    double temperature = 0.07) {
    BottleneckProjector p(c_in, c_out, hidden, temperature);
    Rng rng(derive_seed(seed, 0x5053));
    const auto o = p.offsets();
    auto fill = [&](std::size_t off, std::size_t n, double stddev) {
      for (std::size_t i = 0; i < n; ++i) p.params_[off + i] = stddev * normal01(rng);
    };
    fill(o.w_down, static_cast<std::size_t>(hidden) * c_in, std::sqrt(2.0 / c_in));
    fill(o.w_up, static_cast<std::size_t>(c_out) * hidden, 0.1 * std::sqrt(1.0 / hidden));
    if (p.has_skip_matrix()) fill(o.w_skip, static_cast<std::size_t>(c_out) * c_in, std::sqrt(1.0 / c_in));
    return p;
  }

  friend bool operator==(const BottleneckProjector&, const BottleneckProjector&) = default;

 private:
  int c_in_ = 0;
  int c_out_ = 0;
  int hidden_ = 0;
  double temperature_ = 0.07;
  AlignedVector<double> params_;
};

struct CorrespondenceBatch {
  RowMatrix feats_a;  // K x c_in
  RowMatrix feats_b;  // K x c_in, row k matches row k of feats_a

  void validate() const {
    require(feats_a.rows() == feats_b.rows() && feats_a.cols() == feats_b.cols(),
            "correspondence batch: sides differ in shape");
    require(feats_a.rows() >= 2, "correspondence batch: need K >= 2 correspondences, got ", feats_a.rows());
  }
};

namespace detail {

struct ProjectorTape {
  RowMatrix pre;     // K x hidden, before rectifier
  RowMatrix hidden;  // K x hidden
  RowMatrix z;       // K x c_out, before normalization
  Eigen::VectorXd norms;
  RowMatrix out;     // unit rows
};

inline ProjectorTape projector_forward(const BottleneckProjector& p, const RowMatrix& x) {
  require(x.cols() == p.c_in(), "apply_projector: expected ", p.c_in(), " columns, got ", x.cols());
  const auto& w = p.params();
  const auto o = p.offsets();
  const auto w_down = BottleneckProjector::mat(w, o.w_down, p.hidden(), p.c_in());
  const auto b_down = BottleneckProjector::vec(w, o.b_down, p.hidden());
  const auto w_up = BottleneckProjector::mat(w, o.w_up, p.c_out(), p.hidden());
  const auto b_up = BottleneckProjector::vec(w, o.b_up, p.c_out());

  ProjectorTape t;
  t.pre = (x * w_down.transpose()).rowwise() + b_down.transpose();
  t.hidden = t.pre.cwiseMax(0.0);
  t.z = (t.hidden * w_up.transpose()).rowwise() + b_up.transpose();
  if (p.has_skip_matrix())
    t.z += x * BottleneckProjector::mat(w, o.w_skip, p.c_out(), p.c_in()).transpose();
  else
    t.z += x;
  t.norms = t.z.rowwise().norm();
  t.out.resize(t.z.rows(), t.z.cols());
  std::size_t degenerate = 0;
  for (Eigen::Index k = 0; k < t.z.rows(); ++k) {
    if (t.norms[k] > 0.0 && std::isfinite(t.norms[k])) {
      t.out.row(k) = t.z.row(k) / t.norms[k];
    } else {
      t.out.row(k).setZero();
      t.out(k, 0) = 1.0;
      ++degenerate;
    }
  }
  if (degenerate > 0)
    std::cerr << "warning: projector produced " << degenerate
              << " zero-norm row(s); substituted the first unit basis vector\n";
  return t;
}

/// Accumulates parameter gradients given the adjoint of the unit-norm outputs.
inline void projector_backward(const BottleneckProjector& p, const RowMatrix& x, const ProjectorTape& t,
                               const RowMatrix& d_out, AlignedVector<double>& grads) {
  const auto& w = p.params();
  const auto o = p.offsets();
  RowMatrix dz(t.z.rows(), t.z.cols());
  for (Eigen::Index k = 0; k < t.z.rows(); ++k) {
    if (t.norms[k] > 0.0 && std::isfinite(t.norms[k])) {
      const double proj = t.out.row(k).dot(d_out.row(k));
      dz.row(k) = (d_out.row(k) - proj * t.out.row(k)) / t.norms[k];
    } else {
      dz.row(k).setZero();
    }
  }
  const auto w_up = BottleneckProjector::mat(w, o.w_up, p.c_out(), p.hidden());
  BottleneckProjector::mat(grads, o.w_up, p.c_out(), p.hidden()) += dz.transpose() * t.hidden;
  BottleneckProjector::vec(grads, o.b_up, p.c_out()) += dz.colwise().sum().transpose();
  if (p.has_skip_matrix()) BottleneckProjector::mat(grads, o.w_skip, p.c_out(), p.c_in()) += dz.transpose() * x;
  RowMatrix dh = dz * w_up;
  dh = dh.cwiseProduct((t.pre.array() > 0.0).cast<double>().matrix());
  BottleneckProjector::mat(grads, o.w_down, p.hidden(), p.c_in()) += dh.transpose() * x;
  BottleneckProjector::vec(grads, o.b_down, p.hidden()) += dh.colwise().sum().transpose();
}

}  // namespace detail

/// Row-wise projection to unit-norm low-dimensional features.
inline RowMatrix apply_projector(const BottleneckProjector& p, const RowMatrix& feats) {
  return detail::projector_forward(p, feats).out;
}

struct ContrastiveLoss {
  double loss = 0.0;
  RowMatrix d_logits;
};

/// Mean of the row-wise and column-wise cross-entropies with the diagonal as
/// target, and its gradient with respect to the logits.
inline ContrastiveLoss symmetric_ce_from_logits(const RowMatrix& logits) {
  const Eigen::Index k = logits.rows();
  require(k >= 2 && logits.cols() == k, "symmetric cross-entropy: need a square K x K matrix with K >= 2");
  ContrastiveLoss r;
  r.d_logits = RowMatrix::Zero(k, k);
  const double inv = 1.0 / static_cast<double>(k);
  double row_ce = 0.0;
  double col_ce = 0.0;
  for (Eigen::Index i = 0; i < k; ++i) {
    const double mx = logits.row(i).maxCoeff();
    const Eigen::RowVectorXd e = (logits.row(i).array() - mx).exp().matrix();
    const double s = e.sum();
    row_ce += -(logits(i, i) - mx - std::log(s));
    r.d_logits.row(i) += 0.5 * inv * (e / s);
    r.d_logits(i, i) -= 0.5 * inv;
  }
  for (Eigen::Index j = 0; j < k; ++j) {
    const double mx = logits.col(j).maxCoeff();
    const Eigen::VectorXd e = (logits.col(j).array() - mx).exp().matrix();
    const double s = e.sum();
    col_ce += -(logits(j, j) - mx - std::log(s));
    r.d_logits.col(j) += 0.5 * inv * (e / s);
    r.d_logits(j, j) -= 0.5 * inv;
  }
  r.loss = 0.5 * (row_ce * inv + col_ce * inv);
  return r;
}

struct LossAndGrads {
  double loss = 0.0;
  AlignedVector<double> grads;
};

inline LossAndGrads symmetric_ce_loss(const BottleneckProjector& p, const CorrespondenceBatch& batch) {
  batch.validate();
  const auto ta = detail::projector_forward(p, batch.feats_a);
  const auto tb = detail::projector_forward(p, batch.feats_b);
  const double inv_tau = 1.0 / p.temperature();
  const RowMatrix logits = (ta.out * tb.out.transpose()) * inv_tau;
  const auto ce = symmetric_ce_from_logits(logits);
  LossAndGrads r;
  r.loss = ce.loss;
  r.grads.assign(p.parameter_count(), 0.0);
  const RowMatrix d_a = (ce.d_logits * tb.out) * inv_tau;
  const RowMatrix d_b = (ce.d_logits.transpose() * ta.out) * inv_tau;
  detail::projector_backward(p, batch.feats_a, ta, d_a, r.grads);
  detail::projector_backward(p, batch.feats_b, tb, d_b, r.grads);
  return r;
}

/// Pairwise cosine similarity between the rows of a and b.
inline RowMatrix similarity_matrix(const RowMatrix& a, const RowMatrix& b) {
  require(a.cols() == b.cols(), "similarity_matrix: column mismatch");
  Eigen::VectorXd na = a.rowwise().norm();
  Eigen::VectorXd nb = b.rowwise().norm();
  RowMatrix s = a * b.transpose();
  for (Eigen::Index i = 0; i < s.rows(); ++i)
    for (Eigen::Index j = 0; j < s.cols(); ++j) {
      const double d = na[i] * nb[j];
      s(i, j) = d > 0.0 ? s(i, j) / d : 0.0;
    }
  return s;
}

/// Fraction of rows whose maximum sits on the diagonal (ties count as misses).
inline double diagonal_argmax_fraction(const RowMatrix& sim) {
  require(sim.rows() == sim.cols() && sim.rows() > 0, "diagonal_argmax_fraction: need a square matrix");
  Eigen::Index hits = 0;
  for (Eigen::Index i = 0; i < sim.rows(); ++i) {
    bool best = true;
    for (Eigen::Index j = 0; j < sim.cols() && best; ++j)
      if (j != i && sim(i, j) >= sim(i, i)) best = false;
    hits += best ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(sim.rows());
}

// ---------------------------------------------------------------------------
// Synthetic correspondences: a latent vector shared by both sides of a
// match is mixed with view-specific nuisance into c_in dimensions by a fixed
// random rotation.

struct SyntheticCorrespondenceConfig {
  int c_in = 384;
  int latent_dim = 32;
  double nuisance_scale = 0.8;
  std::uint64_t seed = 7;
};

class SyntheticCorrespondenceGenerator {
 public:
  explicit SyntheticCorrespondenceGenerator(const SyntheticCorrespondenceConfig& cfg) : cfg_(cfg) {
    require(cfg.latent_dim >= 1 && cfg.latent_dim <= cfg.c_in, "synthetic correspondences: bad latent dimension");
    Rng rng(derive_seed(cfg.seed, 0x4d4958));
    RowMatrix g(cfg.c_in, cfg.c_in);
    for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = normal01(rng);
    Eigen::HouseholderQR<RowMatrix> qr(g);
    mixing_ = qr.householderQ() * RowMatrix::Identity(cfg.c_in, cfg.c_in);
  }

  const SyntheticCorrespondenceConfig& config() const { return cfg_; }

  CorrespondenceBatch batch(int k, Rng& rng) const {
    RowMatrix va(k, cfg_.c_in), vb(k, cfg_.c_in);
    for (int r = 0; r < k; ++r) {
      for (int c = 0; c < cfg_.latent_dim; ++c) va(r, c) = vb(r, c) = normal01(rng);
      for (int c = cfg_.latent_dim; c < cfg_.c_in; ++c) {
        va(r, c) = cfg_.nuisance_scale * normal01(rng);
        vb(r, c) = cfg_.nuisance_scale * normal01(rng);
      }
    }
    CorrespondenceBatch b;
    b.feats_a = va * mixing_.transpose();
    b.feats_b = vb * mixing_.transpose();
    return b;
  }

 private:
  SyntheticCorrespondenceConfig cfg_;
  RowMatrix mixing_;
};

// ---------------------------------------------------------------------------
// Training

struct DistillConfig {
  int c_in = 384;
  int c_out = 32;
  int hidden = 64;
  double temperature = 0.07;
  int steps = 2000;
  int batch_size = 50;  // correspondences per image pair
  double lr = 1e-3;
  std::uint64_t seed = 1;
};

struct DistillReport {
  BottleneckProjector projector;
  double final_loss = 0.0;
  std::vector<double> loss_history;
};

/// Minimizes the symmetric cross-entropy with Adam. next_batch(step) supplies
/// the correspondence batch for each step.
template <typename BatchSource>
DistillReport distill_train(BatchSource&& next_batch, const DistillConfig& cfg) {
  require(cfg.steps >= 0, "distill_train: negative step count");
  DistillReport report;
  report.projector = BottleneckProjector::random(cfg.c_in, cfg.c_out, cfg.hidden, cfg.seed, cfg.temperature);
  AdamState<double> state(report.projector.parameter_count());
  AdamConfig adam;
  adam.lr = cfg.lr;
  for (int step = 0; step < cfg.steps; ++step) {
    const CorrespondenceBatch batch = next_batch(static_cast<std::size_t>(step));
    auto lg = symmetric_ce_loss(report.projector, batch);
    if (!std::isfinite(lg.loss)) fail("distill_train: non-finite loss at step ", step);
    adam_step<double>(report.projector.params(), lg.grads, state, adam);
    report.loss_history.push_back(lg.loss);
    report.final_loss = lg.loss;
  }
  return report;
}

// ---------------------------------------------------------------------------
// VSPJ checkpoint: "VSPJ", u32 version=1, u32 c_in, u32 c_out, f32 tau,
// u32 hidden, then the flat parameter vector (documented order above) as
// little-endian f32.

inline constexpr std::uint32_t kProjectorVersion = 1;

inline void write_projector(const std::filesystem::path& path, const BottleneckProjector& p) {
  std::ofstream os(path, std::ios::binary);
  require(static_cast<bool>(os), path.string(), ": cannot open for writing");
  write_magic(os, "VSPJ");
  write_le<std::uint32_t>(os, kProjectorVersion);
  write_le<std::uint32_t>(os, static_cast<std::uint32_t>(p.c_in()));
  write_le<std::uint32_t>(os, static_cast<std::uint32_t>(p.c_out()));
  write_le<float>(os, static_cast<float>(p.temperature()));
  write_le<std::uint32_t>(os, static_cast<std::uint32_t>(p.hidden()));
  for (double x : p.params()) write_le<float>(os, static_cast<float>(x));
  require(static_cast<bool>(os), path.string(), ": write failed");
}

inline BottleneckProjector read_projector(const std::filesystem::path& path) {
  const std::string what = path.string();
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), what, ": cannot open");
  expect_magic(is, "VSPJ", what);
  const auto version = read_le<std::uint32_t>(is, what);
  require(version == kProjectorVersion, what, ": unsupported projector version ", version);
  const auto c_in = read_le<std::uint32_t>(is, what);
  const auto c_out = read_le<std::uint32_t>(is, what);
  const auto tau = read_le<float>(is, what);
  const auto hidden = read_le<std::uint32_t>(is, what);
  require(c_in > 0 && c_in < (1u << 20) && c_out > 0 && hidden > 0 && hidden < (1u << 20), what,
          ": implausible projector dimensions");
  BottleneckProjector p(static_cast<int>(c_in), static_cast<int>(c_out), static_cast<int>(hidden), tau);
  for (double& x : p.params()) x = read_le<float>(is, what);
  return p;
}

}  // namespace vsnerf
