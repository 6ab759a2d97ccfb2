#pragma once

// Frequency-encoded MLP radiance field with exact reverse-mode gradients.
//
// Layout of the network (all hidden activations are rectifiers):
//   trunk:  enc(contract(x)) -> [width] x depth -> (sigma_raw, geo[geo_features])
//   head:   (geo, enc(d))    -> [head_width]    -> rgb_raw[3]
//   sigma = softplus(sigma_raw), rgb = sigmoid(rgb_raw)

#include "vsnerf/geometry.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <fstream>
#include <numbers>
#include <span>

namespace vsnerf {

struct PositionalEncoding {
  int num_frequencies = 6;
  bool include_input = true;

  int output_dim(int input_dim = 3) const { return input_dim * (2 * num_frequencies + (include_input ? 1 : 0)); }

  /// Rows: [x (optional), sin(2^0 pi x), cos(2^0 pi x), sin(2^1 pi x), ...].
  template <typename Scalar>
  void encode(const Eigen::Matrix<Scalar, 3, Eigen::Dynamic>& x,
              Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& out) const {
    out.resize(output_dim(3), x.cols());
    int row = 0;
    if (include_input) {
      out.template topRows<3>() = x;
      row = 3;
    }
    Scalar freq = static_cast<Scalar>(std::numbers::pi);
    for (int l = 0; l < num_frequencies; ++l) {
      out.middleRows(row, 3) = (freq * x).array().sin().matrix();
      out.middleRows(row + 3, 3) = (freq * x).array().cos().matrix();
      row += 6;
      freq *= Scalar(2);
    }
  }
};

struct FieldConfig {
  int pos_frequencies = 6;
  int dir_frequencies = 2;
  bool include_input = true;
  int width = 64;
  int depth = 4;
  int geo_features = 15;
  int head_width = 32;

  PositionalEncoding position_encoding() const { return {pos_frequencies, include_input}; }
  PositionalEncoding direction_encoding() const { return {dir_frequencies, include_input}; }

  void validate() const {
    require(pos_frequencies >= 0 && dir_frequencies >= 0, "field: frequency counts must be >= 0");
    require(width >= 1 && head_width >= 1, "field: hidden widths must be >= 1");
    require(depth >= 0, "field: depth must be >= 0");
    require(geo_features >= 0, "field: geo_features must be >= 0");
    require(position_encoding().output_dim() >= 1, "field: empty position encoding");
  }

  friend bool operator==(const FieldConfig&, const FieldConfig&) = default;
};

struct LayerShape {
  int in = 0;
  int out = 0;
  std::size_t weight_offset = 0;  // out x in, row-major
  std::size_t bias_offset = 0;    // out

  friend bool operator==(const LayerShape&, const LayerShape&) = default;
};

template <typename Scalar>
using DynMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
struct FieldOutputs {
  Eigen::Matrix<Scalar, 1, Eigen::Dynamic> sigma;
  Eigen::Matrix<Scalar, 3, Eigen::Dynamic> rgb;
};

/// Intermediate activations kept for the backward pass.
template <typename Scalar>
struct FieldTape {
  DynMatrix<Scalar> enc_dir;
  std::vector<DynMatrix<Scalar>> trunk_in;   // input of each trunk layer (incl. output layer)
  std::vector<DynMatrix<Scalar>> trunk_pre;  // pre-activation of each hidden trunk layer
  DynMatrix<Scalar> trunk_out;               // (1 + geo) x P
  DynMatrix<Scalar> head_in;
  DynMatrix<Scalar> head_pre;
  DynMatrix<Scalar> head_hidden;
  FieldOutputs<Scalar> out;
};

namespace detail {

template <typename Scalar>
Scalar softplus(Scalar x) {
  return std::max(x, Scalar(0)) + std::log1p(std::exp(-std::abs(x)));
}

template <typename Scalar>
Scalar sigmoid(Scalar x) {
  if (x >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-x));
  const Scalar e = std::exp(x);
  return e / (Scalar(1) + e);
}

}  // namespace detail

template <typename Scalar>
class RadianceField {
 public:
  using Matrix = DynMatrix<Scalar>;
  using RowMajorMap = Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using RowMajorMutMap = Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

  RadianceField() = default;
  explicit RadianceField(const FieldConfig& cfg) : cfg_(cfg) {
    cfg.validate();
    std::size_t offset = 0;
    auto add = [&](int in, int out) {
      LayerShape l{in, out, offset, offset + static_cast<std::size_t>(in) * out};
      offset = l.bias_offset + out;
      return l;
    };
    int in = cfg.position_encoding().output_dim();
    for (int i = 0; i < cfg.depth; ++i) {
      trunk_.push_back(add(in, cfg.width));
      in = cfg.width;
    }
    trunk_.push_back(add(in, 1 + cfg.geo_features));
    head_hidden_ = add(cfg.geo_features + cfg.direction_encoding().output_dim(), cfg.head_width);
    head_out_ = add(cfg.head_width, 3);
    params_.assign(offset, Scalar(0));
  }

  const FieldConfig& config() const { return cfg_; }
  std::size_t parameter_count() const { return params_.size(); }
  AlignedVector<Scalar>& params() { return params_; }
  const AlignedVector<Scalar>& params() const { return params_; }

  /// Trunk layers (hidden layers followed by the density/geo output layer),
  /// then head hidden and head output.
  std::vector<LayerShape> layers() const {
    auto all = trunk_;
    all.push_back(head_hidden_);
    all.push_back(head_out_);
    return all;
  }

  template <typename Other>
  RadianceField<Other> cast() const {
    RadianceField<Other> f(cfg_);
    std::transform(params_.begin(), params_.end(), f.params().begin(), [](Scalar x) { return static_cast<Other>(x); });
    return f;
  }

  /// Zeroes the density/geo output layer and the color output layer.
  void zero_output_layers() {
    for (const auto& l : {trunk_.back(), head_out_})
      std::fill(params_.begin() + l.weight_offset, params_.begin() + l.bias_offset + l.out, Scalar(0));
  }

  /// Forward pass over P points; positions are contracted before encoding.
  FieldOutputs<Scalar> forward(const Eigen::Matrix<double, 3, Eigen::Dynamic>& positions,
                               const Eigen::Matrix<double, 3, Eigen::Dynamic>& directions,
                               FieldTape<Scalar>* tape = nullptr) const {
    require(positions.cols() == directions.cols(), "field: ", positions.cols(), " positions vs ",
            directions.cols(), " directions");
    require(positions.allFinite() && directions.allFinite(), "field: non-finite query");
    const Eigen::Index n = positions.cols();
    FieldTape<Scalar> local;
    FieldTape<Scalar>& t = tape ? *tape : local;

    Eigen::Matrix<Scalar, 3, Eigen::Dynamic> xc(3, n);
    for (Eigen::Index i = 0; i < n; ++i) xc.col(i) = contract(positions.col(i)).template cast<Scalar>();
    const Eigen::Matrix<Scalar, 3, Eigen::Dynamic> dirs = directions.template cast<Scalar>();

    t.trunk_in.resize(trunk_.size());
    t.trunk_pre.resize(trunk_.size() - 1);
    cfg_.position_encoding().encode(xc, t.trunk_in[0]);
    for (std::size_t l = 0; l + 1 < trunk_.size(); ++l) {
      t.trunk_pre[l] = affine(trunk_[l], t.trunk_in[l]);
      t.trunk_in[l + 1] = t.trunk_pre[l].cwiseMax(Scalar(0));
    }
    t.trunk_out = affine(trunk_.back(), t.trunk_in.back());

    cfg_.direction_encoding().encode(dirs, t.enc_dir);
    t.head_in.resize(cfg_.geo_features + t.enc_dir.rows(), n);
    t.head_in.topRows(cfg_.geo_features) = t.trunk_out.bottomRows(cfg_.geo_features);
    t.head_in.bottomRows(t.enc_dir.rows()) = t.enc_dir;
    t.head_pre = affine(head_hidden_, t.head_in);
    t.head_hidden = t.head_pre.cwiseMax(Scalar(0));
    const Matrix rgb_raw = affine(head_out_, t.head_hidden);

    t.out.sigma.resize(1, n);
    t.out.rgb.resize(3, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      t.out.sigma(0, i) = detail::softplus(t.trunk_out(0, i));
      for (int c = 0; c < 3; ++c) t.out.rgb(c, i) = detail::sigmoid(rgb_raw(c, i));
    }
    return t.out;
  }

  /// Accumulates d(loss)/d(params) into `grads` given adjoints of sigma and rgb.
  void backward(const FieldTape<Scalar>& t, const Eigen::Matrix<Scalar, 1, Eigen::Dynamic>& d_sigma,
                const Eigen::Matrix<Scalar, 3, Eigen::Dynamic>& d_rgb, std::span<Scalar> grads) const {
    const Eigen::Index n = t.out.sigma.cols();
    require(d_sigma.cols() == n && d_rgb.cols() == n, "field backward: adjoint shape mismatch");
    require(grads.size() == params_.size(), "field backward: gradient buffer has wrong size");

    Matrix d_rgb_raw(3, n);
    Matrix d_trunk_out = Matrix::Zero(1 + cfg_.geo_features, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (int c = 0; c < 3; ++c) {
        const Scalar y = t.out.rgb(c, i);
        d_rgb_raw(c, i) = d_rgb(c, i) * y * (Scalar(1) - y);
      }
      d_trunk_out(0, i) = d_sigma(0, i) * detail::sigmoid(t.trunk_out(0, i));
    }
    Matrix d_head_hidden = affine_backward(head_out_, t.head_hidden, d_rgb_raw, grads);
    Matrix d_head_pre = d_head_hidden.cwiseProduct((t.head_pre.array() > Scalar(0)).template cast<Scalar>().matrix());
    Matrix d_head_in = affine_backward(head_hidden_, t.head_in, d_head_pre, grads);
    d_trunk_out.bottomRows(cfg_.geo_features) = d_head_in.topRows(cfg_.geo_features);

    Matrix d = affine_backward(trunk_.back(), t.trunk_in.back(), d_trunk_out, grads);
    for (std::size_t l = trunk_.size() - 1; l-- > 0;) {
      d = d.cwiseProduct((t.trunk_pre[l].array() > Scalar(0)).template cast<Scalar>().matrix());
      d = affine_backward(trunk_[l], t.trunk_in[l], d, grads, l > 0);
    }
  }

  friend bool operator==(const RadianceField&, const RadianceField&) = default;

 private:
  RowMajorMap weight(const LayerShape& l) const { return RowMajorMap(params_.data() + l.weight_offset, l.out, l.in); }
  Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> bias(const LayerShape& l) const {
    return {params_.data() + l.bias_offset, l.out};
  }

  Matrix affine(const LayerShape& l, const Matrix& x) const {
    Matrix y = weight(l) * x;
    y.colwise() += bias(l);
    return y;
  }

  /// Adds dW = dy x^T and db = sum(dy) to grads; returns dx = W^T dy.
  Matrix affine_backward(const LayerShape& l, const Matrix& x, const Matrix& dy, std::span<Scalar> grads,
                         bool need_input_grad = true) const {
    RowMajorMutMap(grads.data() + l.weight_offset, l.out, l.in).noalias() += dy * x.transpose();
    Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>(grads.data() + l.bias_offset, l.out) += dy.rowwise().sum();
    if (!need_input_grad) return Matrix();
    return weight(l).transpose() * dy;
  }

  FieldConfig cfg_;
  std::vector<LayerShape> trunk_;
  LayerShape head_hidden_;
  LayerShape head_out_;
  AlignedVector<Scalar> params_;
};

/// He-normal weights for rectifier layers, 1/sqrt(fan_in) for output
/// layers, zero biases. Deterministic given the seed.
template <typename Scalar = double>
RadianceField<Scalar> init_field(const FieldConfig& cfg, std::uint64_t seed) {
  RadianceField<Scalar> field(cfg);
  Rng rng(derive_seed(seed, 0x4649454c44));
  const auto layers = field.layers();
  const std::size_t trunk_out = static_cast<std::size_t>(cfg.depth);
  const std::size_t head_out = layers.size() - 1;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    const bool output = i == trunk_out || i == head_out;
    const double stddev = std::sqrt((output ? 1.0 : 2.0) / l.in);
    for (std::size_t k = 0; k < static_cast<std::size_t>(l.in) * l.out; ++k)
      field.params()[l.weight_offset + k] = static_cast<Scalar>(stddev * normal01(rng));
  }
  return field;
}

template <typename Scalar>
std::pair<Scalar, Rgb<Scalar>> query(const RadianceField<Scalar>& field, const Vec3& x, const Vec3& d) {
  require(std::abs(d.norm() - 1.0) <= 1e-6, "field query: direction must be unit length");
  Eigen::Matrix<double, 3, Eigen::Dynamic> xs(3, 1), ds(3, 1);
  xs.col(0) = x;
  ds.col(0) = d;
  const auto out = field.forward(xs, ds);
  return {out.sigma(0, 0), out.rgb.col(0)};
}

// ---------------------------------------------------------------------------
// VSFD checkpoint: "VSFD", u32 version=1, u32 pos_frequencies,
// u32 dir_frequencies, u32 include_input, u32 width, u32 depth,
// u32 geo_features, u32 head_width, u32 parameter count, then the parameters
// as little-endian f32 layer by layer (trunk, head hidden, head output), each
// layer as its row-major weight matrix followed by its bias.

inline constexpr std::uint32_t kFieldVersion = 1;

template <typename Scalar>
void write_field(const std::filesystem::path& path, const RadianceField<Scalar>& field) {
  std::ofstream os(path, std::ios::binary);
  require(static_cast<bool>(os), path.string(), ": cannot open for writing");
  const auto& c = field.config();
  write_magic(os, "VSFD");
  write_le<std::uint32_t>(os, kFieldVersion);
  for (int v : {c.pos_frequencies, c.dir_frequencies, c.include_input ? 1 : 0, c.width, c.depth, c.geo_features,
                c.head_width})
    write_le<std::uint32_t>(os, static_cast<std::uint32_t>(v));
  write_le<std::uint32_t>(os, static_cast<std::uint32_t>(field.parameter_count()));
  for (Scalar x : field.params()) write_le<float>(os, static_cast<float>(x));
  require(static_cast<bool>(os), path.string(), ": write failed");
}

template <typename Scalar = double>
RadianceField<Scalar> read_field(const std::filesystem::path& path) {
  const std::string what = path.string();
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), what, ": cannot open");
  expect_magic(is, "VSFD", what);
  const auto version = read_le<std::uint32_t>(is, what);
  require(version == kFieldVersion, what, ": unsupported field version ", version);
  std::uint32_t h[7];
  for (auto& v : h) v = read_le<std::uint32_t>(is, what);
  for (auto v : h) require(v < (1u << 16), what, ": implausible architecture header");
  FieldConfig cfg;
  cfg.pos_frequencies = static_cast<int>(h[0]);
  cfg.dir_frequencies = static_cast<int>(h[1]);
  cfg.include_input = h[2] != 0;
  cfg.width = static_cast<int>(h[3]);
  cfg.depth = static_cast<int>(h[4]);
  cfg.geo_features = static_cast<int>(h[5]);
  cfg.head_width = static_cast<int>(h[6]);
  RadianceField<Scalar> field(cfg);
  const auto count = read_le<std::uint32_t>(is, what);
  require(count == field.parameter_count(), what, ": parameter count ", count, " does not match architecture (",
          field.parameter_count(), ")");
  for (Scalar& x : field.params()) x = static_cast<Scalar>(read_le<float>(is, what));
  return field;
}

}  // namespace vsnerf
