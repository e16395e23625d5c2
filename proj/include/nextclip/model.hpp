#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nextclip/clipseq.hpp"
#include "nextclip/error.hpp"
#include "nextclip/maskgen.hpp"
#include "nextclip/rng.hpp"

namespace nextclip {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

struct ModelConfig {
  int depth = 4;
  int width = 128;
  int heads = 4;
  int patch_dim = 16;
  int max_positions = 256;  // largest global frame index + 1
  int num_classes = 0;      // 0 = unconditional
  int mlp_ratio = 4;
  int alpha_features = 32;
  std::uint64_t seed = 0;

  void validate() const {
    require(depth > 0 && width > 0 && heads > 0 && patch_dim > 0 && max_positions > 0 &&
                mlp_ratio > 0 && alpha_features > 0 && alpha_features % 2 == 0,
            ErrorCode::InvalidConfig, "model dimensions must be positive");
    require(num_classes >= 0, ErrorCode::InvalidConfig, "class count must be non-negative");
    require(width % heads == 0, ErrorCode::InvalidConfig, "width must be divisible by heads");
    require(width % 8 == 0, ErrorCode::InvalidConfig, "width must be a multiple of 8");
  }

  bool operator==(const ModelConfig&) const = default;
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"depth", c.depth},
                     {"width", c.width},
                     {"heads", c.heads},
                     {"patch_dim", c.patch_dim},
                     {"max_positions", c.max_positions},
                     {"num_classes", c.num_classes},
                     {"mlp_ratio", c.mlp_ratio},
                     {"alpha_features", c.alpha_features},
                     {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  j.at("depth").get_to(c.depth);
  j.at("width").get_to(c.width);
  j.at("heads").get_to(c.heads);
  j.at("patch_dim").get_to(c.patch_dim);
  j.at("max_positions").get_to(c.max_positions);
  j.at("num_classes").get_to(c.num_classes);
  j.at("mlp_ratio").get_to(c.mlp_ratio);
  j.at("alpha_features").get_to(c.alpha_features);
  j.at("seed").get_to(c.seed);
}

template <typename Scalar>
struct LayerParams {
  Matrix<Scalar> ln1_gain, ln1_bias;
  Matrix<Scalar> qkv_weight, qkv_bias;  // d x 3d
  Matrix<Scalar> attn_out_weight, attn_out_bias;
  Matrix<Scalar> ln2_gain, ln2_bias;
  Matrix<Scalar> fc_weight, fc_bias;  // d x (ratio*d)
  Matrix<Scalar> proj_weight, proj_bias;
};

/// All learned tensors. Vectors are stored as 1 x n matrices so every group
/// shares one type for optimizers, serialization and gradient checks.
template <typename Scalar>
struct ModelParams {
  ModelConfig config;
  Matrix<Scalar> hint_embed;   // rows: IMG_OPEN, IMG_CLOSE, DIFF
  Matrix<Scalar> class_embed;  // num_classes x d
  Matrix<Scalar> alpha_weight, alpha_bias;
  Matrix<Scalar> clean_weight, clean_bias;  // clean PATCH input projection, D x d
  Matrix<Scalar> noisy_weight, noisy_bias;  // noisy PATCH input projection, D x d
  std::vector<LayerParams<Scalar>> layers;
  Matrix<Scalar> final_gain, final_bias;
  Matrix<Scalar> head_weight, head_bias;  // d x D, x0 output head

  /// Visits every tensor in a fixed order as f(name, matrix, decays).
  template <typename F>
  void for_each(F&& f) {
    visit(*this, f);
  }
  template <typename F>
  void for_each(F&& f) const {
    visit(*this, f);
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for_each([&](const std::string&, const Matrix<Scalar>& m, bool) { n += m.size(); });
    return n;
  }

  /// Same shapes and config, all zeros.
  ModelParams zeros_like() const {
    ModelParams out = *this;
    out.for_each([](const std::string&, Matrix<Scalar>& m, bool) { m.setZero(); });
    return out;
  }

  template <typename To>
  ModelParams<To> cast() const {
    ModelParams<To> out = allocate<To>(config);
    std::vector<const Matrix<Scalar>*> src;
    for_each([&](const std::string&, const Matrix<Scalar>& m, bool) { src.push_back(&m); });
    std::size_t i = 0;
    out.for_each([&](const std::string&, Matrix<To>& m, bool) { m = src[i++]->template cast<To>(); });
    return out;
  }

  template <typename T = Scalar>
  static ModelParams<T> allocate(const ModelConfig& cfg) {
    cfg.validate();
    const int d = cfg.width, hidden = cfg.mlp_ratio * cfg.width;
    ModelParams<T> p;
    p.config = cfg;
    p.hint_embed = Matrix<T>::Zero(3, d);
    p.class_embed = Matrix<T>::Zero(cfg.num_classes, d);
    p.alpha_weight = Matrix<T>::Zero(cfg.alpha_features, d);
    p.alpha_bias = Matrix<T>::Zero(1, d);
    p.clean_weight = Matrix<T>::Zero(cfg.patch_dim, d);
    p.clean_bias = Matrix<T>::Zero(1, d);
    p.noisy_weight = Matrix<T>::Zero(cfg.patch_dim, d);
    p.noisy_bias = Matrix<T>::Zero(1, d);
    p.layers.resize(cfg.depth);
    for (auto& l : p.layers) {
      l.ln1_gain = Matrix<T>::Ones(1, d);
      l.ln1_bias = Matrix<T>::Zero(1, d);
      l.qkv_weight = Matrix<T>::Zero(d, 3 * d);
      l.qkv_bias = Matrix<T>::Zero(1, 3 * d);
      l.attn_out_weight = Matrix<T>::Zero(d, d);
      l.attn_out_bias = Matrix<T>::Zero(1, d);
      l.ln2_gain = Matrix<T>::Ones(1, d);
      l.ln2_bias = Matrix<T>::Zero(1, d);
      l.fc_weight = Matrix<T>::Zero(d, hidden);
      l.fc_bias = Matrix<T>::Zero(1, hidden);
      l.proj_weight = Matrix<T>::Zero(hidden, d);
      l.proj_bias = Matrix<T>::Zero(1, d);
    }
    p.final_gain = Matrix<T>::Ones(1, d);
    p.final_bias = Matrix<T>::Zero(1, d);
    p.head_weight = Matrix<T>::Zero(d, cfg.patch_dim);
    p.head_bias = Matrix<T>::Zero(1, cfg.patch_dim);
    return p;
  }

 private:
  template <typename Self, typename F>
  static void visit(Self& s, F& f) {
    f("hint_embed", s.hint_embed, false);
    f("class_embed", s.class_embed, false);
    f("alpha_weight", s.alpha_weight, true);
    f("alpha_bias", s.alpha_bias, false);
    f("clean_weight", s.clean_weight, true);
    f("clean_bias", s.clean_bias, false);
    f("noisy_weight", s.noisy_weight, true);
    f("noisy_bias", s.noisy_bias, false);
    for (std::size_t i = 0; i < s.layers.size(); ++i) {
      auto& l = s.layers[i];
      const std::string pre = "layer" + std::to_string(i) + ".";
      f(pre + "ln1_gain", l.ln1_gain, false);
      f(pre + "ln1_bias", l.ln1_bias, false);
      f(pre + "qkv_weight", l.qkv_weight, true);
      f(pre + "qkv_bias", l.qkv_bias, false);
      f(pre + "attn_out_weight", l.attn_out_weight, true);
      f(pre + "attn_out_bias", l.attn_out_bias, false);
      f(pre + "ln2_gain", l.ln2_gain, false);
      f(pre + "ln2_bias", l.ln2_bias, false);
      f(pre + "fc_weight", l.fc_weight, true);
      f(pre + "fc_bias", l.fc_bias, false);
      f(pre + "proj_weight", l.proj_weight, true);
      f(pre + "proj_bias", l.proj_bias, false);
    }
    f("final_gain", s.final_gain, false);
    f("final_bias", s.final_bias, false);
    f("head_weight", s.head_weight, true);
    f("head_bias", s.head_bias, false);
  }
};

/// Initialization: weight matrices ~ N(0, 1/fan_in), residual-branch output
/// projections additionally scaled by 1/sqrt(2*depth), embedding tables
/// ~ N(0, 1), layer-norm gains 1, every bias (including the head's) 0.
template <typename Scalar = float>
ModelParams<Scalar> init_params(const ModelConfig& cfg) {
  ModelParams<Scalar> p = ModelParams<Scalar>::template allocate<Scalar>(cfg);
  Rng rng = Rng::derive(cfg.seed, "init");
  auto fill = [&](Matrix<Scalar>& m, double stddev) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(stddev * rng.normal());
  };
  const double d = cfg.width, hidden = cfg.mlp_ratio * cfg.width;
  const double residual = 1.0 / std::sqrt(2.0 * cfg.depth);
  fill(p.hint_embed, 1.0);
  fill(p.class_embed, 1.0);
  fill(p.alpha_weight, 1.0 / std::sqrt(double(cfg.alpha_features)));
  fill(p.clean_weight, 1.0 / std::sqrt(double(cfg.patch_dim)));
  fill(p.noisy_weight, 1.0 / std::sqrt(double(cfg.patch_dim)));
  for (auto& l : p.layers) {
    fill(l.qkv_weight, 1.0 / std::sqrt(d));
    fill(l.attn_out_weight, residual / std::sqrt(d));
    fill(l.fc_weight, 1.0 / std::sqrt(d));
    fill(l.proj_weight, residual / std::sqrt(hidden));
  }
  fill(p.head_weight, 1.0 / std::sqrt(d));
  return p;
}

// ---------------------------------------------------------------------------
// Embedding

namespace detail {

// Writes sin/cos pairs of `pos` at geometrically spaced frequencies into `out`.
template <typename Scalar, typename Row>
void sinusoid(Row&& out, int offset, int dims, double pos, double base) {
  for (int j = 0; j + 1 < dims; j += 2) {
    const double freq = std::pow(base, -static_cast<double>(j) / dims);
    out(offset + j) = static_cast<Scalar>(std::sin(pos * freq));
    out(offset + j + 1) = static_cast<Scalar>(std::cos(pos * freq));
  }
}

}  // namespace detail

/// Sinusoidal features of the flow-matching weight alpha in [0,1]. The
/// lowest frequency is pi/2 so the first sine is strictly increasing on
/// [0,1], which makes the map injective.
template <typename Scalar>
Matrix<Scalar> alpha_features(double alpha, int features) {
  Matrix<Scalar> f(1, features);
  for (int j = 0; j < features / 2; ++j) {
    const double freq = 0.5 * std::numbers::pi * std::pow(1.5, j);
    f(0, 2 * j) = static_cast<Scalar>(std::sin(alpha * freq));
    f(0, 2 * j + 1) = static_cast<Scalar>(std::cos(alpha * freq));
  }
  return f;
}

/// Additive position code from (global frame, patch row, patch column).
/// Half the width encodes the frame, a quarter each the row and column.
/// Hint and ALPHA tokens take their frame's first position; extras get zero.
template <typename Scalar>
Matrix<Scalar> positional_codes(const TokenSequence& seq, int width) {
  const int n = static_cast<int>(seq.size());
  const int frame_dims = width / 2, row_dims = width / 4, col_dims = width - frame_dims - row_dims;
  const int cols = std::max(seq.grid.cols, 1);
  Matrix<Scalar> pos = Matrix<Scalar>::Zero(n, width);
  for (int i = 0; i < n; ++i) {
    const Token& t = seq.tokens[i];
    if (t.role == Role::Extra) continue;
    const int patch = t.kind == TokenKind::Patch ? t.ordinal : 0;
    auto row = pos.row(i);
    detail::sinusoid<Scalar>(row, 0, frame_dims, t.global_frame, 10000.0);
    detail::sinusoid<Scalar>(row, frame_dims, row_dims, patch / cols, 100.0);
    detail::sinusoid<Scalar>(row, frame_dims + row_dims, col_dims, patch % cols, 100.0);
  }
  return pos;
}

namespace detail {

inline int hint_row(TokenKind k) {
  switch (k) {
    case TokenKind::ImgOpen: return 0;
    case TokenKind::ImgClose: return 1;
    case TokenKind::Diff: return 2;
    default: return -1;
  }
}

}  // namespace detail

template <typename Scalar>
Matrix<Scalar> embed_sequence(const TokenSequence& seq, const ModelParams<Scalar>& params) {
  const ModelConfig& cfg = params.config;
  const int n = static_cast<int>(seq.size());
  Matrix<Scalar> x = positional_codes<Scalar>(seq, cfg.width);
  for (int i = 0; i < n; ++i) {
    const Token& t = seq.tokens[i];
    require(t.global_frame < cfg.max_positions, ErrorCode::Shape, "frame index exceeds max_positions");
    switch (t.kind) {
      case TokenKind::ImgOpen:
      case TokenKind::ImgClose:
      case TokenKind::Diff:
        x.row(i) += params.hint_embed.row(detail::hint_row(t.kind));
        break;
      case TokenKind::Alpha:
        x.row(i) += alpha_features<Scalar>(t.alpha, cfg.alpha_features) * params.alpha_weight + params.alpha_bias;
        break;
      case TokenKind::Class:
        require(t.class_id >= 0 && t.class_id < cfg.num_classes, ErrorCode::Shape, "class id out of range");
        x.row(i) += params.class_embed.row(t.class_id);
        break;
      case TokenKind::Patch: {
        require(static_cast<int>(t.payload.size()) == cfg.patch_dim, ErrorCode::Shape,
                "patch payload has dimension " + std::to_string(t.payload.size()) + ", model expects " +
                    std::to_string(cfg.patch_dim));
        Matrix<Scalar> v(1, cfg.patch_dim);
        for (int j = 0; j < cfg.patch_dim; ++j) v(0, j) = static_cast<Scalar>(t.payload[j]);
        if (t.role == Role::Noisy)
          x.row(i) += v * params.noisy_weight + params.noisy_bias;
        else
          x.row(i) += v * params.clean_weight + params.clean_bias;
        break;
      }
    }
  }
  return x;
}

// ---------------------------------------------------------------------------
// Forward / backward

template <typename Scalar>
struct LayerCache {
  Matrix<Scalar> x_in;
  Matrix<Scalar> ln1_xhat, ln1_out;
  Vector<Scalar> ln1_rstd;
  Matrix<Scalar> qkv;
  std::vector<Matrix<Scalar>> probs;  // one L x L matrix per head
  Matrix<Scalar> attn;
  Matrix<Scalar> x_mid;
  Matrix<Scalar> ln2_xhat, ln2_out;
  Vector<Scalar> ln2_rstd;
  Matrix<Scalar> fc_pre, fc_act;
};

template <typename Scalar>
struct ForwardResult {
  Matrix<Scalar> embeddings;
  std::vector<LayerCache<Scalar>> layers;
  Matrix<Scalar> final_xhat, final_out;  // final_out: normalized last-layer activations
  Vector<Scalar> final_rstd;
  std::vector<int> pred_positions;  // noisy PATCH token indices
  Matrix<Scalar> predictions;       // x0 estimates, one row per noisy PATCH token
};

namespace detail {

template <typename Scalar>
constexpr Scalar kLayerNormEps = Scalar(1e-5);

template <typename Scalar>
void layer_norm(const Matrix<Scalar>& x, const Matrix<Scalar>& gain, const Matrix<Scalar>& bias,
                Matrix<Scalar>& xhat, Vector<Scalar>& rstd, Matrix<Scalar>& out) {
  const Eigen::Index n = x.rows(), d = x.cols();
  xhat.resize(n, d);
  rstd.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Scalar mean = x.row(i).mean();
    const Scalar var = (x.row(i).array() - mean).square().mean();
    rstd(i) = Scalar(1) / std::sqrt(var + kLayerNormEps<Scalar>);
    xhat.row(i) = (x.row(i).array() - mean) * rstd(i);
  }
  out = (xhat.array().rowwise() * gain.row(0).array()).rowwise() + bias.row(0).array();
}

template <typename Scalar>
Matrix<Scalar> layer_norm_backward(const Matrix<Scalar>& dout, const Matrix<Scalar>& xhat,
                                   const Vector<Scalar>& rstd, const Matrix<Scalar>& gain,
                                   Matrix<Scalar>& dgain, Matrix<Scalar>& dbias) {
  dgain.row(0) += (dout.array() * xhat.array()).colwise().sum().matrix();
  dbias.row(0) += dout.colwise().sum();
  Matrix<Scalar> dxhat = (dout.array().rowwise() * gain.row(0).array()).matrix();
  Matrix<Scalar> dx(dout.rows(), dout.cols());
  for (Eigen::Index i = 0; i < dout.rows(); ++i) {
    const Scalar m1 = dxhat.row(i).mean();
    const Scalar m2 = (dxhat.row(i).array() * xhat.row(i).array()).mean();
    dx.row(i) = rstd(i) * (dxhat.row(i).array() - m1 - xhat.row(i).array() * m2);
  }
  return dx;
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)

// tanh-approximated GELU and its derivative, elementwise.
template <typename Scalar>
Matrix<Scalar> gelu(const Matrix<Scalar>& x) {
  const auto a = x.array();
  const auto th = (Scalar(kGeluC) * (a + Scalar(0.044715) * a.cube())).tanh();
  return (Scalar(0.5) * a * (Scalar(1) + th)).matrix();
}

template <typename Scalar>
Matrix<Scalar> gelu_grad(const Matrix<Scalar>& x) {
  const auto a = x.array();
  const Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> th =
      (Scalar(kGeluC) * (a + Scalar(0.044715) * a.cube())).tanh();
  const auto du = Scalar(kGeluC) * (Scalar(1) + Scalar(3 * 0.044715) * a.square());
  return (Scalar(0.5) * (Scalar(1) + th) + Scalar(0.5) * a * (Scalar(1) - th.square()) * du).matrix();
}

template <typename Scalar>
void check_finite(const Matrix<Scalar>& m, int layer, const char* what) {
  if (!m.allFinite()) {
    throw NumericalFailure(layer, std::string("non-finite ") + what + " at layer " + std::to_string(layer));
  }
}

}  // namespace detail

/// Pre-norm transformer over the whole sequence. Disallowed logits are set
/// to the most negative finite value before the softmax, so they receive
/// exactly zero weight. Predictions are emitted only at noisy PATCH tokens.
template <typename Scalar>
ForwardResult<Scalar> forward(const TokenSequence& seq, const AttentionMask& mask,
                              const ModelParams<Scalar>& params) {
  const ModelConfig& cfg = params.config;
  const int n = static_cast<int>(seq.size());
  require(mask.size() == n, ErrorCode::Shape,
          "mask is " + std::to_string(mask.size()) + "x" + std::to_string(mask.size()) + " but sequence has " +
              std::to_string(n) + " tokens");
  const int d = cfg.width, heads = cfg.heads, dh = d / heads;
  const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(dh));
  const Scalar masked = std::numeric_limits<Scalar>::lowest();

  // Additive logit bias: 0 where allowed, most negative finite value elsewhere.
  // Vectorized exp clamps its input instead of underflowing to 0, so the
  // probabilities are also multiplied by the 0/1 mask.
  Matrix<Scalar> logit_bias(n, n), keep(n, n);
  for (int q = 0; q < n; ++q) {
    auto allow = mask.row(q);
    for (int t = 0; t < n; ++t) {
      logit_bias(q, t) = allow[t] ? Scalar(0) : masked;
      keep(q, t) = allow[t] ? Scalar(1) : Scalar(0);
    }
  }

  ForwardResult<Scalar> r;
  r.embeddings = embed_sequence(seq, params);
  detail::check_finite(r.embeddings, -1, "embedding");
  Matrix<Scalar> x = r.embeddings;
  r.layers.resize(cfg.depth);
  for (int li = 0; li < cfg.depth; ++li) {
    const auto& lp = params.layers[li];
    auto& c = r.layers[li];
    c.x_in = x;
    detail::layer_norm(x, lp.ln1_gain, lp.ln1_bias, c.ln1_xhat, c.ln1_rstd, c.ln1_out);
    c.qkv.noalias() = c.ln1_out * lp.qkv_weight;
    c.qkv.rowwise() += lp.qkv_bias.row(0);
    c.attn.resize(n, d);
    c.probs.resize(heads);
    for (int h = 0; h < heads; ++h) {
      Matrix<Scalar>& p = c.probs[h];
      p.noalias() = c.qkv.middleCols(h * dh, dh) * c.qkv.middleCols(d + h * dh, dh).transpose();
      for (int q = 0; q < n; ++q) {
        auto row = p.row(q).array();
        row = row * scale + logit_bias.row(q).array();
        row = (row - row.maxCoeff()).exp() * keep.row(q).array();
        row /= row.sum();
      }
      c.attn.middleCols(h * dh, dh).noalias() = p * c.qkv.middleCols(2 * d + h * dh, dh);
    }
    c.x_mid = x;
    c.x_mid.noalias() += c.attn * lp.attn_out_weight;
    c.x_mid.rowwise() += lp.attn_out_bias.row(0);
    detail::layer_norm(c.x_mid, lp.ln2_gain, lp.ln2_bias, c.ln2_xhat, c.ln2_rstd, c.ln2_out);
    c.fc_pre.noalias() = c.ln2_out * lp.fc_weight;
    c.fc_pre.rowwise() += lp.fc_bias.row(0);
    c.fc_act = detail::gelu(c.fc_pre);
    x = c.x_mid;
    x.noalias() += c.fc_act * lp.proj_weight;
    x.rowwise() += lp.proj_bias.row(0);
    detail::check_finite(x, li, "activation");
  }
  detail::layer_norm(x, params.final_gain, params.final_bias, r.final_xhat, r.final_rstd, r.final_out);

  r.pred_positions = seq.noisy_patch_positions();
  const int m = static_cast<int>(r.pred_positions.size());
  Matrix<Scalar> selected(m, d);
  for (int i = 0; i < m; ++i) selected.row(i) = r.final_out.row(r.pred_positions[i]);
  r.predictions.noalias() = selected * params.head_weight;
  r.predictions.rowwise() += params.head_bias.row(0);
  detail::check_finite(r.predictions, cfg.depth, "prediction");
  return r;
}

/// Accumulates parameter gradients into `grads` and returns the gradient
/// with respect to the input embeddings. `d_predictions` has one row per
/// noisy PATCH token; `d_features`, if given, is an extra L x d upstream
/// gradient on the final normalized activations.
template <typename Scalar>
Matrix<Scalar> backward(const TokenSequence& seq, const ModelParams<Scalar>& params,
                        const ForwardResult<Scalar>& fwd, const Matrix<Scalar>& d_predictions,
                        ModelParams<Scalar>& grads, const Matrix<Scalar>* d_features = nullptr) {
  const ModelConfig& cfg = params.config;
  const int n = static_cast<int>(seq.size());
  const int d = cfg.width, heads = cfg.heads, dh = d / heads;
  const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(dh));
  const int m = static_cast<int>(fwd.pred_positions.size());
  require(d_predictions.rows() == m && d_predictions.cols() == cfg.patch_dim, ErrorCode::Shape,
          "prediction gradient shape mismatch");

  // Output head.
  Matrix<Scalar> selected(m, d);
  for (int i = 0; i < m; ++i) selected.row(i) = fwd.final_out.row(fwd.pred_positions[i]);
  grads.head_weight.noalias() += selected.transpose() * d_predictions;
  grads.head_bias.row(0) += d_predictions.colwise().sum();
  Matrix<Scalar> d_out = d_features ? *d_features : Matrix<Scalar>::Zero(n, d);
  Matrix<Scalar> d_sel = d_predictions * params.head_weight.transpose();
  for (int i = 0; i < m; ++i) d_out.row(fwd.pred_positions[i]) += d_sel.row(i);

  Matrix<Scalar> dx = detail::layer_norm_backward(d_out, fwd.final_xhat, fwd.final_rstd, params.final_gain,
                                                  grads.final_gain, grads.final_bias);

  for (int li = cfg.depth - 1; li >= 0; --li) {
    const auto& lp = params.layers[li];
    auto& lg = grads.layers[li];
    const auto& c = fwd.layers[li];

    // MLP branch.
    lg.proj_weight.noalias() += c.fc_act.transpose() * dx;
    lg.proj_bias.row(0) += dx.colwise().sum();
    Matrix<Scalar> d_act = dx * lp.proj_weight.transpose();
    Matrix<Scalar> d_pre = (d_act.array() * detail::gelu_grad(c.fc_pre).array()).matrix();
    lg.fc_weight.noalias() += c.ln2_out.transpose() * d_pre;
    lg.fc_bias.row(0) += d_pre.colwise().sum();
    Matrix<Scalar> d_ln2 = d_pre * lp.fc_weight.transpose();
    Matrix<Scalar> d_mid = dx + detail::layer_norm_backward(d_ln2, c.ln2_xhat, c.ln2_rstd, lp.ln2_gain,
                                                            lg.ln2_gain, lg.ln2_bias);

    // Attention branch.
    lg.attn_out_weight.noalias() += c.attn.transpose() * d_mid;
    lg.attn_out_bias.row(0) += d_mid.colwise().sum();
    Matrix<Scalar> d_attn = d_mid * lp.attn_out_weight.transpose();
    Matrix<Scalar> d_qkv(n, 3 * d);
    for (int h = 0; h < heads; ++h) {
      const Matrix<Scalar>& p = c.probs[h];
      auto q = c.qkv.middleCols(h * dh, dh);
      auto k = c.qkv.middleCols(d + h * dh, dh);
      auto v = c.qkv.middleCols(2 * d + h * dh, dh);
      auto d_o = d_attn.middleCols(h * dh, dh);
      d_qkv.middleCols(2 * d + h * dh, dh).noalias() = p.transpose() * d_o;
      Matrix<Scalar> d_p = d_o * v.transpose();
      for (int r = 0; r < n; ++r) {
        const Scalar dot = p.row(r).dot(d_p.row(r));
        d_p.row(r) = (p.row(r).array() * (d_p.row(r).array() - dot)).matrix();
      }
      d_p *= scale;
      d_qkv.middleCols(h * dh, dh).noalias() = d_p * k;
      d_qkv.middleCols(d + h * dh, dh).noalias() = d_p.transpose() * q;
    }
    lg.qkv_weight.noalias() += c.ln1_out.transpose() * d_qkv;
    lg.qkv_bias.row(0) += d_qkv.colwise().sum();
    Matrix<Scalar> d_ln1 = d_qkv * lp.qkv_weight.transpose();
    dx = d_mid + detail::layer_norm_backward(d_ln1, c.ln1_xhat, c.ln1_rstd, lp.ln1_gain, lg.ln1_gain, lg.ln1_bias);
  }

  // Embedding tables and input projections.
  for (int i = 0; i < n; ++i) {
    const Token& t = seq.tokens[i];
    switch (t.kind) {
      case TokenKind::ImgOpen:
      case TokenKind::ImgClose:
      case TokenKind::Diff:
        grads.hint_embed.row(detail::hint_row(t.kind)) += dx.row(i);
        break;
      case TokenKind::Alpha:
        grads.alpha_weight.noalias() += alpha_features<Scalar>(t.alpha, cfg.alpha_features).transpose() * dx.row(i);
        grads.alpha_bias.row(0) += dx.row(i);
        break;
      case TokenKind::Class:
        grads.class_embed.row(t.class_id) += dx.row(i);
        break;
      case TokenKind::Patch: {
        Matrix<Scalar> v(cfg.patch_dim, 1);
        for (int j = 0; j < cfg.patch_dim; ++j) v(j, 0) = static_cast<Scalar>(t.payload[j]);
        if (t.role == Role::Noisy) {
          grads.noisy_weight.noalias() += v * dx.row(i);
          grads.noisy_bias.row(0) += dx.row(i);
        } else {
          grads.clean_weight.noalias() += v * dx.row(i);
          grads.clean_bias.row(0) += dx.row(i);
        }
        break;
      }
    }
  }
  return dx;
}

/// Convenience: mask + forward, returning only the x0 predictions.
template <typename Scalar>
Matrix<Scalar> predict(const TokenSequence& seq, const ModelParams<Scalar>& params) {
  return forward(seq, build_training_mask(seq), params).predictions;
}

/// Mean of the final normalized activations over clip `clip`'s clean PATCH tokens.
template <typename Scalar>
Vector<Scalar> pool_clip_features(const TokenSequence& seq, const ModelParams<Scalar>& params, int clip) {
  const auto fwd = forward(seq, build_training_mask(seq), params);
  Vector<Scalar> acc = Vector<Scalar>::Zero(params.config.width);
  int count = 0;
  for (int i = 0; i < static_cast<int>(seq.size()); ++i) {
    const Token& t = seq.tokens[i];
    if (t.role == Role::Clean && t.kind == TokenKind::Patch && t.clip == clip) {
      acc += fwd.final_out.row(i).transpose();
      ++count;
    }
  }
  require(count > 0, ErrorCode::Shape, "clip " + std::to_string(clip) + " has no clean patch tokens");
  return acc / static_cast<Scalar>(count);
}

}  // namespace nextclip
