#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "nextclip/checkpoint.hpp"
#include "nextclip/clipseq.hpp"
#include "nextclip/condition.hpp"
#include "nextclip/error.hpp"
#include "nextclip/maskgen.hpp"
#include "nextclip/model.hpp"
#include "nextclip/rng.hpp"
#include "nextclip/videodata.hpp"

namespace nextclip {

// ---------------------------------------------------------------------------
// Loss

template <typename Scalar>
Matrix<Scalar> target_matrix(const TokenSequence& seq) {
  const auto pos = seq.noisy_patch_positions();
  const int dim = seq.grid.patch_dim();
  Matrix<Scalar> out(static_cast<Eigen::Index>(pos.size()), dim);
  for (std::size_t i = 0; i < pos.size(); ++i) {
    const Token& t = seq.tokens[pos[i]];
    require(static_cast<int>(t.target.size()) == dim, ErrorCode::Shape, "noisy patch token lacks a target");
    for (int j = 0; j < dim; ++j) out(static_cast<Eigen::Index>(i), j) = static_cast<Scalar>(t.target[j]);
  }
  return out;
}

/// Mean squared error over every predicted element.
template <typename Scalar>
Scalar compute_loss(const Matrix<Scalar>& predictions, const Matrix<Scalar>& targets) {
  require(predictions.rows() == targets.rows() && predictions.cols() == targets.cols(), ErrorCode::Shape,
          "predictions and targets differ in shape");
  if (predictions.size() == 0) return Scalar(0);
  return (predictions - targets).squaredNorm() / static_cast<Scalar>(predictions.size());
}

template <typename Scalar>
struct BatchLoss {
  Scalar loss = 0;
  ModelParams<Scalar> grads;
};

namespace detail {

template <typename F>
void parallel_for(int n, int threads, F&& fn) {
  threads = std::max(1, std::min(threads, n));
  if (threads == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (int w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (int i = w; i < n; i += threads) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace detail

/// Loss over a batch (mean over all predicted elements of all sequences)
/// and its gradient. Per-sequence gradients are summed in batch order, so
/// the result does not depend on `threads`.
template <typename Scalar>
BatchLoss<Scalar> batch_loss_and_grad(const std::vector<TokenSequence>& batch, const ModelParams<Scalar>& params,
                                      int threads = 1) {
  const int b = static_cast<int>(batch.size());
  std::size_t elements = 0;
  for (const auto& s : batch) elements += s.noisy_patch_positions().size() * s.grid.patch_dim();
  require(elements > 0, ErrorCode::Shape, "batch has no noisy patch tokens");
  const Scalar inv = Scalar(1) / static_cast<Scalar>(elements);

  std::vector<ModelParams<Scalar>> grads(b);
  std::vector<Scalar> sse(b, Scalar(0));
  detail::parallel_for(b, threads, [&](int i) {
    const auto& seq = batch[i];
    const auto fwd = forward(seq, build_training_mask(seq), params);
    const Matrix<Scalar> diff = fwd.predictions - target_matrix<Scalar>(seq);
    sse[i] = diff.squaredNorm();
    grads[i] = params.zeros_like();
    backward(seq, params, fwd, Matrix<Scalar>(Scalar(2) * inv * diff), grads[i]);
  });
  BatchLoss<Scalar> out;
  out.grads = std::move(grads[0]);
  Scalar total = sse[0];
  for (int i = 1; i < b; ++i) {
    total += sse[i];
    std::vector<Matrix<Scalar>*> dst;
    out.grads.for_each([&](const std::string&, Matrix<Scalar>& m, bool) { dst.push_back(&m); });
    std::size_t k = 0;
    grads[i].for_each([&](const std::string&, const Matrix<Scalar>& m, bool) { *dst[k++] += m; });
  }
  out.loss = total * inv;
  return out;
}

template <typename Scalar>
Scalar batch_loss(const std::vector<TokenSequence>& batch, const ModelParams<Scalar>& params) {
  Scalar sse = 0;
  std::size_t elements = 0;
  for (const auto& seq : batch) {
    const auto pred = predict(seq, params);
    sse += (pred - target_matrix<Scalar>(seq)).squaredNorm();
    elements += static_cast<std::size_t>(pred.size());
  }
  return sse / static_cast<Scalar>(elements);
}

// ---------------------------------------------------------------------------
// Gradient check

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_group;
  std::map<std::string, double> per_group;
};

/// Compares analytic gradients with fp64 central differences over every
/// element of every parameter group. The per-group error is
/// |g_analytic - g_numeric|_2 / max(|g_analytic|_2, |g_numeric|_2); groups
/// whose gradients both vanish (norm < 1e-12) count as exact.
/// `corrupt` lets tests tamper with the analytic gradients.
inline GradCheckResult grad_check(const ModelParams<double>& params, const std::vector<TokenSequence>& batch,
                                  double h = 1e-5,
                                  const std::function<void(ModelParams<double>&)>& corrupt = {}) {
  auto analytic = batch_loss_and_grad(batch, params).grads;
  if (corrupt) corrupt(analytic);

  ModelParams<double> probe = params;
  std::vector<Matrix<double>*> probe_tensors;
  probe.for_each([&](const std::string&, Matrix<double>& m, bool) { probe_tensors.push_back(&m); });

  GradCheckResult result;
  std::size_t idx = 0;
  analytic.for_each([&](const std::string& name, const Matrix<double>& g, bool) {
    Matrix<double>& theta = *probe_tensors[idx++];
    Matrix<double> numeric(g.rows(), g.cols());
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
      const double saved = theta.data()[i];
      theta.data()[i] = saved + h;
      const double up = batch_loss(batch, probe);
      theta.data()[i] = saved - h;
      const double down = batch_loss(batch, probe);
      theta.data()[i] = saved;
      numeric.data()[i] = (up - down) / (2.0 * h);
    }
    const double scale = std::max(g.norm(), numeric.norm());
    const double err = scale < 1e-12 ? 0.0 : (g - numeric).norm() / scale;
    result.per_group[name] = err;
    if (err >= result.max_relative_error) {
      result.max_relative_error = err;
      result.worst_group = name;
    }
  });
  return result;
}

// ---------------------------------------------------------------------------
// Optimizer and training state

struct OptimizerConfig {
  double beta1 = 0.9;
  double beta2 = 0.95;
  double weight_decay = 0.1;
  double eps = 1e-8;
  int warmup_steps = 50;
};

/// Frame-interval rule, clip-count rule, step budget and batch shape of one
/// stage of the progressive schedule.
struct StageConfig {
  int num_frames = 8;
  int interval_min = 1;
  int interval_max = 1;
  int clips = 0;  // fixed K, or 0 for K ~ Uniform{2..N}
  int steps = 100;
  double learning_rate = 1e-3;
  int batch_size = 4;

  void validate() const {
    require(num_frames >= 1 && steps > 0 && batch_size >= 1 && learning_rate >= 0.0, ErrorCode::InvalidConfig,
            "stage needs positive frames, steps and batch size");
    require(interval_min >= 1 && interval_max >= interval_min, ErrorCode::InvalidConfig, "bad frame interval range");
    require(clips >= 0 && clips <= num_frames, ErrorCode::InvalidConfig, "clip count must be in [0, frames]");
  }

  bool operator==(const StageConfig&) const = default;
};

/// Desk-scale counterpart of the progressive schedule: next-frame
/// prediction on 8 frames, then random clips on 16 frames, then random
/// clips with a random frame interval.
inline std::vector<StageConfig> desk_schedule() {
  return {
      StageConfig{8, 1, 1, 8, 1000, 2e-3, 4},
      StageConfig{16, 1, 1, 0, 4000, 2e-3, 4},
      StageConfig{16, 1, 3, 0, 3000, 1e-3, 4},
  };
}

struct TrainOptions {
  int patch = 4;
  float beta = 0.9f;  // clean-clip retention floor; 1 disables corruption
  OptimizerConfig optimizer;
  int threads = 1;
};

struct TrainState {
  ModelParams<float> params;
  ModelParams<float> adam_m;
  ModelParams<float> adam_v;
  std::int64_t step = 0;
  int stage = 0;
  std::int64_t stage_step = 0;
  Rng partition_rng;
  Rng alpha_rng;
  Rng noise_rng;
  Rng data_rng;

  static TrainState fresh(const ModelParams<float>& params, std::uint64_t seed) {
    TrainState s;
    s.params = params;
    s.adam_m = params.zeros_like();
    s.adam_v = params.zeros_like();
    s.partition_rng = Rng::derive(seed, "partition");
    s.alpha_rng = Rng::derive(seed, "alpha");
    s.noise_rng = Rng::derive(seed, "noise");
    s.data_rng = Rng::derive(seed, "data");
    return s;
  }
};

/// alpha_k ~ Uniform[0,1) per clip.
inline std::vector<float> sample_alphas(int clips, Rng& rng) {
  std::vector<float> a(clips);
  for (float& x : a) x = static_cast<float>(rng.uniform());
  return a;
}

struct TrainingExample {
  TokenSequence sequence;
  ClipPartition partition;
  std::vector<float> alphas;
  int video_index = 0;
};

/// Draws one training sequence: video and frame interval from the data
/// stream, clip count and partition from the partition stream, alphas
/// from the alpha stream, noise from the noise stream.
inline TrainingExample draw_example(TrainState& state, const StageConfig& stage, const std::vector<VideoTensor>& dataset,
                                    const std::vector<ClassLabel>* labels, const TrainOptions& opt) {
  require(!dataset.empty(), ErrorCode::InvalidConfig, "training dataset is empty");
  TrainingExample ex;
  ex.video_index = static_cast<int>(state.data_rng.uniform_int(0, static_cast<std::int64_t>(dataset.size()) - 1));
  const VideoTensor& video = dataset[ex.video_index];
  const int n = stage.num_frames;
  const int stride = static_cast<int>(state.data_rng.uniform_int(stage.interval_min, stage.interval_max));
  const int max_start = video.frames - 1 - (n - 1) * stride;
  require(max_start >= 0, ErrorCode::InvalidConfig,
          "video " + std::to_string(ex.video_index) + " has " + std::to_string(video.frames) + " frames, stage needs " +
              std::to_string((n - 1) * stride + 1));
  const int start = static_cast<int>(state.data_rng.uniform_int(0, max_start));
  const VideoTensor window = stride_frames(video, start, stride, n);

  const int k = stage.clips > 0 ? stage.clips : (n >= 2 ? static_cast<int>(state.partition_rng.uniform_int(2, n)) : 1);
  ex.partition = partition_frames(n, k, state.partition_rng);
  ex.alphas = sample_alphas(k, state.alpha_rng);
  ex.sequence = build_training_sequence(window, ex.partition, ex.alphas, opt.patch, opt.beta, state.noise_rng);
  if (state.params.config.num_classes > 0) {
    require(labels && labels->size() == dataset.size(), ErrorCode::InvalidConfig,
            "class-conditional training needs one label per video");
    ex.sequence = prefix_class_tokens(ex.sequence, (*labels)[ex.video_index], state.params.config.num_classes);
  }
  return ex;
}

inline double learning_rate_at(double base, std::int64_t step, int warmup) {
  if (warmup <= 0) return base;
  return base * std::min(1.0, static_cast<double>(step + 1) / warmup);
}

/// AdamW update with decoupled weight decay on weight matrices.
inline void adamw_update(TrainState& state, const ModelParams<float>& grads, double lr, const OptimizerConfig& opt) {
  const double t = static_cast<double>(state.step + 1);
  const double c1 = 1.0 - std::pow(opt.beta1, t);
  const double c2 = 1.0 - std::pow(opt.beta2, t);
  std::vector<const Matrix<float>*> g;
  std::vector<Matrix<float>*> m, v;
  grads.for_each([&](const std::string&, const Matrix<float>& x, bool) { g.push_back(&x); });
  state.adam_m.for_each([&](const std::string&, Matrix<float>& x, bool) { m.push_back(&x); });
  state.adam_v.for_each([&](const std::string&, Matrix<float>& x, bool) { v.push_back(&x); });
  std::size_t i = 0;
  const float b1 = static_cast<float>(opt.beta1), b2 = static_cast<float>(opt.beta2);
  state.params.for_each([&](const std::string&, Matrix<float>& p, bool decays) {
    auto& mi = *m[i];
    auto& vi = *v[i];
    const auto& gi = *g[i];
    ++i;
    mi = b1 * mi + (1.0f - b1) * gi;
    vi = b2 * vi + (1.0f - b2) * gi.cwiseAbs2();
    const float step = static_cast<float>(lr / c1);
    const float denom_scale = static_cast<float>(1.0 / std::sqrt(c2));
    const float eps = static_cast<float>(opt.eps);
    if (decays) p *= 1.0f - static_cast<float>(lr * opt.weight_decay);
    p.array() -= step * mi.array() / (vi.array().sqrt() * denom_scale + eps);
  });
}

struct StepRecord {
  std::int64_t step = 0;
  int stage = 0;
  double loss = 0.0;
  double wall_ms = 0.0;
};

/// One optimizer update on `batch`; returns the pre-update loss.
inline double train_step(TrainState& state, const std::vector<TrainingExample>& batch, double lr,
                         const TrainOptions& opt) {
  std::vector<TokenSequence> seqs;
  seqs.reserve(batch.size());
  for (const auto& ex : batch) seqs.push_back(ex.sequence);
  BatchLoss<float> bl = batch_loss_and_grad(seqs, state.params, opt.threads);
  if (!std::isfinite(bl.loss)) {
    std::ostringstream os;
    os << "non-finite loss at step " << state.step << ";";
    for (const auto& ex : batch) {
      os << " clips=[";
      for (int s : ex.partition.sizes) os << s << ' ';
      os << "] alphas=[";
      for (float a : ex.alphas) os << a << ' ';
      os << ']';
    }
    fail(ErrorCode::NumericalFailure, os.str());
  }
  adamw_update(state, bl.grads, lr, opt.optimizer);
  ++state.step;
  return bl.loss;
}

using StepCallback = std::function<void(const StepRecord&)>;

/// Runs the remaining steps of `stage` (resuming at state.stage_step).
/// Stops early once the global step reaches `stop_at_step`, if given.
inline void run_stage(TrainState& state, const StageConfig& stage, const std::vector<VideoTensor>& dataset,
                      const std::vector<ClassLabel>* labels, const TrainOptions& opt, const StepCallback& on_step = {},
                      std::optional<std::int64_t> stop_at_step = std::nullopt) {
  stage.validate();
  while (state.stage_step < stage.steps) {
    if (stop_at_step && state.step >= *stop_at_step) return;
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<TrainingExample> batch;
    for (int b = 0; b < stage.batch_size; ++b) batch.push_back(draw_example(state, stage, dataset, labels, opt));
    const double lr = learning_rate_at(stage.learning_rate, state.step, opt.optimizer.warmup_steps);
    const double loss = train_step(state, batch, lr, opt);
    ++state.stage_step;
    if (on_step) {
      const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      on_step(StepRecord{state.step, state.stage, loss, ms});
    }
  }
}

// ---------------------------------------------------------------------------
// Train-state checkpoints (same container as model checkpoints)

inline void save_train_state(const std::string& path, const TrainState& state, nlohmann::json meta = {}) {
  CheckpointFile file;
  file.header = nlohmann::json::object();
  file.header["config"] = state.params.config;
  file.header["stage"] = state.stage;
  if (!meta.is_null()) file.header["meta"] = std::move(meta);
  file.header["train_state"] = {{"step", state.step},
                                {"stage", state.stage},
                                {"stage_step", state.stage_step},
                                {"rng",
                                 {{"partition", state.partition_rng.state()},
                                  {"alpha", state.alpha_rng.state()},
                                  {"noise", state.noise_rng.state()},
                                  {"data", state.data_rng.state()}}}};
  append_params(file, state.params);
  append_params(file, state.adam_m, "adam_m.");
  append_params(file, state.adam_v, "adam_v.");
  binio::write_file(path, encode_checkpoint(file));
}

inline TrainState load_train_state(const std::string& path) {
  const CheckpointFile file = decode_checkpoint(binio::read_file(path));
  require(file.header.contains("train_state"), ErrorCode::ConfigMismatch, path + " holds no training state");
  TrainState s;
  try {
    const ModelConfig cfg = file.header.at("config").get<ModelConfig>();
    s.params = extract_params(file, cfg);
    s.adam_m = extract_params(file, cfg, "adam_m.");
    s.adam_v = extract_params(file, cfg, "adam_v.");
    const auto& ts = file.header.at("train_state");
    s.step = ts.at("step").get<std::int64_t>();
    s.stage = ts.at("stage").get<int>();
    s.stage_step = ts.at("stage_step").get<std::int64_t>();
    s.partition_rng.set_state(ts.at("rng").at("partition").get<std::string>());
    s.alpha_rng.set_state(ts.at("rng").at("alpha").get<std::string>());
    s.noise_rng.set_state(ts.at("rng").at("noise").get<std::string>());
    s.data_rng.set_state(ts.at("rng").at("data").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ConfigMismatch, std::string("training state header unreadable: ") + e.what());
  }
  return s;
}

}  // namespace nextclip
