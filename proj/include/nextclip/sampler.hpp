#pragma once

#include <algorithm>
#include <concepts>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "nextclip/clipseq.hpp"
#include "nextclip/condition.hpp"
#include "nextclip/error.hpp"
#include "nextclip/model.hpp"
#include "nextclip/rng.hpp"
#include "nextclip/videodata.hpp"

namespace nextclip {

struct SamplerConfig {
  int steps = 20;
  double cfg_scale = 3.0;
  int frames_per_clip = 4;
  int patch = 4;
  std::uint64_t seed = 0;

  void validate() const {
    require(steps >= 1, ErrorCode::InvalidConfig, "sampler needs at least one step");
    require(cfg_scale >= 0.0, ErrorCode::InvalidConfig, "guidance scale must be non-negative");
    require(frames_per_clip >= 1, ErrorCode::InvalidConfig, "frames per clip must be >= 1");
    require(patch >= 1, ErrorCode::InvalidConfig, "patch size must be >= 1");
  }
};

/// x0 predictor over a token sequence: returns the clean estimate for every
/// noisy PATCH token, flattened in token order ([frame][patch][dim]).
template <typename P>
concept X0Predictor = requires(P& p, const TokenSequence& seq) {
  { p(seq) } -> std::convertible_to<std::vector<float>>;
};

/// Euler step of the straight-line flow psi = alpha*x0 + (1-alpha)*eps,
/// with velocity (x0_hat - psi) / (1 - alpha). Snaps to x0_hat when
/// 1 - alpha_j < 1e-6.
inline void euler_step(std::span<float> psi, std::span<const float> x0_hat, double alpha_j, double alpha_next) {
  require(alpha_j >= 0.0 && alpha_j < alpha_next && alpha_next <= 1.0, ErrorCode::Domain,
          "euler step needs 0 <= alpha_j < alpha_next <= 1");
  require(psi.size() == x0_hat.size(), ErrorCode::Shape, "state and estimate differ in size");
  if (1.0 - alpha_j < 1e-6) {
    std::copy(x0_hat.begin(), x0_hat.end(), psi.begin());
    return;
  }
  const double ratio = (alpha_next - alpha_j) / (1.0 - alpha_j);
  for (std::size_t i = 0; i < psi.size(); ++i) {
    psi[i] = static_cast<float>(psi[i] + ratio * (static_cast<double>(x0_hat[i]) - psi[i]));
  }
}

/// uncond + c * (cond - uncond).
inline std::vector<float> cfg_combine(std::span<const float> cond, std::span<const float> uncond, double c) {
  require(cond.size() == uncond.size(), ErrorCode::Shape, "guidance branches differ in size");
  std::vector<float> out(cond.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<float>(uncond[i] + c * (static_cast<double>(cond[i]) - uncond[i]));
  }
  return out;
}

/// Adapts trained parameters to the X0Predictor interface.
struct ModelPredictor {
  const ModelParams<float>* params = nullptr;

  std::vector<float> operator()(const TokenSequence& seq) const {
    const auto fwd = forward(seq, build_inference_mask(seq), *params);
    return std::vector<float>(fwd.predictions.data(), fwd.predictions.data() + fwd.predictions.size());
  }
};

struct ClipRequest {
  int num_frames = 4;
  std::optional<ClassLabel> label;  // prefixed to both guidance branches
  int num_classes = 0;
};

namespace detail {

inline std::vector<float> flatten(const LatentClip& clip) {
  std::vector<float> out;
  for (const auto& f : clip) out.insert(out.end(), f.patches.begin(), f.patches.end());
  return out;
}

inline void unflatten(std::span<const float> flat, LatentClip& clip) {
  std::size_t off = 0;
  for (auto& f : clip) {
    require(off + f.patches.size() <= flat.size(), ErrorCode::Shape, "predictor returned too few values");
    std::copy_n(flat.begin() + off, f.patches.size(), f.patches.begin());
    off += f.patches.size();
  }
  require(off == flat.size(), ErrorCode::Shape, "predictor returned too many values");
}

}  // namespace detail

/// Denoises one clip conditioned on `history` (clean pixel clips).
/// Starts from N(0, I) at alpha = 0 and integrates the uniform schedule
/// alpha_j = j / steps. Each step runs the predictor on [history, NS] and,
/// when history is non-empty and the scale differs from 1, on NS alone as
/// the unconditional branch. Returns pixels clamped to [0,1].
template <X0Predictor Predictor>
VideoTensor sample_clip(const std::vector<VideoTensor>& history, const ClipRequest& request, const SamplerConfig& cfg,
                        const PatchGrid& grid, Predictor& predictor, Rng& noise) {
  cfg.validate();
  require(request.num_frames >= 1, ErrorCode::Shape, "clip must have at least one frame");
  const PatchEncoder enc{grid.patch};
  std::vector<LatentClip> hist;
  for (std::size_t k = 0; k < history.size(); ++k) hist.push_back(enc.encode(history[k], static_cast<int>(k)));

  LatentClip state(request.num_frames);
  for (int i = 0; i < request.num_frames; ++i) {
    state[i].grid = grid;
    state[i].frame = i;
    state[i].clip = static_cast<int>(hist.size());
    state[i].patches.resize(static_cast<std::size_t>(grid.num_patches()) * grid.patch_dim());
    for (float& x : state[i].patches) x = static_cast<float>(noise.normal());
  }

  auto with_label = [&](TokenSequence seq) {
    return request.label ? prefix_class_tokens(seq, *request.label, request.num_classes) : seq;
  };
  const bool guided = !hist.empty() && cfg.cfg_scale != 1.0;
  std::vector<float> psi = detail::flatten(state);
  for (int j = 0; j < cfg.steps; ++j) {
    const double a = static_cast<double>(j) / cfg.steps;
    const double a_next = static_cast<double>(j + 1) / cfg.steps;
    detail::unflatten(psi, state);
    std::vector<float> x0;
    try {
      std::vector<float> cond = predictor(with_label(build_inference_sequence(hist, state, static_cast<float>(a))));
      if (guided) {
        std::vector<float> uncond = predictor(with_label(build_inference_sequence({}, state, static_cast<float>(a))));
        x0 = cfg_combine(cond, uncond, cfg.cfg_scale);
      } else {
        x0 = std::move(cond);
      }
    } catch (const NumericalFailure& e) {
      throw NumericalFailure(e.layer(), std::string(e.what()) + " (sampler step " + std::to_string(j) + ")");
    }
    require(x0.size() == psi.size(), ErrorCode::Shape, "predictor output does not match the clip");
    euler_step(psi, x0, a, a_next);
  }
  detail::unflatten(psi, state);
  return enc.decode(state, history.empty() ? 8 : history.front().fps_hint);
}

/// Autoregressive rollout from `history` (may be empty): each generated
/// clip joins the history of the next. Returns the generated frames only.
/// Noise is drawn from the "sampler" substream of cfg.seed.
template <X0Predictor Predictor>
VideoTensor rollout(std::vector<VideoTensor> history, std::span<const int> clip_lengths, const SamplerConfig& cfg,
                    const PatchGrid& grid, int fps_hint, Predictor& predictor,
                    std::optional<ClassLabel> label = std::nullopt, int num_classes = 0) {
  cfg.validate();
  Rng noise = Rng::derive(cfg.seed, "sampler");
  VideoTensor out = VideoTensor::zeros(0, grid.channels, grid.height(), grid.width(), fps_hint);
  for (int len : clip_lengths) {
    ClipRequest req{len, label, num_classes};
    VideoTensor clip = sample_clip(history, req, cfg, grid, predictor, noise);
    clip.fps_hint = fps_hint;
    out.append(clip);
    history.push_back(std::move(clip));
  }
  return out;
}

/// Rollout conditioned on one given clip; the initial clip is excluded
/// from the result.
template <X0Predictor Predictor>
VideoTensor autoregress(const VideoTensor& initial_clip, std::span<const int> clip_lengths, const SamplerConfig& cfg,
                        Predictor& predictor, std::optional<ClassLabel> label = std::nullopt, int num_classes = 0) {
  cfg.validate();
  require(initial_clip.frames >= 1, ErrorCode::Shape, "initial clip must have at least one frame");
  const PatchGrid grid = PatchGrid::for_frame(initial_clip.channels, initial_clip.height, initial_clip.width, cfg.patch);
  return rollout({initial_clip}, clip_lengths, cfg, grid, initial_clip.fps_hint, predictor, std::move(label),
                 num_classes);
}

template <X0Predictor Predictor>
VideoTensor autoregress(const VideoTensor& initial_clip, int num_future_clips, const SamplerConfig& cfg,
                        Predictor& predictor) {
  require(num_future_clips >= 0, ErrorCode::Domain, "clip count must be non-negative");
  const std::vector<int> lengths(num_future_clips, cfg.frames_per_clip);
  return autoregress(initial_clip, std::span<const int>(lengths), cfg, predictor);
}

}  // namespace nextclip
