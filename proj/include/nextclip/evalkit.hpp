#pragma once

#include <cmath>
#include <numeric>
#include <ostream>
#include <vector>

#include "nextclip/error.hpp"
#include "nextclip/sampler.hpp"
#include "nextclip/videodata.hpp"

namespace nextclip {

namespace detail {

inline void require_same_shape(const VideoTensor& a, const VideoTensor& b) {
  require(a.frames == b.frames && a.channels == b.channels && a.height == b.height && a.width == b.width,
          ErrorCode::Shape, "videos differ in shape");
}

inline double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace detail

/// Mean squared pixel error of every frame.
inline std::vector<double> mse(const VideoTensor& pred, const VideoTensor& truth) {
  detail::require_same_shape(pred, truth);
  std::vector<double> out(pred.frames);
  for (int t = 0; t < pred.frames; ++t) {
    auto a = pred.frame(t), b = truth.frame(t);
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double d = static_cast<double>(a[i]) - b[i];
      acc += d * d;
    }
    out[t] = acc / static_cast<double>(a.size());
  }
  return out;
}

/// IoU of the {pixel > tau} sets per frame; two empty sets score 1.
inline std::vector<double> binary_iou(const VideoTensor& pred, const VideoTensor& truth, double tau = 0.5) {
  detail::require_same_shape(pred, truth);
  std::vector<double> out(pred.frames);
  for (int t = 0; t < pred.frames; ++t) {
    auto a = pred.frame(t), b = truth.frame(t);
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const bool x = a[i] > tau, y = b[i] > tau;
      inter += x && y;
      uni += x || y;
    }
    out[t] = uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
  }
  return out;
}

struct EvalRow {
  int video_index = 0;
  int frame = 0;
  double mse = 0.0;
  double iou = 0.0;
  double baseline_mse = 0.0;
};

/// Per-frame metrics averaged over videos, plus the raw per-video rows.
struct EvalReport {
  std::vector<double> per_frame_mse;
  std::vector<double> per_frame_iou;
  std::vector<double> per_frame_baseline_mse;
  double mean_mse = 0.0;
  double mean_iou = 0.0;
  double baseline_mean_mse = 0.0;
  double relative_improvement = 0.0;  // (baseline - model) / baseline; 0 when baseline is 0
  std::vector<EvalRow> rows;

  void write_csv(std::ostream& os) const {
    os << "video_index,frame,mse,iou,baseline_mse\n";
    os.precision(9);
    for (const auto& r : rows) {
      os << r.video_index << ',' << r.frame << ',' << r.mse << ',' << r.iou << ',' << r.baseline_mse << '\n';
    }
  }
};

struct RolloutSpec {
  int cond_frames = 4;  // given as one clean clip
  int horizon = 12;     // predicted frames
  double iou_threshold = 0.5;
};

/// Clip lengths covering `horizon` frames with clips of `per_clip` frames;
/// the last clip is shortened when the horizon is not a multiple.
inline std::vector<int> clip_schedule(int horizon, int per_clip) {
  require(horizon >= 0 && per_clip >= 1, ErrorCode::Domain, "bad rollout schedule");
  std::vector<int> lengths;
  for (int left = horizon; left > 0; left -= per_clip) lengths.push_back(std::min(left, per_clip));
  return lengths;
}

/// Rolls out every video from its first `cond_frames` frames and scores the
/// next `horizon` frames against ground truth and against repeating the
/// last conditioning frame. Video v uses sampler seed cfg.seed + v.
template <X0Predictor Predictor>
EvalReport evaluate_rollout(Predictor& predictor, const std::vector<VideoTensor>& videos, const RolloutSpec& spec,
                            const SamplerConfig& cfg) {
  require(spec.cond_frames >= 1 && spec.horizon >= 0, ErrorCode::Domain, "bad rollout spec");
  EvalReport report;
  report.per_frame_mse.assign(spec.horizon, 0.0);
  report.per_frame_iou.assign(spec.horizon, 0.0);
  report.per_frame_baseline_mse.assign(spec.horizon, 0.0);
  const auto lengths = clip_schedule(spec.horizon, cfg.frames_per_clip);
  for (std::size_t v = 0; v < videos.size(); ++v) {
    const VideoTensor& video = videos[v];
    require(video.frames >= spec.cond_frames + spec.horizon, ErrorCode::Shape,
            "video " + std::to_string(v) + " is shorter than cond + horizon");
    const VideoTensor cond = video.slice(0, spec.cond_frames);
    const VideoTensor truth = video.slice(spec.cond_frames, spec.horizon);
    SamplerConfig vcfg = cfg;
    vcfg.seed = cfg.seed + v;
    const VideoTensor pred = autoregress(cond, std::span<const int>(lengths), vcfg, predictor);
    require(pred.frames == spec.horizon, ErrorCode::Shape, "rollout length differs from horizon");
    const VideoTensor base = copy_last_frame_baseline(cond, spec.horizon);
    const auto m = mse(pred, truth);
    const auto iou = binary_iou(pred, truth, spec.iou_threshold);
    const auto bm = mse(base, truth);
    for (int t = 0; t < spec.horizon; ++t) {
      report.rows.push_back({static_cast<int>(v), t, m[t], iou[t], bm[t]});
      report.per_frame_mse[t] += m[t];
      report.per_frame_iou[t] += iou[t];
      report.per_frame_baseline_mse[t] += bm[t];
    }
  }
  const double n = videos.empty() ? 1.0 : static_cast<double>(videos.size());
  for (int t = 0; t < spec.horizon; ++t) {
    report.per_frame_mse[t] /= n;
    report.per_frame_iou[t] /= n;
    report.per_frame_baseline_mse[t] /= n;
  }
  report.mean_mse = detail::mean_of(report.per_frame_mse);
  report.mean_iou = detail::mean_of(report.per_frame_iou);
  report.baseline_mean_mse = detail::mean_of(report.per_frame_baseline_mse);
  report.relative_improvement =
      report.baseline_mean_mse > 0.0 ? (report.baseline_mean_mse - report.mean_mse) / report.baseline_mean_mse : 0.0;
  return report;
}

}  // namespace nextclip
