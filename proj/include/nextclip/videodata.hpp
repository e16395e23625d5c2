#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nextclip/binio.hpp"
#include "nextclip/error.hpp"
#include "nextclip/rng.hpp"

namespace nextclip {

/// N frames of C x H x W scalars in [0,1], stored frame-major [N][C][H][W].
struct VideoTensor {
  int frames = 0;
  int channels = 1;
  int height = 0;
  int width = 0;
  int fps_hint = 8;
  std::vector<float> data;

  static VideoTensor zeros(int n, int c, int h, int w, int fps = 8) {
    VideoTensor v{n, c, h, w, fps, {}};
    v.data.assign(static_cast<std::size_t>(n) * c * h * w, 0.0f);
    return v;
  }

  std::size_t frame_size() const { return static_cast<std::size_t>(channels) * height * width; }

  std::span<float> frame(int t) { return {data.data() + t * frame_size(), frame_size()}; }
  std::span<const float> frame(int t) const { return {data.data() + t * frame_size(), frame_size()}; }

  float& at(int t, int c, int y, int x) {
    return data[((static_cast<std::size_t>(t) * channels + c) * height + y) * width + x];
  }
  float at(int t, int c, int y, int x) const {
    return data[((static_cast<std::size_t>(t) * channels + c) * height + y) * width + x];
  }

  /// Frames [first, first + count) as a new video.
  VideoTensor slice(int first, int count) const {
    require(first >= 0 && count >= 0 && first + count <= frames, ErrorCode::Shape,
            "frame slice out of range");
    VideoTensor out = zeros(count, channels, height, width, fps_hint);
    std::copy_n(data.begin() + first * frame_size(), count * frame_size(), out.data.begin());
    return out;
  }

  void append(const VideoTensor& other) {
    if (frames == 0 && data.empty()) {
      channels = other.channels;
      height = other.height;
      width = other.width;
      fps_hint = other.fps_hint;
    }
    require(other.channels == channels && other.height == height && other.width == width,
            ErrorCode::Shape, "cannot append videos of different frame shape");
    data.insert(data.end(), other.data.begin(), other.data.end());
    frames += other.frames;
  }

  bool operator==(const VideoTensor&) const = default;
};

inline void validate(const VideoTensor& v) {
  require(v.frames >= 0 && (v.channels == 1 || v.channels == 3) && v.height > 0 && v.width > 0,
          ErrorCode::Shape, "video shape invalid");
  require(v.data.size() == static_cast<std::size_t>(v.frames) * v.frame_size(), ErrorCode::Shape,
          "video payload size does not match its shape");
  for (float x : v.data) {
    require(std::isfinite(x) && x >= 0.0f && x <= 1.0f, ErrorCode::Domain,
            "video values must be finite and in [0,1]");
  }
}

/// Every `stride`-th frame starting at `start`, `count` frames in total.
inline VideoTensor stride_frames(const VideoTensor& v, int start, int stride, int count) {
  require(stride >= 1 && start >= 0 && count >= 0, ErrorCode::Shape, "bad stride request");
  require(count == 0 || start + (count - 1) * stride < v.frames, ErrorCode::Shape,
          "strided range exceeds video length");
  VideoTensor out = VideoTensor::zeros(count, v.channels, v.height, v.width, v.fps_hint);
  for (int t = 0; t < count; ++t) {
    auto src = v.frame(start + t * stride);
    std::copy(src.begin(), src.end(), out.frame(t).begin());
  }
  return out;
}

inline VideoTensor copy_last_frame_baseline(const VideoTensor& history, int horizon) {
  require(horizon >= 0, ErrorCode::Domain, "horizon must be non-negative");
  require(history.frames >= 1, ErrorCode::Shape, "baseline needs at least one history frame");
  VideoTensor out = VideoTensor::zeros(horizon, history.channels, history.height, history.width,
                                       history.fps_hint);
  auto last = history.frame(history.frames - 1);
  for (int t = 0; t < horizon; ++t) std::copy(last.begin(), last.end(), out.frame(t).begin());
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic physics scenes

enum class SceneKind { BouncingBall, GravityDrop, LinearDrift };

inline std::string_view to_string(SceneKind kind) {
  switch (kind) {
    case SceneKind::BouncingBall: return "bouncing_ball";
    case SceneKind::GravityDrop: return "gravity_drop";
    case SceneKind::LinearDrift: return "linear_drift";
  }
  return "?";
}

inline SceneKind parse_scene_kind(std::string_view name) {
  if (name == "bouncing_ball") return SceneKind::BouncingBall;
  if (name == "gravity_drop") return SceneKind::GravityDrop;
  if (name == "linear_drift") return SceneKind::LinearDrift;
  fail(ErrorCode::InvalidConfig, "unknown scene kind '" + std::string(name) + "'");
}

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

/// Units are pixels and frames. Position/velocity left unset are drawn
/// from `seed`.
struct SceneConfig {
  SceneKind kind = SceneKind::BouncingBall;
  int height = 16;
  int width = 16;
  int channels = 1;
  int num_frames = 16;
  std::uint64_t seed = 0;
  double speed = 1.5;
  double radius = 2.5;
  double gravity = 0.5;
  float intensity = 1.0f;
  int fps_hint = 8;
  std::optional<Vec2> position;
  std::optional<Vec2> velocity;
};

struct BallState {
  Vec2 position;
  Vec2 velocity;
};

inline void validate(const SceneConfig& cfg) {
  require(cfg.num_frames >= 1, ErrorCode::InvalidConfig, "num_frames must be >= 1");
  require(cfg.channels == 1 || cfg.channels == 3, ErrorCode::InvalidConfig, "channels must be 1 or 3");
  require(cfg.radius > 0.0 && std::isfinite(cfg.radius), ErrorCode::InvalidConfig,
          "radius must be positive");
  require(cfg.height >= 2.0 * cfg.radius && cfg.width >= 2.0 * cfg.radius, ErrorCode::InvalidConfig,
          "resolution smaller than the object diameter");
  require(cfg.height <= 65535 && cfg.width <= 65535, ErrorCode::InvalidConfig, "resolution too large");
  require(std::isfinite(cfg.speed) && std::isfinite(cfg.gravity) && cfg.speed >= 0.0,
          ErrorCode::InvalidConfig, "physics parameters must be finite");
  require(cfg.intensity > 0.0f && cfg.intensity <= 1.0f, ErrorCode::InvalidConfig,
          "intensity must be in (0,1]");
}

namespace detail {

// Elastic reflection of one coordinate into [lo, hi].
inline void reflect(double& p, double& v, double lo, double hi) {
  if (hi <= lo) {
    p = lo;
    v = 0.0;
    return;
  }
  for (int guard = 0; guard < 64 && (p < lo || p > hi); ++guard) {
    if (p < lo) p = 2.0 * lo - p;
    if (p > hi) p = 2.0 * hi - p;
    v = -v;
  }
}

}  // namespace detail

/// Object state for every frame; frame 0 is the initial state and frame t
/// follows t discrete updates.
inline std::vector<BallState> simulate(const SceneConfig& cfg) {
  validate(cfg);
  Rng rng = Rng::derive(cfg.seed, "scene");
  const double r = cfg.radius;
  const double x_lo = r, x_hi = cfg.width - 1 - r;
  const double y_lo = r, y_hi = cfg.height - 1 - r;

  BallState s;
  switch (cfg.kind) {
    case SceneKind::BouncingBall:
    case SceneKind::LinearDrift: {
      s.position = {rng.uniform(x_lo, x_hi), rng.uniform(y_lo, y_hi)};
      const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
      s.velocity = {cfg.speed * std::cos(angle), cfg.speed * std::sin(angle)};
      break;
    }
    case SceneKind::GravityDrop: {
      s.position = {rng.uniform(x_lo, x_hi), rng.uniform(y_lo, y_lo + (y_hi - y_lo) / 3.0)};
      s.velocity = {cfg.speed * rng.uniform(-0.5, 0.5), 0.0};
      break;
    }
  }
  if (cfg.position) s.position = *cfg.position;
  if (cfg.velocity) s.velocity = *cfg.velocity;

  std::vector<BallState> states;
  states.reserve(cfg.num_frames);
  states.push_back(s);
  for (int t = 1; t < cfg.num_frames; ++t) {
    switch (cfg.kind) {
      case SceneKind::BouncingBall:
        s.position.x += s.velocity.x;
        s.position.y += s.velocity.y;
        detail::reflect(s.position.x, s.velocity.x, x_lo, x_hi);
        detail::reflect(s.position.y, s.velocity.y, y_lo, y_hi);
        break;
      case SceneKind::GravityDrop:
        s.velocity.y += cfg.gravity;
        s.position.x += s.velocity.x;
        s.position.y += s.velocity.y;
        detail::reflect(s.position.x, s.velocity.x, x_lo, x_hi);
        detail::reflect(s.position.y, s.velocity.y, y_lo, y_hi);
        break;
      case SceneKind::LinearDrift:
        s.position.x += s.velocity.x;
        s.position.y += s.velocity.y;
        break;
    }
    states.push_back(s);
  }
  return states;
}

/// Renders the object as a hard disk: pixel (x, y) is lit iff its integer
/// coordinates lie within `radius` of the object centre.
inline VideoTensor generate_scene(const SceneConfig& cfg) {
  const auto states = simulate(cfg);
  VideoTensor v = VideoTensor::zeros(cfg.num_frames, cfg.channels, cfg.height, cfg.width, cfg.fps_hint);
  const double r2 = cfg.radius * cfg.radius;
  for (int t = 0; t < cfg.num_frames; ++t) {
    const Vec2 c = states[t].position;
    for (int y = 0; y < cfg.height; ++y) {
      for (int x = 0; x < cfg.width; ++x) {
        const double dx = x - c.x, dy = y - c.y;
        if (dx * dx + dy * dy <= r2) {
          for (int ch = 0; ch < cfg.channels; ++ch) v.at(t, ch, y, x) = cfg.intensity;
        }
      }
    }
  }
  return v;
}

// ---------------------------------------------------------------------------
// Dataset container: "NCVD", u32 version, u32 count, then per video
// u32 N, u16 C, u16 H, u16 W, u16 fps_hint and N*C*H*W fp32 values.

inline constexpr std::uint32_t kDatasetVersion = 1;

inline std::vector<std::uint8_t> encode_dataset(const std::vector<VideoTensor>& videos) {
  binio::Writer w;
  w.bytes("NCVD", 4);
  w.put<std::uint32_t>(kDatasetVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(videos.size()));
  for (const auto& v : videos) {
    validate(v);
    require(v.frames >= 1, ErrorCode::Shape, "dataset videos need at least one frame");
    require(v.height <= 65535 && v.width <= 65535 && v.fps_hint >= 0 && v.fps_hint <= 65535,
            ErrorCode::Shape, "video dimensions exceed the u16 header fields");
    w.put<std::uint32_t>(static_cast<std::uint32_t>(v.frames));
    w.put<std::uint16_t>(static_cast<std::uint16_t>(v.channels));
    w.put<std::uint16_t>(static_cast<std::uint16_t>(v.height));
    w.put<std::uint16_t>(static_cast<std::uint16_t>(v.width));
    w.put<std::uint16_t>(static_cast<std::uint16_t>(v.fps_hint));
    w.floats(v.data);
  }
  return w.buffer();
}

inline std::vector<VideoTensor> decode_dataset(std::span<const std::uint8_t> bytes) {
  binio::Reader r(bytes);
  char magic[4];
  r.bytes(magic, 4);
  if (std::string_view(magic, 4) != "NCVD") fail(ErrorCode::BadMagic, "not a video dataset (bad magic)");
  const auto version = r.get<std::uint32_t>();
  if (version != kDatasetVersion) {
    fail(ErrorCode::VersionMismatch, "unsupported dataset version " + std::to_string(version));
  }
  const auto count = r.get<std::uint32_t>();
  std::vector<VideoTensor> videos;
  for (std::uint32_t i = 0; i < count; ++i) {
    VideoTensor v;
    v.frames = static_cast<int>(r.get<std::uint32_t>());
    v.channels = r.get<std::uint16_t>();
    v.height = r.get<std::uint16_t>();
    v.width = r.get<std::uint16_t>();
    v.fps_hint = r.get<std::uint16_t>();
    const std::size_t n = static_cast<std::size_t>(v.frames) * v.frame_size();
    if (n * sizeof(float) > r.remaining()) fail(ErrorCode::Truncated, "video payload truncated");
    v.data.resize(n);
    r.floats(v.data);
    videos.push_back(std::move(v));
  }
  return videos;
}

inline void write_dataset(const std::string& path, const std::vector<VideoTensor>& videos) {
  binio::write_file(path, encode_dataset(videos));
}

inline std::vector<VideoTensor> read_dataset(const std::string& path) {
  return decode_dataset(binio::read_file(path));
}

}  // namespace nextclip
