#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "nextclip/error.hpp"
#include "nextclip/rng.hpp"
#include "nextclip/videodata.hpp"

namespace nextclip {

/// Sizes N_1..N_K of the consecutive clips a run of N frames is divided into.
struct ClipPartition {
  std::vector<int> sizes;

  int num_clips() const { return static_cast<int>(sizes.size()); }
  int num_frames() const { return std::accumulate(sizes.begin(), sizes.end(), 0); }
  int first_frame(int clip) const {
    return std::accumulate(sizes.begin(), sizes.begin() + clip, 0);
  }

  bool operator==(const ClipPartition&) const = default;
};

/// Uniformly random composition of `n` into `k` positive parts: the K-1 cut
/// points are a uniform random subset of {1..n-1}.
inline ClipPartition partition_frames(int n, int k, Rng& rng) {
  if (k < 1 || k > n) {
    fail(ErrorCode::InvalidPartition,
         "cannot split " + std::to_string(n) + " frames into " + std::to_string(k) + " clips");
  }
  // Selection sampling (Knuth's algorithm S) keeps the cuts sorted.
  std::vector<int> cuts;
  int needed = k - 1;
  const int available = n - 1;
  for (int c = 1; c <= available && needed > 0; ++c) {
    const int remaining = available - c + 1;
    if (rng.uniform() * remaining < needed) {
      cuts.push_back(c);
      --needed;
    }
  }
  ClipPartition part;
  int prev = 0;
  for (int c : cuts) {
    part.sizes.push_back(c - prev);
    prev = c;
  }
  part.sizes.push_back(n - prev);
  return part;
}

// ---------------------------------------------------------------------------
// Patch tokens

/// Patch grid of one frame: P = rows * cols patches of D = C*p*p values.
struct PatchGrid {
  int channels = 1;
  int patch = 4;
  int rows = 0;
  int cols = 0;

  int num_patches() const { return rows * cols; }
  int patch_dim() const { return channels * patch * patch; }
  int height() const { return rows * patch; }
  int width() const { return cols * patch; }

  static PatchGrid for_frame(int channels, int height, int width, int patch) {
    require(patch >= 1 && height % patch == 0 && width % patch == 0, ErrorCode::Shape,
            "patch size " + std::to_string(patch) + " does not divide " + std::to_string(height) +
                "x" + std::to_string(width));
    return PatchGrid{channels, patch, height / patch, width / patch};
  }

  bool operator==(const PatchGrid&) const = default;
};

/// Patch matrix [P][D] of one frame, row-major.
struct LatentFrame {
  int clip = 0;
  int frame = 0;
  PatchGrid grid;
  std::vector<float> patches;

  std::span<float> patch(int i) {
    return {patches.data() + static_cast<std::size_t>(i) * grid.patch_dim(),
            static_cast<std::size_t>(grid.patch_dim())};
  }
  std::span<const float> patch(int i) const {
    return {patches.data() + static_cast<std::size_t>(i) * grid.patch_dim(),
            static_cast<std::size_t>(grid.patch_dim())};
  }
};

using LatentClip = std::vector<LatentFrame>;

struct NoisyFrame {
  LatentFrame latent;
  float alpha = 0.0f;
};

/// Patches in row-major grid order; inside a patch the layout is
/// [channel][row][col].
inline LatentFrame patchify(std::span<const float> frame, int channels, int height, int width, int p) {
  const PatchGrid grid = PatchGrid::for_frame(channels, height, width, p);
  require(frame.size() == static_cast<std::size_t>(channels) * height * width, ErrorCode::Shape,
          "frame buffer size mismatch");
  LatentFrame out;
  out.grid = grid;
  out.patches.resize(frame.size());
  std::size_t idx = 0;
  for (int pr = 0; pr < grid.rows; ++pr)
    for (int pc = 0; pc < grid.cols; ++pc)
      for (int c = 0; c < channels; ++c)
        for (int y = 0; y < p; ++y)
          for (int x = 0; x < p; ++x)
            out.patches[idx++] = frame[(static_cast<std::size_t>(c) * height + pr * p + y) * width + pc * p + x];
  return out;
}

inline std::vector<float> unpatchify(const LatentFrame& latent) {
  const PatchGrid& g = latent.grid;
  const int h = g.height(), w = g.width(), p = g.patch;
  require(latent.patches.size() == static_cast<std::size_t>(g.channels) * h * w, ErrorCode::Shape,
          "latent size does not match its grid");
  std::vector<float> frame(latent.patches.size());
  std::size_t idx = 0;
  for (int pr = 0; pr < g.rows; ++pr)
    for (int pc = 0; pc < g.cols; ++pc)
      for (int c = 0; c < g.channels; ++c)
        for (int y = 0; y < p; ++y)
          for (int x = 0; x < p; ++x)
            frame[(static_cast<std::size_t>(c) * h + pr * p + y) * w + pc * p + x] = latent.patches[idx++];
  return frame;
}

/// Pixel-space frame <-> latent seam. The default encoder is the identity
/// followed by patchify; a learned latent encoder would replace encode/decode.
struct PatchEncoder {
  int patch = 4;

  LatentClip encode(const VideoTensor& clip, int clip_index = 0) const {
    LatentClip out;
    for (int t = 0; t < clip.frames; ++t) {
      LatentFrame f = patchify(clip.frame(t), clip.channels, clip.height, clip.width, patch);
      f.clip = clip_index;
      f.frame = t;
      out.push_back(std::move(f));
    }
    return out;
  }

  /// Decodes to pixels and clamps into [0,1].
  VideoTensor decode(const LatentClip& clip, int fps_hint = 8) const {
    require(!clip.empty(), ErrorCode::Shape, "cannot decode an empty clip");
    const PatchGrid& g = clip.front().grid;
    VideoTensor v = VideoTensor::zeros(static_cast<int>(clip.size()), g.channels, g.height(), g.width(), fps_hint);
    for (std::size_t t = 0; t < clip.size(); ++t) {
      auto px = unpatchify(clip[t]);
      auto dst = v.frame(static_cast<int>(t));
      for (std::size_t i = 0; i < px.size(); ++i) dst[i] = std::clamp(px[i], 0.0f, 1.0f);
    }
    return v;
  }
};

// ---------------------------------------------------------------------------
// Noise

inline std::vector<NoisyFrame> forward_diffuse(const LatentClip& clip, float alpha, Rng& rng) {
  require(alpha >= 0.0f && alpha <= 1.0f, ErrorCode::Domain, "alpha must be in [0,1]");
  std::vector<NoisyFrame> out;
  out.reserve(clip.size());
  for (const auto& frame : clip) {
    NoisyFrame nf{frame, alpha};
    for (float& x : nf.latent.patches) {
      const float eps = static_cast<float>(rng.normal());
      x = alpha * x + (1.0f - alpha) * eps;
    }
    out.push_back(std::move(nf));
  }
  return out;
}

/// Light corruption of conditioning frames: per frame, retention
/// beta + gamma with gamma ~ U[0, 1 - beta], noise fills the remainder.
inline LatentClip corrupt_clean(const LatentClip& clip, float beta, Rng& rng) {
  require(beta >= 0.0f && beta <= 1.0f, ErrorCode::Domain, "beta must be in [0,1]");
  LatentClip out = clip;
  for (auto& frame : out) {
    const float retain = beta + static_cast<float>(rng.uniform()) * (1.0f - beta);
    for (float& x : frame.patches) {
      const float eps = static_cast<float>(rng.normal());
      x = retain * x + (1.0f - retain) * eps;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Token sequences

enum class TokenKind : std::uint8_t { ImgOpen, ImgClose, Diff, Alpha, Patch, Class };
enum class Role : std::uint8_t { Clean, Noisy, Extra };

inline std::string_view to_string(TokenKind k) {
  switch (k) {
    case TokenKind::ImgOpen: return "IMG_OPEN";
    case TokenKind::ImgClose: return "IMG_CLOSE";
    case TokenKind::Diff: return "DIFF";
    case TokenKind::Alpha: return "ALPHA";
    case TokenKind::Patch: return "PATCH";
    case TokenKind::Class: return "CLASS";
  }
  return "?";
}

inline std::string_view to_string(Role r) {
  switch (r) {
    case Role::Clean: return "clean";
    case Role::Noisy: return "noisy";
    case Role::Extra: return "extra";
  }
  return "?";
}

struct Token {
  TokenKind kind = TokenKind::Patch;
  Role role = Role::Clean;
  int clip = 0;          // 0-based clip index
  int frame = 0;         // frame index within the clip
  int global_frame = 0;  // frame index within the video; shared by NS/CL copies
  int ordinal = 0;       // patch index for PATCH, extra index for CLASS, 0 otherwise
  float alpha = 0.0f;    // ALPHA payload
  int class_id = -1;     // CLASS payload
  std::vector<float> payload;  // PATCH payload
  std::vector<float> target;   // regression target for noisy PATCH (training only)
};

struct TokenSequence {
  PatchGrid grid;
  std::vector<Token> tokens;

  std::size_t size() const { return tokens.size(); }

  int num_extras() const {
    int e = 0;
    while (e < static_cast<int>(tokens.size()) && tokens[e].role == Role::Extra) ++e;
    return e;
  }

  std::vector<int> noisy_patch_positions() const {
    std::vector<int> out;
    for (int i = 0; i < static_cast<int>(tokens.size()); ++i)
      if (tokens[i].role == Role::Noisy && tokens[i].kind == TokenKind::Patch) out.push_back(i);
    return out;
  }

  bool has_targets() const {
    for (const auto& t : tokens)
      if (t.role == Role::Noisy && t.kind == TokenKind::Patch && t.target.empty()) return false;
    return true;
  }
};

namespace detail {

inline void push_clean_frame(TokenSequence& seq, const LatentFrame& f, int clip, int frame, int global) {
  Token open{TokenKind::ImgOpen, Role::Clean, clip, frame, global};
  seq.tokens.push_back(open);
  for (int p = 0; p < f.grid.num_patches(); ++p) {
    Token t{TokenKind::Patch, Role::Clean, clip, frame, global, p};
    auto src = f.patch(p);
    t.payload.assign(src.begin(), src.end());
    seq.tokens.push_back(std::move(t));
  }
  seq.tokens.push_back(Token{TokenKind::ImgClose, Role::Clean, clip, frame, global});
}

inline void push_noisy_frame(TokenSequence& seq, const LatentFrame& noisy, const LatentFrame* target,
                             float alpha, int clip, int frame, int global) {
  seq.tokens.push_back(Token{TokenKind::Diff, Role::Noisy, clip, frame, global});
  Token a{TokenKind::Alpha, Role::Noisy, clip, frame, global};
  a.alpha = alpha;
  seq.tokens.push_back(a);
  for (int p = 0; p < noisy.grid.num_patches(); ++p) {
    Token t{TokenKind::Patch, Role::Noisy, clip, frame, global, p};
    auto src = noisy.patch(p);
    t.payload.assign(src.begin(), src.end());
    if (target) {
      auto tgt = target->patch(p);
      t.target.assign(tgt.begin(), tgt.end());
    }
    seq.tokens.push_back(std::move(t));
  }
}

}  // namespace detail

/// Interleaved training input [NS(1), CL(1), ..., NS(K-1), CL(K-1), NS(K)].
/// Clean copies are lightly corrupted with `beta`; noisy PATCH tokens carry
/// the uncorrupted latent as regression target.
inline TokenSequence build_training_sequence(const VideoTensor& video, const ClipPartition& part,
                                             std::span<const float> alphas, int patch, float beta,
                                             Rng& rng) {
  require(part.num_clips() >= 1 && part.num_frames() == video.frames, ErrorCode::InvalidPartition,
          "partition does not cover the video");
  for (int s : part.sizes) require(s >= 1, ErrorCode::InvalidPartition, "clip sizes must be positive");
  require(alphas.size() == part.sizes.size(), ErrorCode::Shape, "need one alpha per clip");
  const PatchEncoder enc{patch};
  TokenSequence seq;
  seq.grid = PatchGrid::for_frame(video.channels, video.height, video.width, patch);
  const int k_total = part.num_clips();
  for (int k = 0; k < k_total; ++k) {
    const int first = part.first_frame(k);
    LatentClip clean = enc.encode(video.slice(first, part.sizes[k]), k);
    auto noisy = forward_diffuse(clean, alphas[k], rng);
    for (int i = 0; i < part.sizes[k]; ++i)
      detail::push_noisy_frame(seq, noisy[i].latent, &clean[i], alphas[k], k, i, first + i);
    if (k + 1 < k_total) {
      LatentClip cond = corrupt_clean(clean, beta, rng);
      for (int i = 0; i < part.sizes[k]; ++i) detail::push_clean_frame(seq, cond[i], k, i, first + i);
    }
  }
  return seq;
}

/// Inference input [CL(1), ..., CL(k), NS(k+1)] where NS carries the current
/// sampler state. History clips are used as given (no corruption).
inline TokenSequence build_inference_sequence(const std::vector<LatentClip>& history,
                                              const LatentClip& noisy_state, float alpha) {
  require(alpha >= 0.0f && alpha <= 1.0f, ErrorCode::Domain, "alpha must be in [0,1]");
  TokenSequence seq;
  bool have_grid = false;
  auto take_grid = [&](const PatchGrid& g) {
    if (!have_grid) {
      seq.grid = g;
      have_grid = true;
    }
    require(seq.grid == g, ErrorCode::Shape, "all frames must share one patch grid");
  };
  int global = 0;
  int k = 0;
  for (; k < static_cast<int>(history.size()); ++k) {
    for (int i = 0; i < static_cast<int>(history[k].size()); ++i) {
      take_grid(history[k][i].grid);
      detail::push_clean_frame(seq, history[k][i], k, i, global++);
    }
  }
  for (int i = 0; i < static_cast<int>(noisy_state.size()); ++i) {
    take_grid(noisy_state[i].grid);
    detail::push_noisy_frame(seq, noisy_state[i], nullptr, alpha, k, i, global++);
  }
  return seq;
}

/// Same as above with a fresh standard-normal state of `next_clip_len` frames.
inline TokenSequence build_inference_sequence(const std::vector<LatentClip>& history, int next_clip_len,
                                              const PatchGrid& grid, float alpha, Rng& rng) {
  require(next_clip_len >= 0, ErrorCode::Shape, "next clip length must be non-negative");
  LatentClip state(next_clip_len);
  for (auto& f : state) {
    f.grid = grid;
    f.patches.resize(static_cast<std::size_t>(grid.num_patches()) * grid.patch_dim());
    for (float& x : f.patches) x = static_cast<float>(rng.normal());
  }
  TokenSequence seq = build_inference_sequence(history, state, alpha);
  seq.grid = grid;
  return seq;
}

/// Expected length of a training sequence for a partition with P patches per frame.
inline std::size_t training_sequence_length(const ClipPartition& part, int patches) {
  std::size_t n = 0;
  for (int k = 0; k < part.num_clips(); ++k) {
    n += static_cast<std::size_t>(part.sizes[k]) * (patches + 2);
    if (k + 1 < part.num_clips()) n += static_cast<std::size_t>(part.sizes[k]) * (patches + 2);
  }
  return n;
}

/// One line per token: index, kind, role, clip, frame, ordinal.
inline std::string describe_layout(const TokenSequence& seq) {
  std::ostringstream os;
  for (std::size_t i = 0; i < seq.tokens.size(); ++i) {
    const Token& t = seq.tokens[i];
    os << i << ' ' << to_string(t.kind) << ' ' << to_string(t.role) << " clip=" << t.clip
       << " frame=" << t.frame << " ord=" << t.ordinal;
    if (t.kind == TokenKind::Alpha) os << " alpha=" << t.alpha;
    if (t.kind == TokenKind::Class) os << " class=" << t.class_id;
    os << '\n';
  }
  return os.str();
}

}  // namespace nextclip
