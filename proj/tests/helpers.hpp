#pragma once

#include <filesystem>
#include <functional>
#include <string>

#include "nextclip/nextclip.hpp"

namespace testutil {

/// Depth-2, width-16 model over 2x2 patches of 4x4 grayscale frames.
inline nextclip::ModelConfig tiny_config(int num_classes = 0, std::uint64_t seed = 7) {
  nextclip::ModelConfig c;
  c.depth = 2;
  c.width = 16;
  c.heads = 2;
  c.patch_dim = 4;
  c.max_positions = 64;
  c.num_classes = num_classes;
  c.alpha_features = 8;
  c.seed = seed;
  return c;
}

inline nextclip::VideoTensor random_video(int frames, int h, int w, std::uint64_t seed) {
  nextclip::VideoTensor v = nextclip::VideoTensor::zeros(frames, 1, h, w);
  nextclip::Rng rng(seed);
  for (float& x : v.data) x = static_cast<float>(rng.uniform());
  return v;
}

inline nextclip::TokenSequence tiny_training_sequence(std::vector<int> sizes, std::uint64_t seed,
                                                      float beta = 0.9f) {
  int n = 0;
  for (int s : sizes) n += s;
  const auto video = random_video(n, 4, 4, seed);
  nextclip::Rng rng(seed + 1);
  std::vector<float> alphas;
  for (std::size_t k = 0; k < sizes.size(); ++k) alphas.push_back(static_cast<float>(rng.uniform()));
  return nextclip::build_training_sequence(video, nextclip::ClipPartition{sizes}, alphas, 2, beta, rng);
}

/// Every composition of n into at most kmax positive parts.
inline std::vector<std::vector<int>> compositions(int n, int kmax) {
  std::vector<std::vector<int>> out;
  std::vector<int> cur;
  std::function<void(int)> rec = [&](int left) {
    if (left == 0) {
      out.push_back(cur);
      return;
    }
    if (static_cast<int>(cur.size()) == kmax) return;
    for (int s = 1; s <= left; ++s) {
      cur.push_back(s);
      rec(left - s);
      cur.pop_back();
    }
  };
  rec(n);
  return out;
}

// Sequence with 1 x patches frames (patch size 1) so every P is reachable.
inline nextclip::TokenSequence line_sequence(const std::vector<int>& sizes, int patches) {
  int n = 0;
  for (int s : sizes) n += s;
  const auto v = nextclip::VideoTensor::zeros(n, 1, 1, patches);
  const std::vector<float> alphas(sizes.size(), 0.5f);
  nextclip::Rng rng(1);
  return nextclip::build_training_sequence(v, nextclip::ClipPartition{sizes}, alphas, 1, 1.0f, rng);
}

// Inference sequence [CL(0..k-1), NS(k)] built from the same block sizes.
inline nextclip::TokenSequence line_inference(const std::vector<int>& sizes, int patches) {
  using nextclip::LatentClip;
  using nextclip::LatentFrame;
  const nextclip::PatchGrid g{1, 1, 1, patches};
  std::vector<LatentClip> hist;
  for (std::size_t k = 0; k + 1 < sizes.size(); ++k) {
    LatentClip c;
    for (int i = 0; i < sizes[k]; ++i) c.push_back(LatentFrame{static_cast<int>(k), i, g, std::vector<float>(patches)});
    hist.push_back(c);
  }
  LatentClip state;
  for (int i = 0; i < sizes.back(); ++i)
    state.push_back(LatentFrame{static_cast<int>(hist.size()), i, g, std::vector<float>(patches)});
  return nextclip::build_inference_sequence(hist, state, 0.5f);
}

// Parameters with every bias and gain perturbed away from init.
inline nextclip::ModelParams<double> busy_params(const nextclip::ModelConfig& cfg) {
  auto p = nextclip::init_params<double>(cfg);
  nextclip::Rng rng(99);
  p.for_each([&](const std::string&, nextclip::Matrix<double>& m, bool decays) {
    if (!decays)
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] += 0.1 * rng.normal();
  });
  return p;
}

// Two class-prefixed sequences of the tiny model.
inline std::vector<nextclip::TokenSequence> gradcheck_batch() {
  auto a = tiny_training_sequence({1, 2}, 31);
  auto b = tiny_training_sequence({2, 1, 1}, 32);
  a = nextclip::prefix_class_tokens(a, nextclip::ClassLabel{1, "b"}, 2);
  b = nextclip::prefix_class_tokens(b, nextclip::ClassLabel{0, "a"}, 2);
  return {a, b};
}

/// Fresh directory under the system temp dir, removed on destruction.
struct TempDir {
  std::filesystem::path path;

  explicit TempDir(const std::string& name) {
    path = std::filesystem::temp_directory_path() / ("nextclip_test_" + name);
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string operator/(const std::string& leaf) const { return (path / leaf).string(); }
};

}  // namespace testutil
