#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "nextclip/clipseq.hpp"
#include "nextclip/error.hpp"
#include "nextclip/maskgen.hpp"
#include "nextclip/model.hpp"
#include "nextclip/rng.hpp"

namespace nextclip {

struct ClassLabel {
  int id = 0;
  std::string name;

  bool operator==(const ClassLabel&) const = default;
};

/// Prefixes one CLASS token (role extra). The mask builders pick up the
/// prefix and extend the mask accordingly.
inline TokenSequence prefix_class_tokens(const TokenSequence& seq, const ClassLabel& label, int num_classes) {
  require(num_classes > 0, ErrorCode::InvalidConfig, "class conditioning needs a model with num_classes > 0");
  require(label.id >= 0 && label.id < num_classes, ErrorCode::Domain,
          "class id " + std::to_string(label.id) + " outside [0, " + std::to_string(num_classes) + ")");
  require(seq.num_extras() == 0, ErrorCode::Shape, "sequence already carries extra tokens");
  TokenSequence out;
  out.grid = seq.grid;
  out.tokens.reserve(seq.size() + 1);
  Token cls{TokenKind::Class, Role::Extra};
  cls.class_id = label.id;
  out.tokens.push_back(cls);
  out.tokens.insert(out.tokens.end(), seq.tokens.begin(), seq.tokens.end());
  return out;
}

// ---------------------------------------------------------------------------
// Labels file: one "id<TAB>name" line per video, in dataset order.

inline std::vector<ClassLabel> parse_labels(std::istream& in) {
  std::vector<ClassLabel> labels;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    require(tab != std::string::npos, ErrorCode::InvalidConfig, "labels line " + std::to_string(lineno) + " lacks a tab");
    ClassLabel l;
    try {
      std::size_t used = 0;
      l.id = std::stoi(line.substr(0, tab), &used);
      require(used == tab, ErrorCode::InvalidConfig, "bad id");
    } catch (const std::logic_error&) {
      fail(ErrorCode::InvalidConfig, "labels line " + std::to_string(lineno) + " has a non-integer id");
    }
    require(l.id >= 0, ErrorCode::InvalidConfig, "label ids must be non-negative");
    l.name = line.substr(tab + 1);
    labels.push_back(std::move(l));
  }
  return labels;
}

inline std::vector<ClassLabel> read_labels(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open labels file " + path);
  return parse_labels(in);
}

inline void write_labels(const std::string& path, const std::vector<ClassLabel>& labels) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "cannot write labels file " + path);
  for (const auto& l : labels) out << l.id << '\t' << l.name << '\n';
}

// ---------------------------------------------------------------------------
// Linear probe

/// Pooled final-layer features of the first `frames` frames of `video`,
/// presented to the model as one clean clip (no class token).
template <typename Scalar>
Eigen::VectorXd video_features(const ModelParams<Scalar>& params, const VideoTensor& video, int patch, int frames) {
  require(frames >= 1 && frames <= video.frames, ErrorCode::Shape, "feature window exceeds the video");
  const PatchEncoder enc{patch};
  const std::vector<LatentClip> history{enc.encode(video.slice(0, frames), 0)};
  const TokenSequence seq = build_inference_sequence(history, LatentClip{}, 0.0f);
  return pool_clip_features(seq, params, 0).template cast<double>();
}


/// Multinomial logistic regression over standardized features.
struct LinearProbe {
  Eigen::MatrixXd weight;  // classes x d
  Eigen::VectorXd bias;    // classes
  Eigen::VectorXd feature_mean;
  Eigen::VectorXd feature_scale;

  int num_classes() const { return static_cast<int>(weight.rows()); }

  Eigen::VectorXd scores(const Eigen::VectorXd& feature) const {
    const Eigen::VectorXd z = (feature - feature_mean).cwiseProduct(feature_scale);
    return weight * z + bias;
  }
};

struct ProbeOptions {
  int epochs = 500;
  double learning_rate = 0.5;
  double l2 = 1e-4;
  std::uint64_t seed = 0;
};

/// Full-batch gradient descent on the softmax cross-entropy. Weights start
/// from small seeded noise, so the result is a deterministic function of
/// (features, labels, options).
inline LinearProbe train_probe(const std::vector<Eigen::VectorXd>& features, const std::vector<int>& labels,
                               int num_classes, const ProbeOptions& opt = {}) {
  require(!features.empty() && features.size() == labels.size(), ErrorCode::Shape,
          "probe needs one label per feature");
  require(num_classes >= 1, ErrorCode::InvalidConfig, "probe needs at least one class");
  const int n = static_cast<int>(features.size());
  const int d = static_cast<int>(features.front().size());
  Eigen::MatrixXd x(n, d);
  for (int i = 0; i < n; ++i) {
    require(features[i].size() == d, ErrorCode::Shape, "features must share one width");
    require(labels[i] >= 0 && labels[i] < num_classes, ErrorCode::Domain, "label out of range");
    x.row(i) = features[i].transpose();
  }
  LinearProbe probe;
  probe.feature_mean = x.colwise().mean().transpose();
  Eigen::ArrayXd var = (x.rowwise() - probe.feature_mean.transpose()).array().square().colwise().mean().transpose();
  probe.feature_scale = (var.sqrt() + 1e-8).inverse().matrix();
  const Eigen::MatrixXd z =
      ((x.rowwise() - probe.feature_mean.transpose()).array().rowwise() * probe.feature_scale.transpose().array())
          .matrix();

  Rng rng = Rng::derive(opt.seed, "probe");
  probe.weight.resize(num_classes, d);
  for (Eigen::Index i = 0; i < probe.weight.size(); ++i) probe.weight.data()[i] = 0.01 * rng.normal();
  probe.bias = Eigen::VectorXd::Zero(num_classes);

  Eigen::MatrixXd onehot = Eigen::MatrixXd::Zero(n, num_classes);
  for (int i = 0; i < n; ++i) onehot(i, labels[i]) = 1.0;

  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    Eigen::MatrixXd logits = z * probe.weight.transpose();
    logits.rowwise() += probe.bias.transpose();
    for (int i = 0; i < n; ++i) {
      const double mx = logits.row(i).maxCoeff();
      logits.row(i) = (logits.row(i).array() - mx).exp();
      logits.row(i) /= logits.row(i).sum();
    }
    const Eigen::MatrixXd err = (logits - onehot) / n;
    probe.weight -= opt.learning_rate * (err.transpose() * z + opt.l2 * probe.weight);
    probe.bias -= opt.learning_rate * err.colwise().sum().transpose();
  }
  return probe;
}

/// Argmax of the probe scores; ties go to the lowest id.
inline int classify(const LinearProbe& probe, const Eigen::VectorXd& feature) {
  const Eigen::VectorXd s = probe.scores(feature);
  int best = 0;
  for (int c = 1; c < s.size(); ++c)
    if (s(c) > s(best)) best = c;
  return best;
}

inline double accuracy(const LinearProbe& probe, const std::vector<Eigen::VectorXd>& features,
                       const std::vector<int>& labels) {
  if (features.empty()) return 0.0;
  int hits = 0;
  for (std::size_t i = 0; i < features.size(); ++i) hits += classify(probe, features[i]) == labels[i];
  return static_cast<double>(hits) / static_cast<double>(features.size());
}

}  // namespace nextclip
