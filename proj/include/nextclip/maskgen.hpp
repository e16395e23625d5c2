#pragma once

#include <cstdint>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "nextclip/clipseq.hpp"
#include "nextclip/error.hpp"

namespace nextclip {

struct TokenMeta {
  TokenKind kind = TokenKind::Patch;
  Role role = Role::Clean;
  int clip = 0;
  int frame = 0;
  int ordinal = 0;
};

inline TokenMeta meta(const Token& t) { return {t.kind, t.role, t.clip, t.frame, t.ordinal}; }

namespace detail {

// Causal order of element groups inside one frame:
// clean  IMG_OPEN < PATCH < IMG_CLOSE, noisy  DIFF < ALPHA < PATCH.
inline int group_rank(const TokenMeta& m) {
  switch (m.kind) {
    case TokenKind::ImgOpen:
    case TokenKind::Diff:
    case TokenKind::Class: return 0;
    case TokenKind::Alpha: return 1;
    case TokenKind::Patch: return m.role == Role::Noisy ? 2 : 1;
    case TokenKind::ImgClose: return 2;
  }
  return 0;
}

}  // namespace detail

/// Whether query token `q` may attend target token `t` under the
/// clip / frame / patch visibility rules.
inline bool allowed(const TokenMeta& q, const TokenMeta& t) {
  // Extra (conditioning) tokens: causal among themselves, visible to all clip tokens.
  if (q.role == Role::Extra) return t.role == Role::Extra && t.ordinal <= q.ordinal;
  if (t.role == Role::Extra) return true;

  const bool same_frame = t.role == q.role && t.clip == q.clip && t.frame == q.frame;
  const auto within_frame = [&] { return detail::group_rank(t) <= detail::group_rank(q); };

  if (q.role == Role::Clean) {
    if (t.role != Role::Clean || t.clip > q.clip) return false;
    if (t.clip < q.clip) return true;
    if (t.frame < q.frame) return true;
    return same_frame && within_frame();
  }
  // Noisy query.
  if (t.role == Role::Clean) return t.clip < q.clip;
  if (t.clip != q.clip) return false;
  if (!same_frame) return true;
  return within_frame();
}

/// Dense L x L boolean matrix; (q, t) true means q may attend t.
class AttentionMask {
 public:
  AttentionMask() = default;
  explicit AttentionMask(int size) : size_(size), bits_(static_cast<std::size_t>(size) * size, 0) {}

  int size() const { return size_; }
  bool operator()(int q, int t) const { return bits_[static_cast<std::size_t>(q) * size_ + t] != 0; }
  void set(int q, int t, bool value) { bits_[static_cast<std::size_t>(q) * size_ + t] = value ? 1 : 0; }

  std::span<const std::uint8_t> row(int q) const {
    return {bits_.data() + static_cast<std::size_t>(q) * size_, static_cast<std::size_t>(size_)};
  }

  std::size_t count_true() const {
    std::size_t n = 0;
    for (auto b : bits_) n += b;
    return n;
  }

  /// Submatrix over the given rows/columns (same index list for both).
  AttentionMask restrict_to(std::span<const int> indices) const {
    AttentionMask out(static_cast<int>(indices.size()));
    for (std::size_t i = 0; i < indices.size(); ++i)
      for (std::size_t j = 0; j < indices.size(); ++j) out.set(i, j, (*this)(indices[i], indices[j]));
    return out;
  }

  std::string to_ascii() const {
    std::string s;
    s.reserve(static_cast<std::size_t>(size_) * (size_ + 1));
    for (int q = 0; q < size_; ++q) {
      for (int t = 0; t < size_; ++t) s.push_back((*this)(q, t) ? '1' : '0');
      s.push_back('\n');
    }
    return s;
  }

  /// Binary PGM (P5, maxval 255): 255 where attention is allowed.
  std::vector<std::uint8_t> to_pgm() const {
    const std::string header = "P5\n" + std::to_string(size_) + " " + std::to_string(size_) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.reserve(out.size() + bits_.size());
    for (auto b : bits_) out.push_back(b ? 255 : 0);
    return out;
  }

  bool operator==(const AttentionMask&) const = default;

 private:
  int size_ = 0;
  std::vector<std::uint8_t> bits_;
};

namespace detail {

inline AttentionMask pairwise_mask(std::span<const Token> tokens) {
  const int n = static_cast<int>(tokens.size());
  std::vector<TokenMeta> metas(n);
  for (int i = 0; i < n; ++i) metas[i] = meta(tokens[i]);
  AttentionMask mask(n);
  for (int q = 0; q < n; ++q)
    for (int t = 0; t < n; ++t) mask.set(q, t, allowed(metas[q], metas[t]));
  return mask;
}

}  // namespace detail

/// Prefixes E extra tokens: extras are causal among themselves and see no
/// clip token; every clip token additionally sees all extras.
inline AttentionMask extend_mask_with_extras(const AttentionMask& mask, int extras) {
  require(extras >= 0, ErrorCode::Shape, "extra token count must be non-negative");
  const int n = mask.size();
  AttentionMask out(n + extras);
  for (int q = 0; q < extras; ++q)
    for (int t = 0; t <= q; ++t) out.set(q, t, true);
  for (int q = 0; q < n; ++q) {
    for (int t = 0; t < extras; ++t) out.set(extras + q, t, true);
    for (int t = 0; t < n; ++t) out.set(extras + q, extras + t, mask(q, t));
  }
  return out;
}

/// Mask for an interleaved training sequence. Leading extra tokens, if any,
/// are handled through extend_mask_with_extras.
inline AttentionMask build_training_mask(const TokenSequence& seq) {
  const int extras = seq.num_extras();
  std::span<const Token> body(seq.tokens.data() + extras, seq.tokens.size() - extras);
  AttentionMask mask = detail::pairwise_mask(body);
  return extras == 0 ? mask : extend_mask_with_extras(mask, extras);
}

/// Inference sequences obey the same pairwise rule; with only clean history
/// followed by one noisy clip, the clip level reduces to a causal mask.
inline AttentionMask build_inference_mask(const TokenSequence& seq) { return build_training_mask(seq); }

}  // namespace nextclip
