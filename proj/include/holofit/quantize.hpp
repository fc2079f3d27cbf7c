#pragma once

// Vector-quantization codebook math: nearest-code lookup, the VQ training
// losses with their stop-gradient contracts, EOS-terminated index sequences
// and next-index cross-entropy.

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "holofit/error.hpp"

namespace holofit {

using Vector = std::vector<double>;
using Matrix = std::vector<Vector>;  // rows

enum class CodebookKind { Motion, Linguistic };

struct Codebook {
  Matrix codes;
  CodebookKind kind = CodebookKind::Motion;

  int size() const { return static_cast<int>(codes.size()); }
  int dim() const { return codes.empty() ? 0 : static_cast<int>(codes.front().size()); }
  int eos() const { return size(); }

  void validate() const {
    if (codes.empty()) fail(ErrorKind::EmptyCodebook, "codebook has no codes");
    for (const auto& c : codes) {
      if (static_cast<int>(c.size()) != dim()) fail(ErrorKind::ShapeError, "codes differ in dimension");
      for (double v : c)
        if (!std::isfinite(v)) fail(ErrorKind::ShapeError, "codebook has a non-finite entry");
    }
  }
};

struct Quantized {
  Matrix vectors;
  std::vector<int> indices;
};

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

/// Each feature goes to its closest code in Euclidean distance; ties go to
/// the lowest index.
inline Quantized quantize_nearest(const Matrix& features, const Codebook& book) {
  book.validate();
  Quantized q;
  for (const auto& f : features) {
    if (static_cast<int>(f.size()) != book.dim())
      fail(ErrorKind::ShapeError, "feature has dimension " + std::to_string(f.size()) + ", codebook " +
                                      std::to_string(book.dim()));
    int best = 0;
    double best_d = squared_distance(f, book.codes[0]);
    for (int i = 1; i < book.size(); ++i) {
      const double d = squared_distance(f, book.codes[i]);
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    q.indices.push_back(best);
    q.vectors.push_back(book.codes[best]);
  }
  return q;
}

/// Loss terms and their gradients. The codebook term only moves the codes
/// (F is detached) and the commitment term only moves the encoder output
/// (the codes are detached).
struct VqLoss {
  double total = 0.0;
  double recon = 0.0;
  double codebook = 0.0;
  double commitment = 0.0;
  Matrix d_codebook_d_features;
  Matrix d_codebook_d_quantized;
  Matrix d_commitment_d_features;
  Matrix d_commitment_d_quantized;
  Matrix d_recon_d_reconstruction;
};

inline constexpr double kDefaultCommitment = 0.25;

inline VqLoss vq_loss(const Matrix& features, const Matrix& quantized, const Matrix& motion,
                      const Matrix& reconstruction, double beta_commit = kDefaultCommitment) {
  auto same_shape = [](const Matrix& a, const Matrix& b, const char* what) {
    bool ok = a.size() == b.size();
    for (std::size_t i = 0; ok && i < a.size(); ++i) ok = a[i].size() == b[i].size();
    if (!ok) fail(ErrorKind::ShapeError, std::string(what) + " shapes differ");
  };
  same_shape(features, quantized, "feature/quantized");
  same_shape(motion, reconstruction, "motion/reconstruction");

  VqLoss l;
  auto zeros_like = [](const Matrix& a) {
    Matrix z(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) z[i].assign(a[i].size(), 0.0);
    return z;
  };
  l.d_codebook_d_features = zeros_like(features);
  l.d_codebook_d_quantized = zeros_like(features);
  l.d_commitment_d_features = zeros_like(features);
  l.d_commitment_d_quantized = zeros_like(features);
  l.d_recon_d_reconstruction = zeros_like(motion);

  for (std::size_t i = 0; i < features.size(); ++i)
    for (std::size_t k = 0; k < features[i].size(); ++k) {
      const double d = quantized[i][k] - features[i][k];
      l.codebook += d * d;
      l.commitment += beta_commit * d * d;
      l.d_codebook_d_quantized[i][k] = 2.0 * d;
      l.d_commitment_d_features[i][k] = -2.0 * beta_commit * d;
    }
  std::size_t count = 0;
  for (const auto& row : motion) count += row.size();
  for (std::size_t i = 0; i < motion.size(); ++i)
    for (std::size_t k = 0; k < motion[i].size(); ++k) {
      const double d = reconstruction[i][k] - motion[i][k];
      l.recon += d * d / static_cast<double>(count);
      l.d_recon_d_reconstruction[i][k] = 2.0 * d / static_cast<double>(count);
    }
  l.total = l.recon + l.codebook + l.commitment;
  return l;
}

/// Code indices of the features followed by the end token (id = I).
inline std::vector<int> encode_to_indices(const Matrix& features, const Codebook& book) {
  std::vector<int> seq = quantize_nearest(features, book).indices;
  seq.push_back(book.eos());
  return seq;
}

inline void check_index_sequence(std::span<const int> seq, int codes) {
  if (seq.empty() || seq.back() != codes) fail(ErrorKind::BadSequence, "sequence must end with the end token");
  for (std::size_t i = 0; i + 1 < seq.size(); ++i) {
    if (seq[i] == codes) fail(ErrorKind::BadSequence, "end token at position " + std::to_string(i));
    if (seq[i] < 0 || seq[i] > codes) fail(ErrorKind::BadIndex, "index " + std::to_string(seq[i]) + " out of range");
  }
}

inline Matrix decode_from_indices(std::span<const int> seq, const Codebook& book) {
  book.validate();
  for (int i : seq)
    if (i < 0 || i > book.size()) fail(ErrorKind::BadIndex, "index " + std::to_string(i) + " out of range");
  check_index_sequence(seq, book.size());
  Matrix out;
  for (std::size_t i = 0; i + 1 < seq.size(); ++i) out.push_back(book.codes[seq[i]]);
  return out;
}

/// Mean over positions of -log softmax(logits)[target]. The log-sum-exp is
/// accumulated over sorted logits so the value depends only on the multiset
/// of logits in each row.
inline double next_index_xent(const Matrix& logits, std::span<const int> target) {
  if (logits.size() != target.size())
    fail(ErrorKind::ShapeError, std::to_string(logits.size()) + " logit rows for " + std::to_string(target.size()) +
                                    " targets");
  if (logits.empty()) fail(ErrorKind::ShapeError, "no positions");
  const std::size_t width = logits.front().size();
  double total = 0.0;
  for (std::size_t p = 0; p < logits.size(); ++p) {
    const Vector& row = logits[p];
    if (row.size() != width || width == 0) fail(ErrorKind::ShapeError, "logit rows differ in width");
    if (target[p] < 0 || static_cast<std::size_t>(target[p]) >= width)
      fail(ErrorKind::BadIndex, "target " + std::to_string(target[p]) + " out of range");
    Vector sorted = row;
    std::sort(sorted.begin(), sorted.end());
    const double mx = sorted.back();
    double sum = 0.0;
    for (double v : sorted) sum += std::exp(v - mx);
    total += mx + std::log(sum) - row[target[p]];
  }
  return total / static_cast<double>(logits.size());
}

}  // namespace holofit
