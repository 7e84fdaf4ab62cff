#ifndef SKIPFUSE_TESTS_ORACLES_HPP_
#define SKIPFUSE_TESTS_ORACLES_HPP_

// Scalar-loop reference implementations. They share nothing with the library
// beyond the Matrix container and are written element by element so that a
// bug in the vectorized path cannot hide in both.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <optional>
#include <vector>

#include "skipfuse/skipfuse.hpp"

namespace oracle {

using skipfuse::Matrix;

/// Dot-product form (i, j, k order) rather than the library's i, k, j.
inline Matrix naive_matmul(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      out(i, j) = s;
    }
  return out;
}

inline double identity_error(const Matrix& m) {
  double worst = 0.0;
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j)
      worst = std::max(worst, std::abs(m(i, j) - (i == j ? 1.0 : 0.0)));
  return worst;
}

/// Rotary on a single (even, odd) pair at position t, written with complex
/// multiplication.
inline void rotate_pair(double& a, double& b, std::size_t t, std::size_t j, std::size_t dh) {
  const double theta = static_cast<double>(t) / std::pow(10000.0, (2.0 * j) / dh);
  const double re = a * std::cos(theta) - b * std::sin(theta);
  const double im = a * std::sin(theta) + b * std::cos(theta);
  a = re;
  b = im;
}

/// Projection x W, or x itself when W is absent.
inline std::vector<std::vector<double>> project(const Matrix& x,
                                                const std::optional<Matrix>& w) {
  const std::size_t out_cols = w ? w->cols() : x.cols();
  std::vector<std::vector<double>> out(x.rows(), std::vector<double>(out_cols, 0.0));
  for (std::size_t t = 0; t < x.rows(); ++t)
    for (std::size_t c = 0; c < out_cols; ++c) {
      if (!w) {
        out[t][c] = x(t, c);
        continue;
      }
      double s = 0.0;
      for (std::size_t k = 0; k < x.cols(); ++k) s += x(t, k) * (*w)(k, c);
      out[t][c] = s;
    }
  return out;
}

/// Attention with explicit loops over heads, query positions and key
/// positions.
inline Matrix attention(const Matrix& x, const skipfuse::BlockWeights& blk,
                        const skipfuse::ModelConfig& cfg) {
  const std::size_t T = x.rows(), d = cfg.d, H = cfg.n_heads, G = cfg.n_kv_heads;
  const std::size_t dh = d / H;
  auto q = project(x, blk.Q);
  auto k = project(x, blk.K);
  auto v = project(x, blk.V);
  if (cfg.positional == skipfuse::Positional::Rotary) {
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t h = 0; h < H; ++h)
        for (std::size_t j = 0; j < dh / 2; ++j)
          rotate_pair(q[t][h * dh + 2 * j], q[t][h * dh + 2 * j + 1], t, j, dh);
      for (std::size_t h = 0; h < G; ++h)
        for (std::size_t j = 0; j < dh / 2; ++j)
          rotate_pair(k[t][h * dh + 2 * j], k[t][h * dh + 2 * j + 1], t, j, dh);
    }
  }
  Matrix concat(T, d);
  for (std::size_t h = 0; h < H; ++h) {
    const std::size_t g = h * G / H;  // kv head serving query head h
    for (std::size_t t = 0; t < T; ++t) {
      const std::size_t last = cfg.causal ? t : T - 1;
      std::vector<double> score(last + 1);
      double peak = -INFINITY;
      for (std::size_t s = 0; s <= last; ++s) {
        double dot = 0.0;
        for (std::size_t c = 0; c < dh; ++c) dot += q[t][h * dh + c] * k[s][g * dh + c];
        score[s] = dot / std::sqrt(static_cast<double>(dh));
        peak = std::max(peak, score[s]);
      }
      double z = 0.0;
      for (auto& sc : score) z += (sc = std::exp(sc - peak));
      for (std::size_t c = 0; c < dh; ++c) {
        double acc = 0.0;
        for (std::size_t s = 0; s <= last; ++s) acc += score[s] / z * v[s][g * dh + c];
        concat(t, h * dh + c) = acc;
      }
    }
  }
  if (!blk.P) return concat;
  return naive_matmul(concat, *blk.P);
}

inline double act(skipfuse::Activation a, double x) {
  if (a == skipfuse::Activation::Gelu) return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2));
  return x / (1.0 + std::exp(-x));
}

inline Matrix ffn(const Matrix& x, const skipfuse::BlockWeights& blk,
                  const skipfuse::ModelConfig& cfg) {
  const std::size_t f = cfg.f;
  const bool glu = cfg.ffn_kind == skipfuse::FfnKind::GluVariant;
  Matrix out(x.rows(), cfg.d);
  for (std::size_t t = 0; t < x.rows(); ++t) {
    std::vector<double> hidden(f);
    for (std::size_t j = 0; j < f; ++j) {
      double gate = 0.0, up = 0.0;
      for (std::size_t k = 0; k < cfg.d; ++k) {
        gate += x(t, k) * blk.M(k, j);
        if (glu) up += x(t, k) * blk.M(k, f + j);
      }
      hidden[j] = glu ? act(cfg.activation, gate) * up : act(cfg.activation, gate);
    }
    for (std::size_t c = 0; c < cfg.d; ++c) {
      double s = 0.0;
      for (std::size_t j = 0; j < f; ++j) s += hidden[j] * blk.O(j, c);
      out(t, c) = s;
    }
  }
  return out;
}

inline Matrix block(const Matrix& x, const skipfuse::BlockWeights& blk,
                    const skipfuse::ModelConfig& cfg) {
  if (cfg.topology == skipfuse::Topology::Serial) return ffn(attention(x, blk, cfg), blk, cfg);
  Matrix a = attention(x, blk, cfg);
  Matrix b = ffn(x, blk, cfg);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) a(i, j) += b(i, j);
  return a;
}

/// 64-bit FNV-1a over the IEEE bit patterns of every element.
inline std::uint64_t bit_hash(const Matrix& m) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double v : m.data()) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    for (int i = 0; i < 8; ++i) {
      h ^= (bits >> (8 * i)) & 0xff;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

}  // namespace oracle

#endif  // SKIPFUSE_TESTS_ORACLES_HPP_
