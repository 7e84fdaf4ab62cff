#ifndef SKIPFUSE_FORWARD_HPP_
#define SKIPFUSE_FORWARD_HPP_

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "skipfuse/config.hpp"
#include "skipfuse/error.hpp"
#include "skipfuse/matrix.hpp"
#include "skipfuse/weights.hpp"

namespace skipfuse {

inline constexpr double kRotaryBase = 10000.0;

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }
inline double silu(double x) { return x / (1.0 + std::exp(-x)); }

inline double activate(Activation a, double x) {
  return a == Activation::Gelu ? gelu(x) : silu(x);
}

/// Rotates consecutive pairs (2j, 2j+1) inside every head of width head_dim;
/// row t is position t.
inline void apply_rotary(Matrix& x, std::size_t head_dim) {
  const std::size_t n_heads = x.cols() / head_dim;
  for (std::size_t t = 0; t < x.rows(); ++t) {
    auto row = x.row(t);
    for (std::size_t j = 0; j < head_dim / 2; ++j) {
      const double freq = std::pow(kRotaryBase, -2.0 * static_cast<double>(j) /
                                                    static_cast<double>(head_dim));
      const double angle = static_cast<double>(t) * freq;
      const double c = std::cos(angle), s = std::sin(angle);
      for (std::size_t h = 0; h < n_heads; ++h) {
        double& a = row[h * head_dim + 2 * j];
        double& b = row[h * head_dim + 2 * j + 1];
        const double a0 = a, b0 = b;
        a = a0 * c - b0 * s;
        b = a0 * s + b0 * c;
      }
    }
  }
}

/// Row-wise softmax. With `causal`, entries right of the diagonal are
/// excluded outright and come out as exactly 0.
inline Matrix masked_softmax(const Matrix& scores, bool causal) {
  Matrix out(scores.rows(), scores.cols());
  for (std::size_t r = 0; r < scores.rows(); ++r) {
    const std::size_t visible = causal ? std::min(r + 1, scores.cols()) : scores.cols();
    double peak = scores(r, 0);
    for (std::size_t c = 1; c < visible; ++c) peak = std::max(peak, scores(r, c));
    double total = 0.0;
    for (std::size_t c = 0; c < visible; ++c) {
      out(r, c) = std::exp(scores(r, c) - peak);
      total += out(r, c);
    }
    for (std::size_t c = 0; c < visible; ++c) out(r, c) /= total;
  }
  return out;
}

namespace detail {

inline void require_input(const Matrix& x, const ModelConfig& config, const char* what) {
  if (x.rows() == 0 || x.cols() != config.d)
    throw Error(ErrorCode::ShapeMismatch, std::string(what) + " input is " + x.shape_str() +
                                              ", expected Tx" + std::to_string(config.d));
  if (!x.all_finite())
    throw Error(ErrorCode::NonFinite, std::string(what) + " input has NaN/Inf");
}

inline Matrix project(const Matrix& x, const std::optional<Matrix>& w) {
  return w ? matmul(x, *w) : x;
}

}  // namespace detail

/*
 * Multi-head attention with grouped key/value heads. Query head h reads
 * kv head h / (n_heads / n_kv_heads). An absent Q, K, V or P is the identity.
 */
inline Matrix attention_forward(const Matrix& x, const BlockWeights& block,
                                const ModelConfig& config) {
  detail::require_input(x, config, "attention");
  const std::size_t dh = config.head_dim();
  const std::size_t group = config.n_heads / config.n_kv_heads;
  const std::size_t T = x.rows();

  Matrix q = detail::project(x, block.Q);
  Matrix k = detail::project(x, block.K);
  Matrix v = detail::project(x, block.V);
  if (q.cols() != config.d || k.cols() != config.e() || v.cols() != config.e())
    throw Error(ErrorCode::ShapeMismatch, "projection widths do not match config");
  if (config.positional == Positional::Rotary) {
    apply_rotary(q, dh);
    apply_rotary(k, dh);
  }

  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  Matrix heads(T, config.d);
  for (std::size_t h = 0; h < config.n_heads; ++h) {
    const std::size_t kv = h / group;
    const Matrix qh = q.col_block(h * dh, dh);
    const Matrix kh = k.col_block(kv * dh, dh);
    const Matrix vh = v.col_block(kv * dh, dh);
    const Matrix weights =
        masked_softmax(scaled(matmul(qh, kh.transpose()), inv_sqrt_dh), config.causal);
    const Matrix out = matmul(weights, vh);
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t c = 0; c < dh; ++c) heads(t, h * dh + c) = out(t, c);
  }
  return detail::project(heads, block.P);
}

/// Mlp: act(x M) O.  GluVariant: (act(x M_gate) * (x M_up)) O.
inline Matrix ffn_forward(const Matrix& x, const BlockWeights& block,
                          const ModelConfig& config) {
  detail::require_input(x, config, "ffn");
  if (block.M.rows() != config.d || block.M.cols() != config.ffn_in_width() ||
      block.O.rows() != config.f || block.O.cols() != config.d)
    throw Error(ErrorCode::ShapeMismatch, "FFN weights do not match config");
  const Matrix h = matmul(x, block.M);
  const std::size_t f = config.f;
  Matrix inner(x.rows(), f);
  for (std::size_t t = 0; t < x.rows(); ++t) {
    for (std::size_t c = 0; c < f; ++c) {
      const double a = activate(config.activation, h(t, c));
      inner(t, c) = config.ffn_kind == FfnKind::GluVariant ? a * h(t, f + c) : a;
    }
  }
  return matmul(inner, block.O);
}

/// No skip connections and no normalization: serial composes the two
/// branches, parallel sums them.
inline Matrix block_forward(const Matrix& x, const BlockWeights& block,
                            const ModelConfig& config) {
  if (config.topology == Topology::Serial)
    return ffn_forward(attention_forward(x, block, config), block, config);
  return add(attention_forward(x, block, config), ffn_forward(x, block, config));
}

inline Matrix embed(std::span<const std::size_t> tokens, const ModelWeights& model) {
  if (tokens.empty()) throw Error(ErrorCode::ShapeMismatch, "empty token sequence");
  Matrix x(tokens.size(), model.config.d);
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    if (tokens[t] >= model.config.vocab_size)
      throw Error(ErrorCode::TokenOutOfRange,
                  "token " + std::to_string(tokens[t]) + " at position " +
                      std::to_string(t) + " >= vocab_size " +
                      std::to_string(model.config.vocab_size));
    const auto src = model.E.row(tokens[t]);
    std::copy(src.begin(), src.end(), x.row(t).begin());
  }
  return x;
}

/// Activations after the embedding and after every block, plus logits.
struct ForwardTrace {
  std::vector<Matrix> layers;  // n_layers + 1 entries
  Matrix logits;

  const Matrix& hidden() const { return layers.back(); }
};

inline ForwardTrace model_trace(std::span<const std::size_t> tokens,
                                const ModelWeights& model) {
  ForwardTrace trace;
  trace.layers.reserve(model.blocks.size() + 1);
  trace.layers.push_back(embed(tokens, model));
  for (const auto& block : model.blocks)
    trace.layers.push_back(block_forward(trace.layers.back(), block, model.config));
  trace.logits = matmul(trace.layers.back(), model.U);
  return trace;
}

struct ForwardResult {
  Matrix hidden;  // T x d
  Matrix logits;  // T x vocab
};

inline ForwardResult model_forward(std::span<const std::size_t> tokens,
                                   const ModelWeights& model) {
  ForwardTrace trace = model_trace(tokens, model);
  return {std::move(trace.layers.back()), std::move(trace.logits)};
}

/// Greedy choice per position; ties go to the lowest index.
inline std::vector<std::size_t> argmax_rows(const Matrix& logits) {
  std::vector<std::size_t> out(logits.rows());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < logits.cols(); ++c)
      if (logits(r, c) > logits(r, best)) best = c;
    out[r] = best;
  }
  return out;
}

}  // namespace skipfuse

#endif  // SKIPFUSE_FORWARD_HPP_
