#ifndef SKIPFUSE_WEIGHTS_HPP_
#define SKIPFUSE_WEIGHTS_HPP_

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "skipfuse/config.hpp"
#include "skipfuse/error.hpp"
#include "skipfuse/matrix.hpp"
#include "skipfuse/random.hpp"

namespace skipfuse {

/// Weights of one skipless block. Absent projections act as the identity.
struct BlockWeights {
  std::optional<Matrix> Q;  // d x d
  std::optional<Matrix> K;  // d x e
  std::optional<Matrix> V;  // d x e
  std::optional<Matrix> P;  // d x d
  Matrix M;                 // d x f'  (GLU: gate columns [0, f), up columns [f, 2f))
  Matrix O;                 // f x d

  std::size_t stored_floats() const {
    std::size_t n = M.size() + O.size();
    for (const auto* m : {&Q, &K, &V, &P})
      if (*m) n += (*m)->size();
    return n;
  }

  friend bool operator==(const BlockWeights&, const BlockWeights&) = default;
};

struct ModelWeights {
  ModelConfig config;
  Matrix E;  // vocab x d input embedding
  std::vector<BlockWeights> blocks;
  Matrix U;  // d x vocab unembedding, untied from E

  std::size_t stored_floats() const {
    std::size_t n = E.size() + U.size();
    for (const auto& b : blocks) n += b.stored_floats();
    return n;
  }

  friend bool operator==(const ModelWeights&, const ModelWeights&) = default;
};

namespace detail {

inline void expect_shape(const std::optional<Matrix>& m, bool present, std::size_t rows,
                         std::size_t cols, const std::string& name) {
  if (m.has_value() != present)
    throw Error(ErrorCode::InconsistentForm,
                name + (present ? " missing" : " present") + " for this reduced form");
  if (m && (m->rows() != rows || m->cols() != cols))
    throw Error(ErrorCode::ShapeMismatch, name + " is " + m->shape_str() + ", expected " +
                                              std::to_string(rows) + "x" +
                                              std::to_string(cols));
}

inline void expect_shape(const Matrix& m, std::size_t rows, std::size_t cols,
                         const std::string& name) {
  if (m.rows() != rows || m.cols() != cols)
    throw Error(ErrorCode::ShapeMismatch, name + " is " + m.shape_str() + ", expected " +
                                              std::to_string(rows) + "x" +
                                              std::to_string(cols));
}

}  // namespace detail

inline std::string block_tensor_name(std::size_t i, char which) {
  return "blk" + std::to_string(i) + "." + which;
}

/// Checks the config and that every tensor matches it in presence and shape.
inline void validate(const ModelWeights& m) {
  const ModelConfig& c = m.config;
  validate(c);
  detail::expect_shape(m.E, c.vocab_size, c.d, "E");
  detail::expect_shape(m.U, c.d, c.vocab_size, "U");
  if (m.blocks.size() != c.n_layers)
    throw Error(ErrorCode::ShapeMismatch, "model has " + std::to_string(m.blocks.size()) +
                                              " blocks, config says " +
                                              std::to_string(c.n_layers));
  const std::size_t d = c.d, e = c.e();
  for (std::size_t i = 0; i < m.blocks.size(); ++i) {
    const BlockWeights& b = m.blocks[i];
    detail::expect_shape(b.Q, c.has_q(), d, d, block_tensor_name(i, 'Q'));
    detail::expect_shape(b.K, c.has_k(), d, e, block_tensor_name(i, 'K'));
    detail::expect_shape(b.V, c.has_v(), d, e, block_tensor_name(i, 'V'));
    detail::expect_shape(b.P, c.has_p(), d, d, block_tensor_name(i, 'P'));
    detail::expect_shape(b.M, d, c.ffn_in_width(), block_tensor_name(i, 'M'));
    detail::expect_shape(b.O, c.f, d, block_tensor_name(i, 'O'));
  }
}

/*
 * Random weights for `config`, in whatever reduced form it names. Each of the
 * six per-block tensors (and E, U) gets its own sub-seed drawn from `seed`
 * whether or not it is materialized, so a Full model and a from-scratch
 * reduced model with the same seed share their remaining tensors.
 *
 * E ~ N(0, scale^2); every other W (in x out) ~ N(0, scale^2 / in).
 */
inline ModelWeights random_model(const ModelConfig& config, std::uint64_t seed,
                                 double scale = 1.0) {
  validate(config);
  Xoshiro256 seeds(seed);
  const std::size_t d = config.d, e = config.e(), f = config.f;
  auto fan_in = [scale](std::size_t in) { return scale / std::sqrt(static_cast<double>(in)); };

  ModelWeights m;
  m.config = config;
  m.E = random_gaussian(config.vocab_size, d, seeds.next(), scale);
  m.U = random_gaussian(d, config.vocab_size, seeds.next(), fan_in(d));
  m.blocks.resize(config.n_layers);
  for (auto& b : m.blocks) {
    const std::uint64_t sq = seeds.next(), sk = seeds.next(), sv = seeds.next(),
                        sp = seeds.next(), sm = seeds.next(), so = seeds.next();
    if (config.has_q()) b.Q = random_gaussian(d, d, sq, fan_in(d));
    if (config.has_k()) b.K = random_gaussian(d, e, sk, fan_in(d));
    if (config.has_v()) b.V = random_gaussian(d, e, sv, fan_in(d));
    if (config.has_p()) b.P = random_gaussian(d, d, sp, fan_in(d));
    b.M = random_gaussian(d, config.ffn_in_width(), sm, fan_in(d));
    b.O = random_gaussian(f, d, so, fan_in(f));
  }
  return m;
}

}  // namespace skipfuse

#endif  // SKIPFUSE_WEIGHTS_HPP_
