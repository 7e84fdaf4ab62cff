#ifndef SKIPFUSE_TESTS_FIXTURES_HPP_
#define SKIPFUSE_TESTS_FIXTURES_HPP_

#include <cstdint>

#include "skipfuse/skipfuse.hpp"

namespace fixtures {

using namespace skipfuse;

struct Shape {
  std::size_t d = 64;
  std::size_t n_layers = 3;
  std::size_t n_heads = 4;
  std::size_t n_kv_heads = 4;
  std::size_t f = 256;
  std::size_t vocab = 97;
};

inline ModelConfig make_config(Shape s, Topology topology = Topology::Serial,
                               FfnKind ffn = FfnKind::Mlp,
                               Positional pos = Positional::None) {
  ModelConfig c;
  c.d = s.d;
  c.n_layers = s.n_layers;
  c.n_heads = s.n_heads;
  c.n_kv_heads = s.n_kv_heads;
  c.f = s.f;
  c.vocab_size = s.vocab;
  c.topology = topology;
  c.ffn_kind = ffn;
  c.activation = ffn == FfnKind::GluVariant ? Activation::Silu : Activation::Gelu;
  c.positional = pos;
  return c;
}

/// Sum of element counts of the tensors a model actually holds.
inline std::uint64_t count_materialized(const ModelWeights& m) {
  std::uint64_t n = m.E.rows() * m.E.cols() + m.U.rows() * m.U.cols();
  for (const auto& b : m.blocks) {
    for (const auto* opt : {&b.Q, &b.K, &b.V, &b.P})
      if (*opt) n += (*opt)->rows() * (*opt)->cols();
    n += b.M.rows() * b.M.cols() + b.O.rows() * b.O.cols();
  }
  return n;
}

}  // namespace fixtures

#endif  // SKIPFUSE_TESTS_FIXTURES_HPP_
