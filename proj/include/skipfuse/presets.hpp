#ifndef SKIPFUSE_PRESETS_HPP_
#define SKIPFUSE_PRESETS_HPP_

#include <optional>
#include <string_view>

#include "skipfuse/config.hpp"

namespace skipfuse {

/// Pythia-6.9B: parallel attention/FFN, MHA, plain MLP.
inline ModelConfig pythia_6_9b() {
  ModelConfig c;
  c.d = 4096;
  c.n_layers = 32;
  c.n_heads = 32;
  c.n_kv_heads = 32;
  c.f = 16384;
  c.vocab_size = 50400;
  c.topology = Topology::Parallel;
  c.ffn_kind = FfnKind::Mlp;
  c.activation = Activation::Gelu;
  c.positional = Positional::Rotary;
  return c;
}

/// Mistral-7B: serial, GQA with 8 KV heads, SwiGLU FFN.
inline ModelConfig mistral_7b() {
  ModelConfig c;
  c.d = 4096;
  c.n_layers = 32;
  c.n_heads = 32;
  c.n_kv_heads = 8;
  c.f = 14336;
  c.vocab_size = 32000;
  c.topology = Topology::Serial;
  c.ffn_kind = FfnKind::GluVariant;
  c.activation = Activation::Silu;
  c.positional = Positional::Rotary;
  return c;
}

inline std::optional<ModelConfig> find_preset(std::string_view name) {
  if (name == "pythia-6.9b") return pythia_6_9b();
  if (name == "mistral-7b") return mistral_7b();
  return std::nullopt;
}

}  // namespace skipfuse

#endif  // SKIPFUSE_PRESETS_HPP_
