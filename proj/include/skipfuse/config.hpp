#ifndef SKIPFUSE_CONFIG_HPP_
#define SKIPFUSE_CONFIG_HPP_

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

#include "skipfuse/error.hpp"

namespace skipfuse {

enum class Topology { Serial, Parallel };
enum class FfnKind { Mlp, GluVariant };
enum class Activation { Gelu, Silu };
enum class Positional { None, Rotary };

/// Which projections a block stores. NoQ is what the parallel Q-fold
/// produces: Q is absorbed by a change of basis but P remains.
enum class ReducedForm { Full, NoQP, NoKP, NoVP, NoQ };

enum class AttentionKind { Mha, Mqa, Gqa };

inline std::string_view to_string(Topology t) {
  return t == Topology::Serial ? "serial" : "parallel";
}
inline std::string_view to_string(FfnKind k) { return k == FfnKind::Mlp ? "mlp" : "glu"; }
inline std::string_view to_string(Activation a) {
  return a == Activation::Gelu ? "gelu" : "silu";
}
inline std::string_view to_string(Positional p) {
  return p == Positional::None ? "none" : "rotary";
}
inline std::string_view to_string(ReducedForm r) {
  switch (r) {
    case ReducedForm::Full: return "full";
    case ReducedForm::NoQP: return "no_qp";
    case ReducedForm::NoKP: return "no_kp";
    case ReducedForm::NoVP: return "no_vp";
    case ReducedForm::NoQ: return "no_q";
  }
  return "?";
}
inline std::string_view to_string(AttentionKind k) {
  switch (k) {
    case AttentionKind::Mha: return "MHA";
    case AttentionKind::Mqa: return "MQA";
    case AttentionKind::Gqa: return "GQA";
  }
  return "?";
}

inline std::optional<Topology> parse_topology(std::string_view s) {
  if (s == "serial") return Topology::Serial;
  if (s == "parallel") return Topology::Parallel;
  return std::nullopt;
}
inline std::optional<FfnKind> parse_ffn_kind(std::string_view s) {
  if (s == "mlp") return FfnKind::Mlp;
  if (s == "glu") return FfnKind::GluVariant;
  return std::nullopt;
}
inline std::optional<Activation> parse_activation(std::string_view s) {
  if (s == "gelu") return Activation::Gelu;
  if (s == "silu") return Activation::Silu;
  return std::nullopt;
}
inline std::optional<Positional> parse_positional(std::string_view s) {
  if (s == "none") return Positional::None;
  if (s == "rotary") return Positional::Rotary;
  return std::nullopt;
}
inline std::optional<ReducedForm> parse_reduced_form(std::string_view s) {
  if (s == "full") return ReducedForm::Full;
  if (s == "no_qp") return ReducedForm::NoQP;
  if (s == "no_kp") return ReducedForm::NoKP;
  if (s == "no_vp") return ReducedForm::NoVP;
  if (s == "no_q") return ReducedForm::NoQ;
  return std::nullopt;
}

struct ModelConfig {
  std::size_t d = 0;           // embedding dimension
  std::size_t n_layers = 0;
  std::size_t n_heads = 1;
  std::size_t n_kv_heads = 1;
  std::size_t f = 0;           // FFN hidden dimension
  std::size_t vocab_size = 0;
  Topology topology = Topology::Serial;
  FfnKind ffn_kind = FfnKind::Mlp;
  Activation activation = Activation::Gelu;
  Positional positional = Positional::None;
  bool causal = true;
  ReducedForm reduced_form = ReducedForm::Full;

  std::size_t head_dim() const { return d / n_heads; }

  /// Output width of K and V: d * n_kv_heads / n_heads.
  std::size_t e() const { return head_dim() * n_kv_heads; }

  /// Width of the first FFN layer; GLU variants pack gate and up side by side.
  std::size_t ffn_in_width() const { return ffn_kind == FfnKind::GluVariant ? 2 * f : f; }

  AttentionKind attention_kind() const {
    if (n_kv_heads == n_heads) return AttentionKind::Mha;
    if (n_kv_heads == 1) return AttentionKind::Mqa;
    return AttentionKind::Gqa;
  }

  bool has_q() const {
    return reduced_form != ReducedForm::NoQP && reduced_form != ReducedForm::NoQ;
  }
  bool has_k() const { return reduced_form != ReducedForm::NoKP; }
  bool has_v() const { return reduced_form != ReducedForm::NoVP; }
  bool has_p() const {
    return reduced_form == ReducedForm::Full || reduced_form == ReducedForm::NoQ;
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Throws InvalidConfig when the config violates a structural invariant.
inline void validate(const ModelConfig& c) {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::InvalidConfig, msg); };
  if (c.d == 0) fail("d must be positive");
  if (c.n_heads == 0) fail("n_heads must be positive");
  if (c.n_kv_heads == 0) fail("n_kv_heads must be positive");
  if (c.f == 0) fail("f must be positive");
  if (c.vocab_size == 0) fail("vocab_size must be positive");
  if (c.d % c.n_heads != 0) fail("d must be divisible by n_heads");
  if (c.n_heads % c.n_kv_heads != 0) fail("n_heads must be divisible by n_kv_heads");
  if ((c.reduced_form == ReducedForm::NoKP || c.reduced_form == ReducedForm::NoVP) &&
      c.e() != c.d)
    fail("reduced form " + std::string(to_string(c.reduced_form)) +
         " requires e == d (MHA), got e=" + std::to_string(c.e()));
  if (c.reduced_form == ReducedForm::NoQ && c.topology != Topology::Parallel)
    fail("reduced form no_q only exists for parallel topology");
  if (c.positional == Positional::Rotary && c.head_dim() % 2 != 0)
    fail("rotary embedding needs an even head dimension");
}

inline std::size_t compute_e(const ModelConfig& c) {
  validate(c);
  return c.e();
}

}  // namespace skipfuse

#endif  // SKIPFUSE_CONFIG_HPP_
