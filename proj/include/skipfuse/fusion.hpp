#ifndef SKIPFUSE_FUSION_HPP_
#define SKIPFUSE_FUSION_HPP_

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "skipfuse/config.hpp"
#include "skipfuse/error.hpp"
#include "skipfuse/forward.hpp"
#include "skipfuse/linalg.hpp"
#include "skipfuse/matrix.hpp"
#include "skipfuse/random.hpp"
#include "skipfuse/weights.hpp"

namespace skipfuse {

/// The projection folded into the preceding layer. Every variant also
/// merges P into M.
enum class FusionVariant { EliminateQ, EliminateK, EliminateV };

inline std::string_view to_string(FusionVariant v) {
  switch (v) {
    case FusionVariant::EliminateQ: return "q";
    case FusionVariant::EliminateK: return "k";
    case FusionVariant::EliminateV: return "v";
  }
  return "?";
}

inline std::optional<FusionVariant> parse_variant(std::string_view s) {
  if (s == "q" || s == "Q") return FusionVariant::EliminateQ;
  if (s == "k" || s == "K") return FusionVariant::EliminateK;
  if (s == "v" || s == "V") return FusionVariant::EliminateV;
  return std::nullopt;
}

inline ReducedForm reduced_form_for(FusionVariant v) {
  switch (v) {
    case FusionVariant::EliminateQ: return ReducedForm::NoQP;
    case FusionVariant::EliminateK: return ReducedForm::NoKP;
    case FusionVariant::EliminateV: return ReducedForm::NoVP;
  }
  return ReducedForm::Full;
}

/// Condition numbers above this are logged as warnings; they still fold.
inline constexpr double kConditionWarning = 1e8;
inline constexpr double kDefaultEquivalenceTolerance = 1e-9;

struct InvertedMatrix {
  std::size_t block = 0;
  char name = '?';
  double condition_1norm = 0.0;
};

/// Optional side channel for fusion diagnostics.
struct FusionLog {
  std::vector<InvertedMatrix> inverted;
  std::vector<std::string> warnings;
};

/// Result of a single fold: the producer absorbs the eliminated matrix X,
/// the two surviving projections are premultiplied by X^-1.
struct FoldResult {
  Matrix producer;
  Matrix first;
  Matrix second;
  double condition_1norm = 0.0;
};

/// M* = P M
inline Matrix merge_pm(const Matrix& P, const Matrix& M) {
  if (!P.is_square() || P.cols() != M.rows())
    throw Error(ErrorCode::ShapeMismatch,
                "merge_pm with P " + P.shape_str() + " and M " + M.shape_str());
  return matmul(P, M);
}

namespace detail {

inline FoldResult fold_through(const Matrix& producer, const Matrix& eliminated,
                               const Matrix& first, const Matrix& second) {
  const std::size_t d = eliminated.rows();
  if (producer.cols() != d || first.rows() != d || second.rows() != d)
    throw Error(ErrorCode::ShapeMismatch,
                "fold with producer " + producer.shape_str() + ", eliminated " +
                    eliminated.shape_str() + ", consumers " + first.shape_str() + ", " +
                    second.shape_str());
  const Matrix inverse = invert(eliminated);
  return {matmul(producer, eliminated), matmul(inverse, first), matmul(inverse, second),
          condition_1norm(eliminated, inverse)};
}

inline void require_square_kv(const Matrix& m, char name) {
  if (!m.is_square())
    throw Error(ErrorCode::ApplicabilityError,
                std::string("eliminating ") + name + " requires e == d (MHA only); " + name +
                    " is " + m.shape_str());
}

}  // namespace detail

/// prev_out* = prev_out Q, K* = Q^-1 K, V* = Q^-1 V.
inline FoldResult fold_q(const Matrix& prev_out, const Matrix& Q, const Matrix& K,
                         const Matrix& V) {
  if (!Q.is_square()) throw Error(ErrorCode::ShapeMismatch, "Q must be square");
  return detail::fold_through(prev_out, Q, K, V);
}

/// prev_out* = prev_out K, Q* = K^-1 Q, V* = K^-1 V. MHA only.
inline FoldResult fold_k(const Matrix& prev_out, const Matrix& Q, const Matrix& K,
                         const Matrix& V) {
  detail::require_square_kv(K, 'K');
  return detail::fold_through(prev_out, K, Q, V);
}

/// prev_out* = prev_out V, Q* = V^-1 Q, K* = V^-1 K. MHA only.
inline FoldResult fold_v(const Matrix& prev_out, const Matrix& Q, const Matrix& K,
                         const Matrix& V) {
  detail::require_square_kv(V, 'V');
  return detail::fold_through(prev_out, V, Q, K);
}

namespace detail {

inline void record(FusionLog* log, std::size_t block, char name, double cond) {
  if (!log) return;
  log->inverted.push_back({block, name, cond});
  if (cond > kConditionWarning)
    log->warnings.push_back("blk" + std::to_string(block) + "." + name +
                            " is ill-conditioned (cond_1 = " + std::to_string(cond) +
                            "); equivalence tolerance may not hold");
}

inline Error at_block(const Error& err, std::size_t block, char name) {
  return Error(err.code(),
               std::string("blk") + std::to_string(block) + "." + name + ": " + err.message(),
               block);
}

inline void require_full(const ModelWeights& model) {
  if (model.config.reduced_form != ReducedForm::Full)
    throw Error(ErrorCode::ApplicabilityError,
                "model is already reduced (" +
                    std::string(to_string(model.config.reduced_form)) + ")");
}

}  // namespace detail

/*
 * Serial-model fusion. Block i's eliminated matrix folds into the layer that
 * produces its input (O of block i-1, or the embedding E for block 0) and P
 * merges into M. Folds read the original block weights, so the result does
 * not depend on processing order. Stores 2 d^2 fewer floats per block.
 */
inline ModelWeights fuse_model(const ModelWeights& model, FusionVariant variant,
                               FusionLog* log = nullptr) {
  validate(model);
  detail::require_full(model);
  const ModelConfig& c = model.config;
  if (c.topology != Topology::Serial)
    throw Error(ErrorCode::ApplicabilityError,
                "fuse_model needs a serial model; parallel models support the Q-fold only");
  if (variant != FusionVariant::EliminateQ && c.e() != c.d)
    throw Error(ErrorCode::ApplicabilityError,
                std::string("variant ") + std::string(to_string(variant)) +
                    " requires e == d (MHA only); this " +
                    std::string(to_string(c.attention_kind())) + " model has e != d (e=" +
                    std::to_string(c.e()) + ", d=" + std::to_string(c.d) + ")");

  ModelWeights out = model;
  for (std::size_t i = 0; i < out.blocks.size(); ++i) {
    BlockWeights& b = out.blocks[i];
    Matrix& producer = i == 0 ? out.E : out.blocks[i - 1].O;
    const char name = variant == FusionVariant::EliminateQ   ? 'Q'
                      : variant == FusionVariant::EliminateK ? 'K'
                                                             : 'V';
    FoldResult r;
    try {
      switch (variant) {
        case FusionVariant::EliminateQ: r = fold_q(producer, *b.Q, *b.K, *b.V); break;
        case FusionVariant::EliminateK: r = fold_k(producer, *b.Q, *b.K, *b.V); break;
        case FusionVariant::EliminateV: r = fold_v(producer, *b.Q, *b.K, *b.V); break;
      }
    } catch (const Error& err) {
      throw detail::at_block(err, i, name);
    }
    detail::record(log, i, name, r.condition_1norm);
    producer = std::move(r.producer);
    switch (variant) {
      case FusionVariant::EliminateQ:
        b.Q.reset();
        b.K = std::move(r.first);
        b.V = std::move(r.second);
        break;
      case FusionVariant::EliminateK:
        b.K.reset();
        b.Q = std::move(r.first);
        b.V = std::move(r.second);
        break;
      case FusionVariant::EliminateV:
        b.V.reset();
        b.Q = std::move(r.first);
        b.K = std::move(r.second);
        break;
    }
    b.M = merge_pm(*b.P, b.M);
    b.P.reset();
  }
  out.config.reduced_form = reduced_form_for(variant);
  validate(out);
  return out;
}

/*
 * Parallel-model Q-fold: a change of basis by Q_i on the input of every
 * block i. Consumers of that input (K, V, M) are premultiplied by Q_i^-1,
 * producers (E, or P and O of block i-1) are postmultiplied by Q_i. The last
 * block's P and O feed the unembedding and stay as they are. P survives, so
 * the saving is d^2 per block.
 */
inline ModelWeights fold_q_parallel(const ModelWeights& model, FusionLog* log = nullptr) {
  validate(model);
  detail::require_full(model);
  if (model.config.topology != Topology::Parallel)
    throw Error(ErrorCode::ApplicabilityError, "fold_q_parallel needs a parallel model");

  const std::size_t L = model.blocks.size();
  std::vector<Matrix> inverses;
  inverses.reserve(L);
  for (std::size_t i = 0; i < L; ++i) {
    const Matrix& q = *model.blocks[i].Q;
    try {
      inverses.push_back(invert(q));
    } catch (const Error& err) {
      throw detail::at_block(err, i, 'Q');
    }
    detail::record(log, i, 'Q', condition_1norm(q, inverses.back()));
  }

  ModelWeights out = model;
  if (L > 0) out.E = matmul(model.E, *model.blocks[0].Q);
  for (std::size_t i = 0; i < L; ++i) {
    BlockWeights& b = out.blocks[i];
    b.K = matmul(inverses[i], *b.K);
    b.V = matmul(inverses[i], *b.V);
    b.M = matmul(inverses[i], b.M);
    if (i + 1 < L) {
      const Matrix& next_q = *model.blocks[i + 1].Q;
      b.P = matmul(*b.P, next_q);
      b.O = matmul(b.O, next_q);
    }
    b.Q.reset();
  }
  out.config.reduced_form = ReducedForm::NoQ;
  validate(out);
  return out;
}

/// Dispatches on topology: serial models use fuse_model, parallel models
/// accept only the Q-fold.
inline ModelWeights reduce(const ModelWeights& model, FusionVariant variant,
                           FusionLog* log = nullptr) {
  if (model.config.topology == Topology::Serial) return fuse_model(model, variant, log);
  if (variant != FusionVariant::EliminateQ)
    throw Error(ErrorCode::ApplicabilityError,
                std::string("variant ") + std::string(to_string(variant)) +
                    " cannot be folded exactly in a parallel block; only q is supported");
  return fold_q_parallel(model, log);
}

struct EquivalenceReport {
  double max_abs_diff = 0.0;  // over final hidden states and logits
  double max_rel_diff = 0.0;  // max_abs_diff / max|reference hidden, logits|
  std::vector<double> per_layer_max_abs;  // embedding output, then each block
  double tolerance = 0.0;
  bool passed = false;
  bool argmax_match = false;
  std::size_t tokens_tested = 0;
  std::uint64_t seed = 0;
};

inline std::vector<std::size_t> sample_tokens(std::size_t n_tokens, std::size_t vocab_size,
                                              std::uint64_t seed) {
  Xoshiro256 rng(seed);
  std::vector<std::size_t> tokens(n_tokens);
  for (auto& t : tokens) t = static_cast<std::size_t>(rng.below(vocab_size));
  return tokens;
}

/*
 * Runs both models on the same seeded token sequence. Pass/fail looks only at
 * the final hidden states and logits. Intermediate activations of a fused
 * model live in a different basis (x Q_{i+1} instead of x), so the per-layer
 * differences are reported for inspection and are not expected to be small.
 */
inline EquivalenceReport run_equivalence(const ModelWeights& a, const ModelWeights& b,
                                         std::size_t n_tokens, std::uint64_t seed,
                                         double tol = kDefaultEquivalenceTolerance) {
  const ModelConfig &ca = a.config, &cb = b.config;
  if (ca.d != cb.d || ca.vocab_size != cb.vocab_size || ca.n_layers != cb.n_layers)
    throw Error(ErrorCode::ConfigMismatch,
                "models differ in d, vocab_size or n_layers");
  if (n_tokens == 0) throw Error(ErrorCode::InvalidValue, "n_tokens must be positive");

  const auto tokens = sample_tokens(n_tokens, ca.vocab_size, seed);
  const ForwardTrace ta = model_trace(tokens, a);
  const ForwardTrace tb = model_trace(tokens, b);

  EquivalenceReport r;
  r.tolerance = tol;
  r.tokens_tested = n_tokens;
  r.seed = seed;
  for (std::size_t i = 0; i < ta.layers.size(); ++i)
    r.per_layer_max_abs.push_back(max_abs_diff(ta.layers[i], tb.layers[i]));
  const double hidden_diff = max_abs_diff(ta.hidden(), tb.hidden());
  const double logit_diff = max_abs_diff(ta.logits, tb.logits);
  r.max_abs_diff = std::isnan(hidden_diff) || std::isnan(logit_diff)
                       ? std::numeric_limits<double>::quiet_NaN()
                       : std::max(hidden_diff, logit_diff);
  const double ref = std::max(max_abs(ta.hidden()), max_abs(ta.logits));
  r.max_rel_diff = ref > 0.0 ? r.max_abs_diff / ref : r.max_abs_diff;
  r.passed = r.max_abs_diff <= tol;
  r.argmax_match = argmax_rows(ta.logits) == argmax_rows(tb.logits);
  return r;
}

}  // namespace skipfuse

#endif  // SKIPFUSE_FUSION_HPP_
