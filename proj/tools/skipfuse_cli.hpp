#ifndef SKIPFUSE_TOOLS_CLI_HPP_
#define SKIPFUSE_TOOLS_CLI_HPP_

// Command implementations for the `skipfuse` binary. Kept in a header so the
// test suite can drive them in-process with captured streams.

#include <cstdint>
#include <cstdio>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "skipfuse/skipfuse.hpp"

namespace skipfuse::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kFailed = 1;  // verification failed, or an unexpected error
inline constexpr int kConfigError = 2;
inline constexpr int kIoError = 3;
inline constexpr int kNotApplicable = 4;
inline constexpr int kSingular = 5;
inline constexpr int kMismatch = 6;
inline constexpr int kTokenRange = 7;

/// Refuse to materialize more floats than this without --force.
inline constexpr std::uint64_t kMaterializeLimit = 50'000'000;

inline int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidConfig:
    case ErrorCode::UnknownKey:
    case ErrorCode::MissingKey:
    case ErrorCode::InvalidValue: return kConfigError;
    case ErrorCode::IoFailure:
    case ErrorCode::BadMagic:
    case ErrorCode::CorruptHeader:
    case ErrorCode::TruncatedPayload:
    case ErrorCode::InconsistentForm:
    case ErrorCode::ShapeMismatch: return kIoError;
    case ErrorCode::ApplicabilityError: return kNotApplicable;
    case ErrorCode::SingularMatrix: return kSingular;
    case ErrorCode::ConfigMismatch: return kMismatch;
    case ErrorCode::TokenOutOfRange: return kTokenRange;
    default: return kFailed;
  }
}

struct Streams {
  std::ostream& out;
  std::ostream& err;
};

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void print_matrix(std::ostream& os, const Matrix& m) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      if (c) os << ' ';
      os << format_double(m(r, c));
    }
    os << '\n';
  }
}

/// "3,1,4" -> {3, 1, 4}
inline std::vector<std::size_t> parse_token_list(const std::string& text) {
  std::vector<std::size_t> tokens;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto trimmed = std::string(detail::trim(item));
    std::size_t v = 0;
    const auto [ptr, ec] =
        std::from_chars(trimmed.data(), trimmed.data() + trimmed.size(), v);
    if (trimmed.empty() || ec != std::errc{} || ptr != trimmed.data() + trimmed.size())
      throw Error(ErrorCode::InvalidValue, "bad token '" + item + "'");
    tokens.push_back(v);
  }
  if (tokens.empty()) throw Error(ErrorCode::InvalidValue, "no tokens given");
  return tokens;
}

inline std::string describe(const ModelConfig& c) {
  return std::string(to_string(c.topology)) + " " + std::string(to_string(c.attention_kind())) +
         ", reduced_form=" + std::string(to_string(c.reduced_form));
}

struct InitOptions {
  std::string config;
  std::uint64_t seed = 0;
  double scale = 1.0;
  std::string dtype = "f64";
  std::string out;
  bool count_only = false;
  bool force = false;
};

inline int cmd_init(const InitOptions& o, Streams s) {
  ModelConfig config;
  try {
    config = parse_config(o.config);
  } catch (const Error& e) {
    s.err << "config error: " << e.what() << "\n";
    return kConfigError;
  }
  const auto dtype = parse_dtype(o.dtype);
  if (!dtype) {
    s.err << "unknown dtype '" << o.dtype << "' (use f32 or f64)\n";
    return kConfigError;
  }
  render_table(s.out, o.config, config, count_weights(config));
  if (o.count_only) return kOk;
  if (o.out.empty()) {
    s.err << "init: --out is required unless --count-only is given\n";
    return kConfigError;
  }
  const std::uint64_t floats = stored_weight_count(config);
  if (floats > kMaterializeLimit && !o.force) {
    s.err << "init: refusing to materialize " << with_commas(floats)
          << " weights; pass --force to override or --count-only to just count\n";
    return kConfigError;
  }
  try {
    save(random_model(config, o.seed, o.scale), *dtype, o.out);
  } catch (const Error& e) {
    s.err << "init: " << e.what() << "\n";
    return exit_code_for(e.code());
  }
  s.out << "wrote " << o.out << " (" << with_commas(floats) << " weights, " << o.dtype
        << ", seed " << o.seed << ")\n";
  return kOk;
}

struct FuseOptions {
  std::string in;
  std::string variant;
  std::string out;
  std::string dtype;  // empty: keep the input's dtype
};

inline int cmd_fuse(const FuseOptions& o, Streams s) {
  const auto variant = parse_variant(o.variant);
  if (!variant) {
    s.err << "fuse: --variant must be q, k or v\n";
    return kConfigError;
  }
  try {
    const Checkpoint ck = load_checkpoint(o.in);
    Dtype dtype = ck.dtype;
    if (!o.dtype.empty()) {
      const auto parsed = parse_dtype(o.dtype);
      if (!parsed) {
        s.err << "unknown dtype '" << o.dtype << "'\n";
        return kConfigError;
      }
      dtype = *parsed;
    }
    FusionLog log;
    const ModelWeights fused = reduce(ck.model, *variant, &log);
    for (const auto& w : log.warnings) s.err << "warning: " << w << "\n";
    save(fused, dtype, o.out);
    const std::uint64_t before = ck.model.stored_floats();
    const std::uint64_t after = fused.stored_floats();
    s.out << "input:  " << describe(ck.model.config) << "\n";
    s.out << "output: " << describe(fused.config) << "\n";
    s.out << "weights_before=" << before << "\n";
    s.out << "weights_after=" << after << "\n";
    s.out << "delta=" << (before - after) << "\n";
    return kOk;
  } catch (const Error& e) {
    s.err << "fuse: " << e.what() << "\n";
    return exit_code_for(e.code());
  }
}

struct VerifyOptions {
  std::string a;
  std::string b;
  std::size_t tokens = 64;
  std::uint64_t seed = 0;
  double tol = kDefaultEquivalenceTolerance;
};

inline void print_report(std::ostream& os, const EquivalenceReport& r) {
  os << "tokens_tested=" << r.tokens_tested << "\n";
  os << "seed=" << r.seed << "\n";
  os << "tolerance=" << format_double(r.tolerance) << "\n";
  os << "max_abs_diff=" << format_double(r.max_abs_diff) << "\n";
  os << "max_rel_diff=" << format_double(r.max_rel_diff) << "\n";
  for (std::size_t i = 0; i < r.per_layer_max_abs.size(); ++i)
    os << "layer" << i << "_max_abs=" << format_double(r.per_layer_max_abs[i]) << "\n";
  os << "argmax_match=" << (r.argmax_match ? "true" : "false") << "\n";
  os << "passed=" << (r.passed ? "true" : "false") << "\n";
}

inline int cmd_verify(const VerifyOptions& o, Streams s) {
  try {
    const ModelWeights a = load(o.a);
    const ModelWeights b = load(o.b);
    const EquivalenceReport r = run_equivalence(a, b, o.tokens, o.seed, o.tol);
    print_report(s.out, r);
    return r.passed ? kOk : kFailed;
  } catch (const Error& e) {
    s.err << "verify: " << e.what() << "\n";
    return exit_code_for(e.code());
  }
}

inline int cmd_count(const std::string& source, bool machine, Streams s) {
  try {
    const ModelConfig config = parse_config(source);
    const WeightCountReport r = count_weights(config);
    if (machine)
      render_machine(s.out, source, config, r);
    else
      render_table(s.out, source, config, r);
    return kOk;
  } catch (const Error& e) {
    s.err << "config error: " << e.what() << "\n";
    return kConfigError;
  }
}

inline int cmd_forward(const std::string& model_path, const std::string& tokens_text,
                       bool hidden, Streams s) {
  std::vector<std::size_t> tokens;
  try {
    tokens = parse_token_list(tokens_text);
  } catch (const Error& e) {
    s.err << "forward: " << e.what() << "\n";
    return kConfigError;
  }
  try {
    const ModelWeights model = load(model_path);
    const ForwardResult r = model_forward(tokens, model);
    print_matrix(s.out, hidden ? r.hidden : r.logits);
    return kOk;
  } catch (const Error& e) {
    s.err << "forward: " << e.what() << "\n";
    return exit_code_for(e.code());
  }
}

/// Parses argv and dispatches to one subcommand.
inline int run(int argc, const char* const* argv, Streams s) {
  CLI::App app{"skipfuse: skipless transformer weight fusion toolkit", "skipfuse"};
  app.require_subcommand(1);

  InitOptions init;
  auto* init_cmd = app.add_subcommand("init", "write a randomly initialized checkpoint");
  init_cmd->add_option("--config", init.config, "config file or preset name")->required();
  init_cmd->add_option("--seed", init.seed, "random seed");
  init_cmd->add_option("--scale", init.scale, "weight scale");
  init_cmd->add_option("--dtype", init.dtype, "f32 or f64");
  init_cmd->add_option("--out", init.out, "output checkpoint path");
  init_cmd->add_flag("--count-only", init.count_only, "print the weight table only");
  init_cmd->add_flag("--force", init.force, "allow multi-billion-weight models");

  FuseOptions fuse;
  auto* fuse_cmd = app.add_subcommand("fuse", "eliminate Q, K or V (and P) from a checkpoint");
  fuse_cmd->add_option("--in", fuse.in, "input checkpoint")->required();
  fuse_cmd->add_option("--variant", fuse.variant, "q, k or v")->required();
  fuse_cmd->add_option("--out", fuse.out, "output checkpoint")->required();
  fuse_cmd->add_option("--dtype", fuse.dtype, "output dtype (default: same as input)");

  VerifyOptions verify;
  auto* verify_cmd = app.add_subcommand("verify", "check two checkpoints compute the same function");
  verify_cmd->add_option("--a", verify.a, "reference checkpoint")->required();
  verify_cmd->add_option("--b", verify.b, "candidate checkpoint")->required();
  verify_cmd->add_option("--tokens", verify.tokens, "number of random tokens");
  verify_cmd->add_option("--seed", verify.seed, "token sampling seed");
  verify_cmd->add_option("--tol", verify.tol, "absolute tolerance");

  std::string count_config;
  bool machine = false;
  auto* count_cmd = app.add_subcommand("count", "print weight counts, savings and speedup");
  count_cmd->add_option("--config", count_config, "config file or preset name")->required();
  count_cmd->add_flag("--machine", machine, "key=value output");

  std::string model_path, tokens_text;
  bool want_logits = false, want_hidden = false;
  auto* forward_cmd = app.add_subcommand("forward", "run a forward pass and print a tensor");
  forward_cmd->add_option("--model", model_path, "checkpoint")->required();
  forward_cmd->add_option("--tokens", tokens_text, "comma-separated token ids")->required();
  auto* logits_flag = forward_cmd->add_flag("--logits", want_logits, "print logits (default)");
  forward_cmd->add_flag("--hidden", want_hidden, "print final hidden states")
      ->excludes(logits_flag);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, s.out, s.err);
    return code == 0 ? kOk : kConfigError;
  }

  if (*init_cmd) return cmd_init(init, s);
  if (*fuse_cmd) return cmd_fuse(fuse, s);
  if (*verify_cmd) return cmd_verify(verify, s);
  if (*count_cmd) return cmd_count(count_config, machine, s);
  if (*forward_cmd) return cmd_forward(model_path, tokens_text, want_hidden, s);
  return kConfigError;
}

}  // namespace skipfuse::cli

#endif  // SKIPFUSE_TOOLS_CLI_HPP_
