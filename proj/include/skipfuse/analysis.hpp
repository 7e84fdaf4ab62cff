#ifndef SKIPFUSE_ANALYSIS_HPP_
#define SKIPFUSE_ANALYSIS_HPP_

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <string>

#include "skipfuse/config.hpp"

namespace skipfuse {

/*
 * Weight budget of a skipless model and the effect of removing Q and P.
 * Counts exclude biases, norms and rotary tables (the models have none).
 * The speedup is the weight-byte ratio before/after, which is what a batch-1
 * decoder bound by memory bandwidth would see; it is an estimate, not a
 * measurement.
 */
struct WeightCountReport {
  std::uint64_t qp_per_layer = 0;   // 2 d^2
  std::uint64_t kv_per_layer = 0;   // 2 d e
  std::uint64_t ffn_per_layer = 0;  // (2 | 3) d f
  std::uint64_t embed_total = 0;    // 2 d vocab
  std::uint64_t total = 0;
  std::uint64_t total_without_qp = 0;
  double savings_fraction = 0.0;
  double speedup = 1.0;
};

inline WeightCountReport count_weights(const ModelConfig& c) {
  validate(c);
  const std::uint64_t d = c.d, e = c.e(), f = c.f, L = c.n_layers;
  WeightCountReport r;
  r.qp_per_layer = 2 * d * d;
  r.kv_per_layer = 2 * d * e;
  r.ffn_per_layer = (c.ffn_kind == FfnKind::GluVariant ? 3 : 2) * d * f;
  r.embed_total = 2 * d * c.vocab_size;
  r.total = L * (r.qp_per_layer + r.kv_per_layer + r.ffn_per_layer) + r.embed_total;
  r.total_without_qp = r.total - L * r.qp_per_layer;
  r.savings_fraction =
      1.0 - static_cast<double>(r.total_without_qp) / static_cast<double>(r.total);
  r.speedup = static_cast<double>(r.total) / static_cast<double>(r.total_without_qp);
  return r;
}

/// Floats actually stored for `c` in its current reduced form.
inline std::uint64_t stored_weight_count(const ModelConfig& c) {
  const WeightCountReport r = count_weights(c);
  const std::uint64_t d2 = static_cast<std::uint64_t>(c.d) * c.d;
  switch (c.reduced_form) {
    case ReducedForm::Full: return r.total;
    case ReducedForm::NoQ: return r.total - c.n_layers * d2;
    default: return r.total - c.n_layers * 2 * d2;
  }
}

struct SavingsDisplay {
  double percent = 0.0;
  double speedup = 1.0;
  std::string percent_text;  // nearest integer, e.g. "15%"
  std::string speedup_text;  // two decimals, e.g. "1.17x"
};

inline SavingsDisplay savings_and_speedup(const WeightCountReport& r) {
  SavingsDisplay s;
  s.percent = 100.0 * r.savings_fraction;
  s.speedup = r.speedup;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%ld%%", std::lround(s.percent));
  s.percent_text = buf;
  std::snprintf(buf, sizeof buf, "%.2fx", s.speedup);
  s.speedup_text = buf;
  return s;
}

/// 7241465856 -> "7,241,465,856"
inline std::string with_commas(std::uint64_t v) {
  std::string digits = std::to_string(v);
  std::string out;
  for (std::size_t i = 0; i < digits.size(); ++i) {
    if (i > 0 && (digits.size() - i) % 3 == 0) out.push_back(',');
    out.push_back(digits[i]);
  }
  return out;
}

/// 7241465856 -> "7.2B"
inline std::string billions(std::uint64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1fB", static_cast<double>(v) / 1e9);
  return buf;
}

inline void render_table(std::ostream& os, const std::string& name, const ModelConfig& c,
                         const WeightCountReport& r) {
  const SavingsDisplay s = savings_and_speedup(r);
  auto line = [&os](const std::string& key, const std::string& value) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-28s %s\n", key.c_str(), value.c_str());
    os << buf;
  };
  line("Parameter", name);
  line("Parallel attention/FFN?", std::string(to_string(c.topology)));
  line("MHA, MQA, or GQA?", std::string(to_string(c.attention_kind())));
  line("dim (aka d)", with_commas(c.d));
  line("n_layers", with_commas(c.n_layers));
  line("n_heads", with_commas(c.n_heads));
  line("n_kv_heads", with_commas(c.n_kv_heads));
  line("e (output dim. of K, V)", with_commas(c.e()));
  line("FFN type", c.ffn_kind == FfnKind::Mlp ? "MLP" : "MLP with GLU variant");
  line("FFN hidden_dim", with_commas(c.f));
  line("vocab_size", with_commas(c.vocab_size));
  os << "Number of weights:\n";
  line("Q+P weights per layer", with_commas(r.qp_per_layer));
  line("K+V weights per layer", with_commas(r.kv_per_layer));
  line("FFN weights per layer", with_commas(r.ffn_per_layer));
  line("Input+output embed.", with_commas(r.embed_total));
  line("Total weights", with_commas(r.total) + " (" + billions(r.total) + ")");
  os << "Weight savings and speedup after removing Q and P:\n";
  line("Total w/o Q+P weights",
       with_commas(r.total_without_qp) + " (" + billions(r.total_without_qp) + ")");
  line("Weight savings", s.percent_text);
  line("Possible speedup", s.speedup_text + " (batch 1, memory-bandwidth bound)");
}

/// key=value lines, same syntax as config files.
inline void render_machine(std::ostream& os, const std::string& name, const ModelConfig& c,
                           const WeightCountReport& r) {
  const SavingsDisplay s = savings_and_speedup(r);
  char buf[64];
  os << "# weight counts for " << name << "\n";
  os << "d=" << c.d << "\n";
  os << "n_layers=" << c.n_layers << "\n";
  os << "n_heads=" << c.n_heads << "\n";
  os << "n_kv_heads=" << c.n_kv_heads << "\n";
  os << "e=" << c.e() << "\n";
  os << "f=" << c.f << "\n";
  os << "vocab_size=" << c.vocab_size << "\n";
  os << "qp_per_layer=" << r.qp_per_layer << "\n";
  os << "kv_per_layer=" << r.kv_per_layer << "\n";
  os << "ffn_per_layer=" << r.ffn_per_layer << "\n";
  os << "embed_total=" << r.embed_total << "\n";
  os << "total=" << r.total << "\n";
  os << "total_without_qp=" << r.total_without_qp << "\n";
  std::snprintf(buf, sizeof buf, "%.17g", r.savings_fraction);
  os << "savings_fraction=" << buf << "\n";
  std::snprintf(buf, sizeof buf, "%.17g", r.speedup);
  os << "speedup=" << buf << "\n";
  os << "savings_display=" << s.percent_text << "\n";
  os << "speedup_display=" << s.speedup_text << "\n";
}

}  // namespace skipfuse

#endif  // SKIPFUSE_ANALYSIS_HPP_
