#ifndef SKIPFUSE_IO_HPP_
#define SKIPFUSE_IO_HPP_

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "skipfuse/config.hpp"
#include "skipfuse/error.hpp"
#include "skipfuse/matrix.hpp"
#include "skipfuse/presets.hpp"
#include "skipfuse/weights.hpp"

namespace skipfuse {

// ---------------------------------------------------------------------------
// key=value text (config files, checkpoint headers, machine-readable output)
// ---------------------------------------------------------------------------

using KeyValues = std::vector<std::pair<std::string, std::string>>;

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto ws = " \t\r";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

}  // namespace detail

/// One `key=value` per line; `#` starts a comment, blank lines are skipped.
inline KeyValues parse_key_values(std::string_view text,
                                  ErrorCode on_error = ErrorCode::InvalidValue) {
  KeyValues out;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos)
      line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw Error(on_error, "line " + std::to_string(line_no) + ": expected key=value");
    const auto key = detail::trim(line.substr(0, eq));
    const auto value = detail::trim(line.substr(eq + 1));
    if (key.empty())
      throw Error(on_error, "line " + std::to_string(line_no) + ": empty key");
    out.emplace_back(std::string(key), std::string(value));
  }
  return out;
}

namespace detail {

inline std::size_t parse_count(const std::string& key, const std::string& value,
                               bool allow_zero) {
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc{} || ptr != value.data() + value.size())
    throw Error(ErrorCode::InvalidValue, key + "=" + value + " is not a count");
  if (v == 0 && !allow_zero) throw Error(ErrorCode::InvalidValue, key + " must be positive");
  return v;
}

template <typename T, typename Parse>
T parse_enum(const std::string& key, const std::string& value, Parse parse) {
  const auto v = parse(value);
  if (!v) throw Error(ErrorCode::InvalidValue, key + "=" + value + " is not recognized");
  return *v;
}

inline bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw Error(ErrorCode::InvalidValue, key + "=" + value + " is not a boolean");
}

}  // namespace detail

/*
 * Builds a ModelConfig from key=value pairs. Required: d, n_layers, n_heads,
 * n_kv_heads, f, vocab_size. Optional with defaults: topology=serial,
 * ffn_kind=mlp, activation (gelu for mlp, silu for glu), positional=none,
 * causal=true, reduced_form=full. Keys in `extra_keys` are skipped.
 */
inline ModelConfig config_from_key_values(const KeyValues& kv,
                                          const std::set<std::string>& extra_keys = {}) {
  static const std::set<std::string> kRequired = {"d", "n_layers", "n_heads",
                                                  "n_kv_heads", "f", "vocab_size"};
  static const std::set<std::string> kOptional = {"topology",   "ffn_kind", "activation",
                                                  "positional", "causal",   "reduced_form"};
  std::map<std::string, std::string> values;
  for (const auto& [key, value] : kv) {
    if (extra_keys.count(key)) continue;
    if (!kRequired.count(key) && !kOptional.count(key))
      throw Error(ErrorCode::UnknownKey, "unknown key '" + key + "'");
    if (!values.emplace(key, value).second)
      throw Error(ErrorCode::InvalidValue, "duplicate key '" + key + "'");
  }
  for (const auto& key : kRequired)
    if (!values.count(key)) throw Error(ErrorCode::MissingKey, "missing key '" + key + "'");

  ModelConfig c;
  c.d = detail::parse_count("d", values["d"], false);
  c.n_layers = detail::parse_count("n_layers", values["n_layers"], true);
  c.n_heads = detail::parse_count("n_heads", values["n_heads"], false);
  c.n_kv_heads = detail::parse_count("n_kv_heads", values["n_kv_heads"], false);
  c.f = detail::parse_count("f", values["f"], false);
  c.vocab_size = detail::parse_count("vocab_size", values["vocab_size"], false);
  if (values.count("topology"))
    c.topology = detail::parse_enum<Topology>("topology", values["topology"], parse_topology);
  if (values.count("ffn_kind"))
    c.ffn_kind = detail::parse_enum<FfnKind>("ffn_kind", values["ffn_kind"], parse_ffn_kind);
  c.activation = c.ffn_kind == FfnKind::GluVariant ? Activation::Silu : Activation::Gelu;
  if (values.count("activation"))
    c.activation =
        detail::parse_enum<Activation>("activation", values["activation"], parse_activation);
  if (values.count("positional"))
    c.positional =
        detail::parse_enum<Positional>("positional", values["positional"], parse_positional);
  if (values.count("causal")) c.causal = detail::parse_bool("causal", values["causal"]);
  if (values.count("reduced_form"))
    c.reduced_form = detail::parse_enum<ReducedForm>("reduced_form", values["reduced_form"],
                                                     parse_reduced_form);
  validate(c);
  return c;
}

inline ModelConfig parse_config_text(std::string_view text) {
  return config_from_key_values(parse_key_values(text));
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// `source` is a preset name ("pythia-6.9b", "mistral-7b") or a file path.
inline ModelConfig parse_config(const std::string& source) {
  if (auto preset = find_preset(source)) return *preset;
  return parse_config_text(read_file(source));
}

/// Canonical text form; field order is fixed because it is part of the
/// checkpoint header bytes.
inline std::string config_to_text(const ModelConfig& c) {
  std::ostringstream os;
  os << "d=" << c.d << "\n"
     << "n_layers=" << c.n_layers << "\n"
     << "n_heads=" << c.n_heads << "\n"
     << "n_kv_heads=" << c.n_kv_heads << "\n"
     << "f=" << c.f << "\n"
     << "vocab_size=" << c.vocab_size << "\n"
     << "topology=" << to_string(c.topology) << "\n"
     << "ffn_kind=" << to_string(c.ffn_kind) << "\n"
     << "activation=" << to_string(c.activation) << "\n"
     << "positional=" << to_string(c.positional) << "\n"
     << "causal=" << (c.causal ? "true" : "false") << "\n"
     << "reduced_form=" << to_string(c.reduced_form) << "\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// Checkpoint files (layout documented in docs/checkpoint_format.md)
// ---------------------------------------------------------------------------

enum class Dtype { F32, F64 };

inline std::string_view to_string(Dtype t) { return t == Dtype::F32 ? "f32" : "f64"; }
inline std::optional<Dtype> parse_dtype(std::string_view s) {
  if (s == "f32") return Dtype::F32;
  if (s == "f64") return Dtype::F64;
  return std::nullopt;
}
inline std::size_t dtype_size(Dtype t) { return t == Dtype::F32 ? 4 : 8; }

inline constexpr std::string_view kCheckpointMagic = "SKIPFUS1";

struct Checkpoint {
  ModelWeights model;
  Dtype dtype = Dtype::F64;
};

namespace detail {

template <typename T>
void put_le(std::string& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.append(reinterpret_cast<const char*>(bytes), sizeof(T));
}

class ByteReader {
 public:
  explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get_le(const char* what) {
    unsigned char raw[sizeof(T)];
    std::memcpy(raw, take(sizeof(T), what).data(), sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
    T value;
    std::memcpy(&value, raw, sizeof(T));
    return value;
  }

  std::string_view take(std::size_t n, const char* what) {
    if (n > bytes_.size() - pos_)
      throw Error(ErrorCode::TruncatedPayload,
                  std::string("file ends inside ") + what + " at byte " + std::to_string(pos_));
    const auto out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

inline std::vector<std::pair<std::string, const Matrix*>> tensor_list(const ModelWeights& m) {
  std::vector<std::pair<std::string, const Matrix*>> out;
  out.emplace_back("E", &m.E);
  out.emplace_back("U", &m.U);
  for (std::size_t i = 0; i < m.blocks.size(); ++i) {
    const BlockWeights& b = m.blocks[i];
    if (b.Q) out.emplace_back(block_tensor_name(i, 'Q'), &*b.Q);
    if (b.K) out.emplace_back(block_tensor_name(i, 'K'), &*b.K);
    if (b.V) out.emplace_back(block_tensor_name(i, 'V'), &*b.V);
    if (b.P) out.emplace_back(block_tensor_name(i, 'P'), &*b.P);
    out.emplace_back(block_tensor_name(i, 'M'), &b.M);
    out.emplace_back(block_tensor_name(i, 'O'), &b.O);
  }
  return out;
}

}  // namespace detail

/// Serializes to the checkpoint byte layout. f32 rounds to nearest-even.
inline std::string serialize_checkpoint(const ModelWeights& model, Dtype dtype) {
  validate(model);
  const std::string header = config_to_text(model.config) + "dtype=" +
                             std::string(to_string(dtype)) + "\n";
  const auto tensors = detail::tensor_list(model);

  std::string out(kCheckpointMagic);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(header.size()));
  out += header;
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  std::uint64_t offset = 0;
  for (const auto& [name, m] : tensors) {
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    detail::put_le<std::uint64_t>(out, m->rows());
    detail::put_le<std::uint64_t>(out, m->cols());
    detail::put_le<std::uint64_t>(out, offset);
    offset += m->size() * dtype_size(dtype);
  }
  out.reserve(out.size() + offset);
  for (const auto& [name, m] : tensors)
    for (double v : m->data()) {
      if (dtype == Dtype::F64)
        detail::put_le<double>(out, v);
      else
        detail::put_le<float>(out, static_cast<float>(v));
    }
  return out;
}

inline Checkpoint deserialize_checkpoint(std::string_view bytes) {
  detail::ByteReader in(bytes);
  if (bytes.size() < kCheckpointMagic.size() ||
      in.take(kCheckpointMagic.size(), "magic") != kCheckpointMagic)
    throw Error(ErrorCode::BadMagic, "not a skipfuse checkpoint");

  const auto header_len = in.get_le<std::uint32_t>("header length");
  const std::string_view header = in.take(header_len, "header");
  Checkpoint ck;
  try {
    const KeyValues kv = parse_key_values(header, ErrorCode::CorruptHeader);
    auto dtype_it = std::find_if(kv.begin(), kv.end(),
                                 [](const auto& p) { return p.first == "dtype"; });
    if (dtype_it == kv.end()) throw Error(ErrorCode::CorruptHeader, "header lacks dtype");
    const auto dtype = parse_dtype(dtype_it->second);
    if (!dtype) throw Error(ErrorCode::CorruptHeader, "bad dtype " + dtype_it->second);
    ck.dtype = *dtype;
    ck.model.config = config_from_key_values(kv, {"dtype"});
  } catch (const Error& err) {
    if (err.code() == ErrorCode::CorruptHeader) throw;
    throw Error(ErrorCode::CorruptHeader, err.what());
  }
  const ModelConfig& c = ck.model.config;

  struct Entry {
    std::string name;
    std::uint64_t rows, cols, offset;
  };
  const auto count = in.get_le<std::uint32_t>("tensor count");
  std::vector<Entry> directory;
  std::uint64_t expected_offset = 0;
  const std::size_t width = dtype_size(ck.dtype);
  for (std::uint32_t i = 0; i < count; ++i) {
    Entry e;
    const auto name_len = in.get_le<std::uint32_t>("tensor name length");
    e.name = std::string(in.take(name_len, "tensor name"));
    e.rows = in.get_le<std::uint64_t>("tensor rows");
    e.cols = in.get_le<std::uint64_t>("tensor cols");
    e.offset = in.get_le<std::uint64_t>("tensor offset");
    if (e.offset != expected_offset)
      throw Error(ErrorCode::CorruptHeader, "tensor " + e.name + " offset " +
                                                std::to_string(e.offset) + ", expected " +
                                                std::to_string(expected_offset));
    if (e.rows == 0 || e.cols == 0 || e.rows > (1ULL << 32) || e.cols > (1ULL << 32))
      throw Error(ErrorCode::CorruptHeader, "tensor " + e.name + " has bad shape");
    expected_offset += e.rows * e.cols * width;
    directory.push_back(std::move(e));
  }
  if (in.remaining() < expected_offset)
    throw Error(ErrorCode::TruncatedPayload,
                "payload has " + std::to_string(in.remaining()) + " bytes, directory needs " +
                    std::to_string(expected_offset));
  if (in.remaining() > expected_offset)
    throw Error(ErrorCode::CorruptHeader, "trailing bytes after payload");

  // Where each name may go, given the header's reduced form.
  std::map<std::string, Matrix*> slots;
  std::set<std::string> forbidden;
  ModelWeights& m = ck.model;
  m.blocks.resize(c.n_layers);
  slots["E"] = &m.E;
  slots["U"] = &m.U;
  for (std::size_t i = 0; i < c.n_layers; ++i) {
    BlockWeights& b = m.blocks[i];
    auto optional_slot = [&](std::optional<Matrix>& opt, bool present, char which) {
      if (present) {
        opt.emplace();
        slots[block_tensor_name(i, which)] = &*opt;
      } else {
        forbidden.insert(block_tensor_name(i, which));
      }
    };
    optional_slot(b.Q, c.has_q(), 'Q');
    optional_slot(b.K, c.has_k(), 'K');
    optional_slot(b.V, c.has_v(), 'V');
    optional_slot(b.P, c.has_p(), 'P');
    slots[block_tensor_name(i, 'M')] = &b.M;
    slots[block_tensor_name(i, 'O')] = &b.O;
  }

  std::set<std::string> seen;
  for (const Entry& e : directory) {
    if (forbidden.count(e.name))
      throw Error(ErrorCode::InconsistentForm,
                  e.name + " is stored but reduced_form=" +
                      std::string(to_string(c.reduced_form)) + " has no such tensor");
    const auto slot = slots.find(e.name);
    if (slot == slots.end())
      throw Error(ErrorCode::CorruptHeader, "unexpected tensor name " + e.name);
    if (!seen.insert(e.name).second)
      throw Error(ErrorCode::CorruptHeader, "duplicate tensor " + e.name);
    const std::size_t n = e.rows * e.cols;
    std::vector<double> data(n);
    for (auto& v : data)
      v = ck.dtype == Dtype::F64 ? in.get_le<double>("payload")
                                 : static_cast<double>(in.get_le<float>("payload"));
    *slot->second = Matrix(e.rows, e.cols, std::move(data));
  }
  for (const auto& [name, ptr] : slots)
    if (!seen.count(name))
      throw Error(ErrorCode::InconsistentForm, "tensor " + name + " missing from directory");

  validate(m);
  return ck;
}

inline void save(const ModelWeights& model, Dtype dtype, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(model, dtype);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IoFailure, "write failed for " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return deserialize_checkpoint(read_file(path));
}

inline ModelWeights load(const std::filesystem::path& path) {
  return load_checkpoint(path).model;
}

}  // namespace skipfuse

#endif  // SKIPFUSE_IO_HPP_
