// SPDX-License-Identifier: Apache-2.0
#include "btrnn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <optional>
#include <sstream>

#include "btrnn/csv.hpp"

namespace btrnn {

namespace {

constexpr char kMagic[8] = {'B', 'T', 'R', 'N', 'N', 'C', 'K', 'P'};
constexpr std::uint8_t kWeightBlockTerm = 1, kWeightDense = 2;
constexpr std::uint8_t kCellLstm = 1, kCellGru = 2;
// Upper bound on any single stored dimension; guards allocation on corrupt input.
constexpr std::uint64_t kMaxDim = std::uint64_t{1} << 32;

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int b = 0; b < 4; ++b) u8(static_cast<std::uint8_t>(v >> (8 * b)));
  }
  void u64(std::uint64_t v) {
    for (int b = 0; b < 8; ++b) u8(static_cast<std::uint8_t>(v >> (8 * b)));
  }
  template <typename T>
  void reals(std::span<const T> values) {
    for (auto v : values) u64(std::bit_cast<std::uint64_t>(static_cast<double>(v)));
  }
  void header(CheckpointKind kind) {
    out_.append(kMagic, sizeof kMagic);
    u32(kCheckpointVersion);
    u32(static_cast<std::uint32_t>(kind));
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view bytes) : in_(bytes) {}

  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(in_[pos_++]);
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= std::uint32_t{u8()} << (8 * b);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int b = 0; b < 8; ++b) v |= std::uint64_t{u8()} << (8 * b);
    return v;
  }
  std::size_t dim() {
    const auto v = u64();
    if (v == 0 || v > kMaxDim) throw CheckpointError("checkpoint: implausible dimension " + std::to_string(v));
    return static_cast<std::size_t>(v);
  }
  template <typename T>
  void reals(std::span<T> dst) {
    need(dst.size() * 8);
    for (auto& v : dst) v = static_cast<T>(std::bit_cast<double>(u64()));
  }
  /// Fails early when `count` reals cannot possibly follow.
  void ensure_reals(std::uint64_t count) const {
    if (count > (in_.size() - pos_) / 8) throw CheckpointError("checkpoint: file truncated");
  }
  CheckpointKind header() {
    if (in_.size() < sizeof kMagic || std::memcmp(in_.data(), kMagic, sizeof kMagic) != 0) {
      throw CheckpointVersionError("checkpoint: bad magic string");
    }
    pos_ = sizeof kMagic;
    if (in_.size() < pos_ + 8) throw CheckpointVersionError("checkpoint: header truncated");
    const auto version = u32();
    if (version != kCheckpointVersion) {
      throw CheckpointVersionError("checkpoint: unsupported format version " + std::to_string(version));
    }
    return static_cast<CheckpointKind>(u32());
  }
  void expect(CheckpointKind want) {
    const auto got = header();
    if (got != want) {
      throw CheckpointError("checkpoint: holds kind " + std::to_string(static_cast<std::uint32_t>(got)) +
                            ", expected " + std::to_string(static_cast<std::uint32_t>(want)));
    }
  }
  void finish() const {
    if (pos_ != in_.size()) throw CheckpointError("checkpoint: trailing bytes after payload");
  }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw CheckpointError("checkpoint: file truncated");
  }
  std::string_view in_;
  std::size_t pos_ = 0;
};

template <typename T>
void put_btd(Writer& w, const BTDecomposition<T>& btd) {
  const auto& shape = btd.shape();
  w.u32(static_cast<std::uint32_t>(shape.order()));
  for (auto v : shape.input_dims()) w.u64(v);
  for (auto v : shape.output_dims()) w.u64(v);
  w.u64(btd.cp_rank());
  w.u64(btd.tucker_rank());
  for (std::size_t n = 0; n < btd.cp_rank(); ++n) w.reals<T>(btd.core(n).data());
  for (std::size_t n = 0; n < btd.cp_rank(); ++n)
    for (std::size_t k = 0; k < btd.order(); ++k) w.reals<T>(btd.factor(n, k).data());
}

template <typename T>
BTDecomposition<T> get_btd(Reader& r) {
  const auto d = r.u32();
  if (d == 0 || d > 64) throw CheckpointError("checkpoint: implausible core order " + std::to_string(d));
  std::vector<std::size_t> in(d), out(d);
  for (auto& v : in) v = r.dim();
  for (auto& v : out) v = r.dim();
  const auto n_terms = r.dim();
  const auto rank = r.dim();
  std::uint64_t scalars = 0;
  for (std::size_t k = 0; k < d; ++k) {
    if (in[k] > kMaxDim / out[k] || rank > kMaxDim / (in[k] * out[k])) throw CheckpointError("checkpoint: implausible factor size");
    scalars += in[k] * out[k] * rank;
  }
  std::uint64_t core = 1;
  for (std::size_t k = 0; k < d; ++k) {
    if (core > kMaxDim / rank) throw CheckpointError("checkpoint: implausible core size");
    core *= rank;
  }
  if (n_terms > kMaxDim / (scalars + core)) throw CheckpointError("checkpoint: implausible term count");
  r.ensure_reals(n_terms * (scalars + core));
  BTDecomposition<T> btd(FactorizedShape(in, out), n_terms, rank);
  for (std::size_t n = 0; n < n_terms; ++n) r.reals<T>(btd.core(n).data());
  for (std::size_t n = 0; n < n_terms; ++n)
    for (std::size_t k = 0; k < d; ++k) r.reals<T>(btd.factor(n, k).data());
  return btd;
}

template <typename T>
void put_matrix(Writer& w, const Tensor<T>& m) {
  w.u64(m.shape()[0]);
  w.u64(m.shape()[1]);
  w.reals<T>(m.data());
}

template <typename T>
Tensor<T> get_matrix(Reader& r) {
  const auto rows = r.dim();
  const auto cols = r.dim();
  if (rows > kMaxDim / cols) throw CheckpointError("checkpoint: implausible matrix size");
  r.ensure_reals(std::uint64_t{rows} * cols);
  Tensor<T> m({rows, cols});
  r.reals<T>(m.data());
  return m;
}

template <typename T>
void put_linear(Writer& w, const BTLinear<T>& layer) {
  if (layer.is_block_term()) {
    w.u8(kWeightBlockTerm);
    put_btd(w, layer.btd());
  } else {
    w.u8(kWeightDense);
    put_matrix(w, layer.dense_weight());
  }
  w.u8(layer.has_bias() ? 1 : 0);
  if (layer.has_bias()) w.reals<T>(std::span<const T>(layer.bias()));
}

template <typename T>
BTLinear<T> get_linear(Reader& r) {
  const auto kind = r.u8();
  std::optional<BTLinear<T>> layer;
  if (kind == kWeightBlockTerm) {
    auto btd = get_btd<T>(r);
    const auto has_bias = r.u8();
    if (has_bias > 1) throw CheckpointError("checkpoint: bad bias flag");
    layer.emplace(BTLinear<T>::block_term(std::move(btd), has_bias == 1));
  } else if (kind == kWeightDense) {
    auto m = get_matrix<T>(r);
    const auto has_bias = r.u8();
    if (has_bias > 1) throw CheckpointError("checkpoint: bad bias flag");
    layer.emplace(BTLinear<T>::dense(std::move(m), has_bias == 1));
  } else {
    throw CheckpointError("checkpoint: unknown weight kind " + std::to_string(kind));
  }
  if (layer->has_bias()) r.reals<T>(std::span<T>(layer->bias()));
  return std::move(*layer);
}

template <typename Cell>
void put_cell(Writer& w, const Cell& cell) {
  put_linear(w, cell.input_map());
  put_matrix(w, cell.recurrent());
}

template <typename Cell, typename T>
Cell get_cell(Reader& r) {
  auto map = get_linear<T>(r);
  auto u = get_matrix<T>(r);
  try {
    return Cell(std::move(map), std::move(u));
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(std::string("checkpoint: inconsistent cell: ") + e.what());
  }
}

}  // namespace

CheckpointKind checkpoint_kind(std::string_view bytes) {
  Reader r(bytes);
  return r.header();
}

template <typename T>
std::string encode_checkpoint(const BTDecomposition<T>& btd) {
  Writer w;
  w.header(CheckpointKind::btd);
  put_btd(w, btd);
  return w.take();
}

template <typename T>
std::string encode_checkpoint(const BTLinear<T>& layer) {
  Writer w;
  w.header(CheckpointKind::linear);
  put_linear(w, layer);
  return w.take();
}

template <typename T>
std::string encode_checkpoint(const LSTMCell<T>& cell) {
  Writer w;
  w.header(CheckpointKind::lstm);
  put_cell(w, cell);
  return w.take();
}

template <typename T>
std::string encode_checkpoint(const GRUCell<T>& cell) {
  Writer w;
  w.header(CheckpointKind::gru);
  put_cell(w, cell);
  return w.take();
}

template <typename T>
std::string encode_checkpoint(const LinearRegressor<T>& model) {
  Writer w;
  w.header(CheckpointKind::regressor);
  put_linear(w, model.map());
  return w.take();
}

template <typename T>
std::string encode_checkpoint(const SequenceClassifier<T>& model) {
  Writer w;
  w.header(CheckpointKind::classifier);
  if (const auto* lstm = std::get_if<LSTMCell<T>>(&model.cell())) {
    w.u8(kCellLstm);
    put_cell(w, *lstm);
  } else {
    w.u8(kCellGru);
    put_cell(w, std::get<GRUCell<T>>(model.cell()));
  }
  put_matrix(w, model.head());
  w.reals<T>(std::span<const T>(model.head_bias()));
  return w.take();
}

template <typename T>
BTDecomposition<T> decode_btd(std::string_view bytes) {
  Reader r(bytes);
  r.expect(CheckpointKind::btd);
  auto out = get_btd<T>(r);
  r.finish();
  return out;
}

template <typename T>
BTLinear<T> decode_linear(std::string_view bytes) {
  Reader r(bytes);
  r.expect(CheckpointKind::linear);
  auto out = get_linear<T>(r);
  r.finish();
  return out;
}

template <typename T>
LSTMCell<T> decode_lstm(std::string_view bytes) {
  Reader r(bytes);
  r.expect(CheckpointKind::lstm);
  auto out = get_cell<LSTMCell<T>, T>(r);
  r.finish();
  return out;
}

template <typename T>
GRUCell<T> decode_gru(std::string_view bytes) {
  Reader r(bytes);
  r.expect(CheckpointKind::gru);
  auto out = get_cell<GRUCell<T>, T>(r);
  r.finish();
  return out;
}

template <typename T>
LinearRegressor<T> decode_regressor(std::string_view bytes) {
  Reader r(bytes);
  r.expect(CheckpointKind::regressor);
  LinearRegressor<T> out(get_linear<T>(r));
  r.finish();
  return out;
}

template <typename T>
SequenceClassifier<T> decode_classifier(std::string_view bytes) {
  Reader r(bytes);
  r.expect(CheckpointKind::classifier);
  const auto cell_kind = r.u8();
  std::optional<typename SequenceClassifier<T>::Cell> cell;
  if (cell_kind == kCellLstm) {
    cell.emplace(get_cell<LSTMCell<T>, T>(r));
  } else if (cell_kind == kCellGru) {
    cell.emplace(get_cell<GRUCell<T>, T>(r));
  } else {
    throw CheckpointError("checkpoint: unknown cell kind " + std::to_string(cell_kind));
  }
  auto head = get_matrix<T>(r);
  std::vector<T> bias(head.shape()[0]);
  r.reals<T>(std::span<T>(bias));
  r.finish();
  try {
    return SequenceClassifier<T>(std::move(*cell), std::move(head), std::move(bias));
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(std::string("checkpoint: inconsistent classifier: ") + e.what());
  }
}

template <typename M>
void save_checkpoint(const M& object, const std::filesystem::path& path) {
  write_text(path, encode_checkpoint(object));
}

std::string read_checkpoint_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

#define BTRNN_INSTANTIATE(T)                                                      \
  template std::string encode_checkpoint(const BTDecomposition<T>&);             \
  template std::string encode_checkpoint(const BTLinear<T>&);                    \
  template std::string encode_checkpoint(const LSTMCell<T>&);                    \
  template std::string encode_checkpoint(const GRUCell<T>&);                     \
  template std::string encode_checkpoint(const LinearRegressor<T>&);             \
  template std::string encode_checkpoint(const SequenceClassifier<T>&);          \
  template BTDecomposition<T> decode_btd(std::string_view);                      \
  template BTLinear<T> decode_linear(std::string_view);                          \
  template LSTMCell<T> decode_lstm(std::string_view);                            \
  template GRUCell<T> decode_gru(std::string_view);                              \
  template LinearRegressor<T> decode_regressor(std::string_view);                \
  template SequenceClassifier<T> decode_classifier(std::string_view);            \
  template void save_checkpoint(const BTDecomposition<T>&, const std::filesystem::path&); \
  template void save_checkpoint(const BTLinear<T>&, const std::filesystem::path&);        \
  template void save_checkpoint(const LSTMCell<T>&, const std::filesystem::path&);        \
  template void save_checkpoint(const GRUCell<T>&, const std::filesystem::path&);         \
  template void save_checkpoint(const LinearRegressor<T>&, const std::filesystem::path&); \
  template void save_checkpoint(const SequenceClassifier<T>&, const std::filesystem::path&);

BTRNN_INSTANTIATE(float)
BTRNN_INSTANTIATE(double)
#undef BTRNN_INSTANTIATE

}  // namespace btrnn
