// SPDX-License-Identifier: Apache-2.0
#pragma once

// Versioned little-endian binary checkpoints; layout in docs/checkpoint-format.md.
// Scalars are always stored as IEEE-754 binary64, so float models round-trip
// exactly as well.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "btrnn/btd.hpp"
#include "btrnn/cells.hpp"
#include "btrnn/errors.hpp"
#include "btrnn/linear.hpp"
#include "btrnn/model.hpp"

namespace btrnn {

/// Magic string missing or version tag not understood.
class CheckpointVersionError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class CheckpointKind : std::uint32_t {
  btd = 1,
  linear = 2,
  lstm = 3,
  gru = 4,
  regressor = 5,
  classifier = 6,
};

template <typename T> std::string encode_checkpoint(const BTDecomposition<T>& btd);
template <typename T> std::string encode_checkpoint(const BTLinear<T>& layer);
template <typename T> std::string encode_checkpoint(const LSTMCell<T>& cell);
template <typename T> std::string encode_checkpoint(const GRUCell<T>& cell);
template <typename T> std::string encode_checkpoint(const LinearRegressor<T>& model);
template <typename T> std::string encode_checkpoint(const SequenceClassifier<T>& model);

/// Kind recorded in the header; validates magic and version.
CheckpointKind checkpoint_kind(std::string_view bytes);

// Decoders throw CheckpointVersionError for a bad header, CheckpointError for
// a kind mismatch, truncation, trailing bytes or inconsistent dimensions.
template <typename T> BTDecomposition<T> decode_btd(std::string_view bytes);
template <typename T> BTLinear<T> decode_linear(std::string_view bytes);
template <typename T> LSTMCell<T> decode_lstm(std::string_view bytes);
template <typename T> GRUCell<T> decode_gru(std::string_view bytes);
template <typename T> LinearRegressor<T> decode_regressor(std::string_view bytes);
template <typename T> SequenceClassifier<T> decode_classifier(std::string_view bytes);

template <typename M>
void save_checkpoint(const M& object, const std::filesystem::path& path);

std::string read_checkpoint_bytes(const std::filesystem::path& path);

template <typename T>
SequenceClassifier<T> load_classifier(const std::filesystem::path& path) {
  return decode_classifier<T>(read_checkpoint_bytes(path));
}
template <typename T>
LinearRegressor<T> load_regressor(const std::filesystem::path& path) {
  return decode_regressor<T>(read_checkpoint_bytes(path));
}
template <typename T>
BTDecomposition<T> load_btd(const std::filesystem::path& path) {
  return decode_btd<T>(read_checkpoint_bytes(path));
}

}  // namespace btrnn
