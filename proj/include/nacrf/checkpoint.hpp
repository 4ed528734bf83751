#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nacrf/adam.hpp"
#include "nacrf/model.hpp"

namespace nacrf {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary container, all integers little-endian:
///   "NACRFCKP", u32 version,
///   u32 n, n x {str key, str value}          header fields (config, vocab)
///   u32 n, n x {u32 name_len, name, u32 rank, u32 dims[rank], f32 values}
///   u32 n, n x {str name, bytes}             state records (step, rng_state)
/// where str/bytes = u32 length + raw bytes. Tensors are row-major.
struct Checkpoint {
  EncoderConfig encoder;
  std::vector<std::string> vocab_tokens;
  std::map<std::string, std::string> meta;
  ModelParams<float> params;
  std::optional<AdamState<float>> optimizer;
  std::string rng_state;
};

class CheckpointError : public std::runtime_error {
 public:
  enum class Kind { io, bad_magic, version_mismatch, truncated, unknown_tensor, bad_shape, missing_tensor, malformed };

  CheckpointError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  [[nodiscard]] Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::string& path);

/// Header-field encoding of an EncoderConfig, shared with run manifests.
std::map<std::string, std::string> encoder_fields(const EncoderConfig& config);
EncoderConfig encoder_from_fields(const std::map<std::string, std::string>& fields);

}  // namespace nacrf
