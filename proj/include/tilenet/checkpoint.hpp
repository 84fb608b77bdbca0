#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "tilenet/adam.hpp"
#include "tilenet/autodiff.hpp"

namespace tilenet {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor value;
  bool operator==(const NamedTensor&) const = default;
};

struct CheckpointGroup {
  std::string name;
  std::vector<NamedTensor> tensors;
  std::optional<AdamState> optimizer;
  bool operator==(const CheckpointGroup&) const = default;
};

// Binary layout, all integers and doubles little-endian:
//   "TNCK" | u32 version | u64 step | str metadata | u32 group_count | groups... | u64 fnv1a
// where str = u32 length + bytes, and each group is
//   str name | u32 tensor_count | { str name | u32 rank | u64 extent[rank] | f64 value[] }...
//   u8 has_optimizer | [f64 lr | f64 beta1 | f64 beta2 | f64 eps | u64 step |
//                       u32 moment_count | { f64 m[] | f64 v[] }...]
// Moments take the shapes of the group's tensors in order. The trailing
// checksum covers every preceding byte.
struct Checkpoint {
  std::uint64_t step = 0;
  std::string metadata;
  std::vector<CheckpointGroup> groups;

  const CheckpointGroup& group(const std::string& name) const;
  bool operator==(const Checkpoint&) const = default;
};

CheckpointGroup capture_group(std::string name, const ParameterList& params,
                              const AdamState* optimizer = nullptr);
// Copies stored tensors into params by name; throws CheckpointError naming the
// tensor on a missing name or shape mismatch.
void restore_group(const CheckpointGroup& group, const ParameterList& params,
                   AdamState* optimizer = nullptr);

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace tilenet
