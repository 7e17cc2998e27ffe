#pragma once

#include <optional>
#include <string>

#include "popcorn/params.hpp"
#include "popcorn/solver.hpp"

namespace popcorn {

inline constexpr int kCheckpointFormatVersion = 1;

struct Checkpoint {
  PomdpParams params;
  int init_action = 0;
  std::optional<ValueFunction> value_function;
};

// Single JSON document, row-major arrays, human-readable. Serialization is
// canonical: write -> read -> write is byte-identical.
void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);
std::string checkpoint_to_json(const Checkpoint& ck);
Checkpoint checkpoint_from_json(const std::string& text);

}  // namespace popcorn
