#pragma once

// Parameter checkpoint container.
//
// Layout (little-endian):
//   magic      8 bytes  "GVCICKP1"
//   meta_len   u64      followed by meta_len bytes of UTF-8 metadata (JSON)
//   count      u64      number of arrays
//   per array: name_len u64, name bytes, rows u64, cols u64,
//              rows*cols IEEE-754 doubles in column-major order
//
// Doubles are copied verbatim, so a save/load cycle is bit-exact.

#include "gvci/autodiff.hpp"

#include <map>
#include <string>
#include <vector>

namespace gvci {

struct Checkpoint {
    std::string metadata;
    std::map<std::string, Matrix> arrays;
};

void save_checkpoint(const std::string& path, const std::string& metadata, const std::vector<Parameter*>& params);
Checkpoint load_checkpoint(const std::string& path);

// Copies arrays into matching parameters by name; throws on missing names or shape mismatch.
void restore_parameters(const Checkpoint& ckpt, const std::vector<Parameter*>& params);

}  // namespace gvci
