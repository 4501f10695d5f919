#pragma once

#include <map>
#include <string>

#include "ddn/numerics/optim.hpp"
#include "ddn/numerics/tensor.hpp"

namespace ddn::numerics {

// Checkpoint file: JSON with a versioned header, mapping parameter name ->
// shape -> row-major values. `meta` carries free-form strings (e.g. the
// effective run configuration).
//
//   { "format": "ddn-checkpoint", "version": 1,
//     "meta":   { ... },
//     "params": { "<name>": { "shape": [r, c], "data": [ ... ] }, ... } }

void save_checkpoint(const std::string& path, const NamedParams& params,
                     const std::map<std::string, std::string>& meta);

// Loads values into already-constructed tensors matched by name; shapes must
// agree. Returns the meta map.
std::map<std::string, std::string> load_checkpoint(const std::string& path, const NamedParams& params);

// Reads only the meta map (to reconstruct a config before building params).
std::map<std::string, std::string> read_checkpoint_meta(const std::string& path);

}  // namespace ddn::numerics
