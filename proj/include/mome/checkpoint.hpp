#pragma once

#include <memory>
#include <string>

#include "mome/backbones.hpp"

namespace mome {

// Writes a JSON manifest (model config + named tensor shapes) at `path` and
// a sidecar flat binary of little-endian f64 values, in manifest order, at
// the same path with the extension replaced by ".bin".
void save_checkpoint(Backbone& model, const std::string& path);

// Rebuilds the model from the manifest's config and fills every named
// parameter from the sidecar. Shapes and names must match the freshly
// constructed model exactly.
std::unique_ptr<Backbone> load_checkpoint(const std::string& path);

// The sidecar path used by save/load for a given manifest path.
std::string checkpoint_sidecar_path(const std::string& path);

}  // namespace mome
