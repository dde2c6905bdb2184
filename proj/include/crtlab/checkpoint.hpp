#pragma once

#include <string>

#include "crtlab/optim.hpp"

namespace crtlab::ckpt {

// Single-file checkpoint: versioned header, then (name, shape, raw
// little-endian float32 values) records in store order, then an optimizer
// state manifest (per-parameter step count and Adam moments). `meta` is an
// opaque JSON blob describing the model configuration.
//
// Writes are atomic: temp file in the target directory, then rename.
void save(const std::string& path, const opt::ParamStore& store, const std::string& meta);

// Populates an empty store and returns the meta blob.
std::string load(const std::string& path, opt::ParamStore& store);

}  // namespace crtlab::ckpt
