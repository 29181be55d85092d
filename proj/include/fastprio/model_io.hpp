#pragma once

#include <filesystem>
#include <string>

#include "fastprio/model.hpp"

namespace fastprio {

// Manifest:
//   {"classes": C, "input_shape": [...], "feature_layer": l,
//    "layers": [{"kind": "dense", "params": {"in": 2, "out": 32},
//                "weights": "blobs/l0.weights.fpt", "bias": "blobs/l0.bias.fpt"}, ...]}
// Blob paths are relative to the manifest and hold tensor files.
//
// Layer params: dense {in, out}; conv2d {in_channels, out_channels,
// kernel: [kh, kw], stride, padding}; maxpool2d {window, stride};
// dropout {rate}; relu / flatten / softmax take none.
Model load_model(const std::filesystem::path& manifest);

// Writes the manifest plus one blob per parameter tensor into
// "<manifest stem>.blobs/" next to it.
void save_model(const Model& model, const std::filesystem::path& manifest);

// Canonical byte string covering architecture and every weight; stable
// across save/load. Used for run-record and report hashing.
std::string model_fingerprint_bytes(const Model& model);

}  // namespace fastprio
