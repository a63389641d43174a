#pragma once

#include <cstdint>
#include <string>

#include "ovpseg/model.hpp"
#include "ovpseg/scene_io.hpp"

namespace ovpseg {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Writes the model's architecture, every parameter tensor (bit-exact IEEE
/// doubles), and the dataset signature it was trained against.
void save_checkpoint(const Model& model, const std::string& dataset_signature,
                     const std::string& path);

struct LoadedCheckpoint {
  Model model;
  std::string dataset_signature;
};

/// Rebuilds the model from the stored architecture and restores every
/// parameter bitwise. Unknown magic / truncation -> ParseError, newer
/// version -> VersionError, parameter list or shape drift -> ContractError.
LoadedCheckpoint load_checkpoint(const std::string& path);

/// ContractError unless the checkpoint was written against this dataset's
/// vocabulary (see dataset_signature()).
void require_signature_match(const std::string& checkpoint_signature,
                             const DatasetManifest& manifest);

}  // namespace ovpseg
