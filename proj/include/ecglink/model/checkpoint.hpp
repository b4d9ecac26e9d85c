#pragma once

// Binary model checkpoints. Layout: the 8-byte magic "ECGLCKPT", a u32 format
// version, a u64 header length, a JSON header (model kind, configuration,
// tensor names and shapes, epoch, optimizer scalars, RNG state), then every
// parameter tensor and the optimizer moments as little-endian IEEE doubles.
// Loading reproduces every value bit for bit.

#include <cstdint>
#include <filesystem>
#include <string>

#include "ecglink/model/model.hpp"
#include "ecglink/numerics/optim.hpp"

namespace ecglink::model {

struct CheckpointData {
    Model model;
    numerics::OptimizerState optimizer;
    std::uint64_t epoch = 0;
    std::string rng_state;
};

void save_checkpoint(const std::filesystem::path& path, const Model& model, const numerics::OptimizerState& optimizer,
                     std::uint64_t epoch, const std::string& rng_state);

// Throws IoError when the file cannot be read and IntegrityError when it is
// truncated or malformed.
CheckpointData load_checkpoint(const std::filesystem::path& path);

}  // namespace ecglink::model
