#pragma once

#include <filesystem>

#include "wxgen/data.hpp"
#include "wxgen/trainer.hpp"
#include "wxgen/vae.hpp"

namespace wxgen {

// A trained model plus everything needed to use it standalone: the exact
// configs it was trained with and the normalization constants of its training
// data (so synthesis can emit physical units without the dataset present).
struct Checkpoint {
    VaeParams params;
    ModelConfig model;
    TrainConfig train;
    NormStats norm;
};

// Format "WXVAE001": 8-byte magic, a length-prefixed UTF-8 block of
// "key=value" lines covering every config field and the norm stats, then one
// record per tensor (length-prefixed name, u32 rank, u32 dims, float32
// payload). All integers little-endian. Parameter values are kept on the
// float32 grid during training, so the round trip is bitwise.
void save_checkpoint(const Checkpoint& cp, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// FNV-1a digest of the serialized form; save_checkpoint is deterministic, so
// this equals the digest of a file it wrote. Used for provenance records.
std::string checkpoint_digest(const Checkpoint& cp);

}  // namespace wxgen
