#pragma once

#include "fmdiff/diffusion.hpp"
#include "fmdiff/nn.hpp"

#include <cstdint>
#include <filesystem>

namespace fmdiff {

/// Dataset file: u64 little-endian header length, a JSON header (field names,
/// per-field sizes, tuple count, seed), then the tuples' fields as raw
/// little-endian doubles in header order. Every field must have the same
/// size in all tuples.
void write_dataset(const std::filesystem::path& path, const Dataset& data, std::uint64_t seed);

struct LoadedDataset {
  Dataset data;
  std::uint64_t seed = 0;
};
LoadedDataset read_dataset(const std::filesystem::path& path);

/// Writes `<stem>.bin` (all parameters flattened, raw little-endian doubles)
/// and `<stem>.json` (name, shape and offset of each parameter).
void write_checkpoint(const std::filesystem::path& stem, const ParameterStore& params);
/// Loads a checkpoint into `params`; names and shapes must match.
void read_checkpoint(const std::filesystem::path& stem, ParameterStore& params);

} // namespace fmdiff
