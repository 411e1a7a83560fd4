#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "geoinpaint/grid.hpp"
#include "geoinpaint/inpaint.hpp"
#include "geoinpaint/nn.hpp"
#include "geoinpaint/wgan.hpp"

namespace geoinpaint::io {

namespace fs = std::filesystem;

/// Writes through a temporary sibling and renames it over `path`.
void write_atomic(const fs::path& path, const std::string& bytes);
std::string read_file(const fs::path& path);

/// Dataset container "GIFS", version 1, all integers and floats little-endian:
///
///   offset  size  field
///   0       4     magic "GIFS"
///   4       4     u32 version
///   8       4     u32 nx
///   12      4     u32 ny
///   16      4     u32 channels (4)
///   20      8     u64 sample count
///   28      4     u32 flags (bit 0: normalization statistics present)
///   32      32    f64 mean[4]
///   64      32    f64 std[4]
///   96      ...   f32 samples, channel-major within a sample, row-major
///                 (y outer) within a channel
///
/// Samples are stored in physical units. The grid extents are not part of
/// the container; they live in the sidecar manifest.
inline constexpr std::uint32_t kDatasetVersion = 1;
inline constexpr std::size_t kDatasetHeaderBytes = 96;

struct DatasetFile {
  int nx = 0;
  int ny = 0;
  std::uint64_t count = 0;
  std::optional<ChannelStats> stats;
  std::vector<float> payload;

  /// Samples widened to double on the given grid.
  FieldStack to_stack(const GridSpec& grid) const;
  bool operator==(const DatasetFile&) const = default;
};

/// Rounds every value to float. Statistics must be absent for an empty stack.
DatasetFile make_dataset(const FieldStack& data, const std::optional<ChannelStats>& stats);
std::string encode_dataset(const DatasetFile& file);
/// Throws Io on a bad magic, unknown version, or size mismatch.
DatasetFile decode_dataset(const std::string& bytes);
void write_dataset(const fs::path& path, const DatasetFile& file);
DatasetFile read_dataset(const fs::path& path);

struct NamedArray {
  std::string name;
  std::vector<double> values;
  bool operator==(const NamedArray&) const = default;
};

/// Complete training state. Container "GICK": magic, u32 version, u64 length
/// of a JSON header (configs, statistics, counters, engine state), the header,
/// u32 array count, then per array u32 name length, name bytes, u64 length and
/// f64 values.
struct Checkpoint {
  NetworkConfig network;
  TrainConfig train;
  ChannelStats stats;
  int iteration = 0;
  std::int64_t g_adam_steps = 0;
  std::int64_t d_adam_steps = 0;
  std::string rng_state;
  std::vector<NamedArray> arrays;

  const NamedArray* find(const std::string& name) const;
  bool operator==(const Checkpoint&) const = default;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

Checkpoint capture(Trainer& trainer);
/// Loads parameters, batch-norm statistics, optimizer moments, the iteration
/// counter and the engine state into a trainer built from the same configs.
void restore(const Checkpoint& ckpt, Trainer& trainer);
std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes);
void write_checkpoint(const fs::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const fs::path& path);

/// Plain-text measurement list: a "grid nx ny" line, then one "K i j value"
/// or "H i j value" line per observation. Values print with 17 digits.
std::string encode_measurements(const MeasurementSet& m);
MeasurementSet decode_measurements(const std::string& text, const GridSpec& grid);

/// 8-bit binary graymap of a field, min to black and max to white, top row
/// first (largest y).
std::string encode_pgm(const Field& f);

}  // namespace geoinpaint::io
