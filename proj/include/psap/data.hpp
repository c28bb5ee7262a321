// SPDX-License-Identifier: Apache-2.0
//
// Image classification datasets: CIFAR-10 binary batches and a seeded
// synthetic generator that emits the same byte layout.
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "psap/random.hpp"
#include "psap/tensor.hpp"

namespace psap {

enum class Split { kTrain, kTest };

struct ChannelStats {
  std::vector<double> mean;  // per channel, on the [0,1] scale
  std::vector<double> std;
};

/// Images are kept as raw bytes (channel-planar, like the CIFAR-10 records)
/// and standardized per batch with `stats`.
struct Dataset {
  std::size_t channels = 3;
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t classes = 10;
  Split split = Split::kTrain;
  std::vector<std::uint8_t> pixels;
  std::vector<int> labels;
  ChannelStats stats;

  std::size_t size() const { return labels.size(); }
  std::size_t image_bytes() const { return channels * height * width; }
  std::span<const std::uint8_t> image(std::size_t i) const {
    return {pixels.data() + i * image_bytes(), image_bytes()};
  }
  /// Throws FormatError if labels or pixel counts are inconsistent.
  void validate() const;
};

struct Batch {
  Tensor images;  // [N,C,H,W], standardized
  std::vector<int> labels;
};

/// Mean and standard deviation per channel of pixels / 255.
ChannelStats compute_channel_stats(const Dataset& data);

struct AugmentOptions {
  bool enabled = false;
  std::size_t pad = 4;  // random crop from a zero-padded image
  bool flip = true;     // random horizontal flip
};

/// Assembles the listed records into a standardized batch. With augmentation,
/// record i of `epoch` draws its crop/flip from a stream derived from
/// (seed, epoch, i), so results do not depend on batch composition.
Batch make_batch(const Dataset& data, std::span<const std::size_t> indices,
                 const AugmentOptions& augment = {}, std::uint64_t seed = 0, std::uint64_t epoch = 0);

/// Seeded permutation of [0, n).
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::uint64_t epoch);

// --- CIFAR-10 -----------------------------------------------------------------

inline constexpr std::size_t kCifarRecordBytes = 3073;

/// Parses one binary batch file (records of 1 label byte + 3072 pixel bytes).
/// Throws IoError for missing files and FormatError for truncated records or
/// labels above 9.
Dataset read_cifar10_file(const std::filesystem::path& path, Split split);

/// Writes records in the same layout. Only 3x32x32 datasets are accepted.
void write_cifar10_file(const std::filesystem::path& path, const Dataset& data);

/// Loads data_batch_1..5.bin and test_batch.bin; both splits get the
/// training split's channel statistics.
std::pair<Dataset, Dataset> load_cifar10(const std::filesystem::path& directory);

// --- synthetic ----------------------------------------------------------------

struct SyntheticSpec {
  std::size_t classes = 10;
  std::size_t size = 1000;
  std::size_t channels = 3;
  std::size_t height = 8;
  std::size_t width = 8;
  std::uint64_t seed = 0;
  double separability = 1.0;  // amplitude of the class prototype
  double noise = 0.2;         // per-pixel Gaussian noise std
  std::size_t max_shift = 1;  // random translation of the prototype
};

/// Class-conditional blob images. Class prototypes depend only on the seed;
/// per-sample noise depends on (seed, split). Labels cycle through the
/// classes and are then shuffled. Stats are computed from this split.
Dataset synthetic_dataset(const SyntheticSpec& spec, Split split = Split::kTrain);

/// Train and test splits sharing prototypes; both standardized with the
/// training statistics.
std::pair<Dataset, Dataset> synthetic_pair(const SyntheticSpec& spec, std::size_t test_size);

}  // namespace psap
