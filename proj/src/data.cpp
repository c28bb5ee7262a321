// SPDX-License-Identifier: Apache-2.0
#include "psap/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "psap/errors.hpp"

namespace psap {

void Dataset::validate() const {
  if (pixels.size() != labels.size() * image_bytes()) {
    throw FormatError("dataset has " + std::to_string(pixels.size()) + " pixel bytes for " +
                      std::to_string(labels.size()) + " labels");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes) {
      throw FormatError("label " + std::to_string(labels[i]) + " of record " + std::to_string(i) +
                        " outside [0, " + std::to_string(classes) + ")");
    }
  }
}

ChannelStats compute_channel_stats(const Dataset& data) {
  ChannelStats s;
  s.mean.assign(data.channels, 0.0);
  s.std.assign(data.channels, 1.0);
  const std::size_t plane = data.height * data.width;
  const double count = static_cast<double>(data.size() * plane);
  if (count == 0) return s;
  for (std::size_t c = 0; c < data.channels; ++c) {
    double sum = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto img = data.image(i);
      for (std::size_t p = 0; p < plane; ++p) sum += img[c * plane + p] / 255.0;
    }
    const double mean = sum / count;
    double sq = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto img = data.image(i);
      for (std::size_t p = 0; p < plane; ++p) {
        const double d = img[c * plane + p] / 255.0 - mean;
        sq += d * d;
      }
    }
    const double sd = std::sqrt(sq / count);
    s.mean[c] = mean;
    s.std[c] = sd > 0.0 ? sd : 1.0;
  }
  return s;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::uint64_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = make_rng(seed, Stream::kShuffle, {epoch});
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

Batch make_batch(const Dataset& data, std::span<const std::size_t> indices,
                 const AugmentOptions& augment, std::uint64_t seed, std::uint64_t epoch) {
  const std::size_t C = data.channels, H = data.height, W = data.width;
  const std::size_t plane = H * W;
  if (data.stats.mean.size() != C) throw ContractError("dataset statistics not computed");
  Batch b;
  b.images = Tensor({indices.size(), C, H, W});
  b.labels.reserve(indices.size());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const std::size_t idx = indices[r];
    const auto img = data.image(idx);
    b.labels.push_back(data.labels[idx]);
    std::ptrdiff_t dy = 0, dx = 0;
    bool flip = false;
    if (augment.enabled) {
      Rng rng = make_rng(seed, Stream::kAugment, {epoch, idx});
      const auto pad = static_cast<std::ptrdiff_t>(augment.pad);
      std::uniform_int_distribution<std::ptrdiff_t> shift(-pad, pad);
      dy = shift(rng);
      dx = shift(rng);
      flip = augment.flip && std::bernoulli_distribution(0.5)(rng);
    }
    double* out = b.images.data().data() + r * C * plane;
    for (std::size_t c = 0; c < C; ++c) {
      const double mean = data.stats.mean[c], sd = data.stats.std[c];
      for (std::size_t y = 0; y < H; ++y) {
        for (std::size_t x = 0; x < W; ++x) {
          const auto sy = static_cast<std::ptrdiff_t>(y) + dy;
          auto sx = static_cast<std::ptrdiff_t>(flip ? W - 1 - x : x) + dx;
          double v = 0.0;  // zero padding on the [0,1] scale
          if (sy >= 0 && sx >= 0 && sy < static_cast<std::ptrdiff_t>(H) &&
              sx < static_cast<std::ptrdiff_t>(W)) {
            v = img[c * plane + static_cast<std::size_t>(sy) * W + static_cast<std::size_t>(sx)] /
                255.0;
          }
          out[c * plane + y * W + x] = (v - mean) / sd;
        }
      }
    }
  }
  return b;
}

Dataset read_cifar10_file(const std::filesystem::path& path, Split split) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open CIFAR-10 batch file " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (bytes.size() % kCifarRecordBytes != 0) {
    const std::size_t record = bytes.size() / kCifarRecordBytes;
    throw FormatError("truncated CIFAR-10 file " + path.string() + ": record " +
                      std::to_string(record) + " at byte offset " +
                      std::to_string(record * kCifarRecordBytes) + " has only " +
                      std::to_string(bytes.size() % kCifarRecordBytes) + " of " +
                      std::to_string(kCifarRecordBytes) + " bytes");
  }
  Dataset d;
  d.split = split;
  const std::size_t n = bytes.size() / kCifarRecordBytes;
  d.labels.resize(n);
  d.pixels.resize(n * (kCifarRecordBytes - 1));
  for (std::size_t r = 0; r < n; ++r) {
    const std::uint8_t* rec = bytes.data() + r * kCifarRecordBytes;
    if (rec[0] > 9) {
      throw FormatError("CIFAR-10 file " + path.string() + ": record " + std::to_string(r) +
                        " at byte offset " + std::to_string(r * kCifarRecordBytes) +
                        " has label " + std::to_string(rec[0]));
    }
    d.labels[r] = rec[0];
    std::copy(rec + 1, rec + kCifarRecordBytes, d.pixels.begin() + static_cast<std::ptrdiff_t>(r * 3072));
  }
  return d;
}

void write_cifar10_file(const std::filesystem::path& path, const Dataset& data) {
  if (data.channels != 3 || data.height != 32 || data.width != 32) {
    throw ConfigError("CIFAR-10 records hold 3x32x32 images only");
  }
  data.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.labels[i] > 255) throw FormatError("label does not fit in one byte");
    const auto label = static_cast<char>(data.labels[i]);
    out.write(&label, 1);
    const auto img = data.image(i);
    out.write(reinterpret_cast<const char*>(img.data()), static_cast<std::streamsize>(img.size()));
  }
  if (!out) throw IoError("write failed for " + path.string());
}

std::pair<Dataset, Dataset> load_cifar10(const std::filesystem::path& directory) {
  Dataset train;
  train.split = Split::kTrain;
  for (int i = 1; i <= 5; ++i) {
    auto part = read_cifar10_file(directory / ("data_batch_" + std::to_string(i) + ".bin"),
                                  Split::kTrain);
    train.labels.insert(train.labels.end(), part.labels.begin(), part.labels.end());
    train.pixels.insert(train.pixels.end(), part.pixels.begin(), part.pixels.end());
  }
  Dataset test = read_cifar10_file(directory / "test_batch.bin", Split::kTest);
  train.stats = compute_channel_stats(train);
  test.stats = train.stats;
  return {std::move(train), std::move(test)};
}

namespace {

// prototype[c][ch][y][x] in [-1, 1].
std::vector<double> class_prototypes(const SyntheticSpec& spec) {
  const std::size_t H = spec.height, W = spec.width, C = spec.channels;
  std::vector<double> protos(spec.classes * C * H * W, 0.0);
  Rng rng = make_rng(spec.seed, Stream::kSynthetic, {0});
  std::uniform_real_distribution<double> amp(-1.0, 1.0);
  std::uniform_real_distribution<double> cy(0.0, static_cast<double>(H - 1));
  std::uniform_real_distribution<double> cx(0.0, static_cast<double>(W - 1));
  std::uniform_real_distribution<double> width(0.15, 0.35);
  for (std::size_t k = 0; k < spec.classes; ++k) {
    for (std::size_t ch = 0; ch < C; ++ch) {
      double* p = protos.data() + (k * C + ch) * H * W;
      for (int blob = 0; blob < 3; ++blob) {
        const double a = amp(rng), y0 = cy(rng), x0 = cx(rng);
        const double s = width(rng) * static_cast<double>(std::max(H, W));
        for (std::size_t y = 0; y < H; ++y)
          for (std::size_t x = 0; x < W; ++x) {
            const double d2 = (y - y0) * (y - y0) + (x - x0) * (x - x0);
            p[y * W + x] += a * std::exp(-d2 / (2.0 * s * s));
          }
      }
      double mx = 1e-12;
      for (std::size_t i = 0; i < H * W; ++i) mx = std::max(mx, std::abs(p[i]));
      for (std::size_t i = 0; i < H * W; ++i) p[i] /= mx;
    }
  }
  return protos;
}

}  // namespace

Dataset synthetic_dataset(const SyntheticSpec& spec, Split split) {
  if (spec.classes == 0 || spec.size < spec.classes) {
    throw ConfigError("synthetic dataset needs size >= classes > 0");
  }
  const std::size_t H = spec.height, W = spec.width, C = spec.channels;
  const auto protos = class_prototypes(spec);
  Dataset d;
  d.channels = C;
  d.height = H;
  d.width = W;
  d.classes = spec.classes;
  d.split = split;
  d.labels.resize(spec.size);
  for (std::size_t i = 0; i < spec.size; ++i) d.labels[i] = static_cast<int>(i % spec.classes);
  Rng rng = make_rng(spec.seed, Stream::kSynthetic, {split == Split::kTrain ? 1u : 2u});
  std::shuffle(d.labels.begin(), d.labels.end(), rng);

  std::normal_distribution<double> noise(0.0, 1.0);
  const auto shift_max = static_cast<std::ptrdiff_t>(spec.max_shift);
  std::uniform_int_distribution<std::ptrdiff_t> shift(-shift_max, shift_max);
  d.pixels.resize(spec.size * C * H * W);
  for (std::size_t i = 0; i < spec.size; ++i) {
    const auto k = static_cast<std::size_t>(d.labels[i]);
    const std::ptrdiff_t dy = shift(rng), dx = shift(rng);
    std::uint8_t* out = d.pixels.data() + i * C * H * W;
    for (std::size_t ch = 0; ch < C; ++ch) {
      const double* p = protos.data() + (k * C + ch) * H * W;
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) {
          const auto sy = std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(y) + dy, 0,
                                                     static_cast<std::ptrdiff_t>(H) - 1);
          const auto sx = std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(x) + dx, 0,
                                                     static_cast<std::ptrdiff_t>(W) - 1);
          const double signal = p[static_cast<std::size_t>(sy) * W + static_cast<std::size_t>(sx)];
          const double v = 0.5 + 0.5 * spec.separability * signal + spec.noise * noise(rng);
          out[(ch * H + y) * W + x] =
              static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
        }
    }
  }
  d.stats = compute_channel_stats(d);
  return d;
}

std::pair<Dataset, Dataset> synthetic_pair(const SyntheticSpec& spec, std::size_t test_size) {
  Dataset train = synthetic_dataset(spec, Split::kTrain);
  SyntheticSpec test_spec = spec;
  test_spec.size = test_size;
  Dataset test = synthetic_dataset(test_spec, Split::kTest);
  test.stats = train.stats;
  return {std::move(train), std::move(test)};
}

}  // namespace psap
