// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "helpers.hpp"
#include "psap/errors.hpp"
#include "psap/step.hpp"

using namespace psap;

namespace {

std::vector<std::uint8_t> fixture_bytes() {
  std::vector<std::uint8_t> b;
  b.push_back(3);
  for (std::size_t i = 0; i < 3072; ++i) b.push_back(static_cast<std::uint8_t>(i % 256));
  b.push_back(9);
  for (std::size_t i = 0; i < 3072; ++i) b.push_back(static_cast<std::uint8_t>(255 - i % 256));
  return b;
}

void write_bytes(const std::filesystem::path& p, const std::vector<std::uint8_t>& b) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("resnet_tiny(3) on 32x32 has the ResNet-20 layer count") {
  ModelSpec s;
  s.architecture = Architecture::kResnetTiny;
  s.blocks = 3;
  Model m = build_model(s);
  const auto maskable = m.maskable_units().size();
  CHECK(maskable == 19);  // stem + 3 stages x 3 blocks x 2 convs
  CHECK(maskable + 1 == 20);  // plus the linear head
  CHECK(m.units().size() - maskable == 2);  // 1x1 projections, not maskable
  const Tensor y = m.forward(Tensor({2, 3, 32, 32}), false);
  CHECK(y.shape() == Shape{2, 10});
}

TEST_CASE("build_model: same seed gives identical weights, another seed does not") {
  for (auto arch : {Architecture::kCnnSmall, Architecture::kResnetTiny, Architecture::kMlpProbe}) {
    ModelSpec s = test::small_resnet(4);
    s.architecture = arch;
    Model a = build_model(s);
    Model b = build_model(s);
    CHECK(test::same_state(a, b));
    s.seed = 5;
    Model c = build_model(s);
    CHECK(!test::same_state(a, c));
  }
}

TEST_CASE("build_model: conv weights follow the fan-in scaled normal") {
  ModelSpec s;
  s.architecture = Architecture::kCnnSmall;
  s.base_width = 64;
  Model m = build_model(s);
  const auto& w = m.find_unit("conv3")->conv().weights.value;
  double sum = 0.0, sq = 0.0;
  for (double v : w.values()) {
    sum += v;
    sq += v * v;
  }
  const double n = static_cast<double>(w.size());
  const double sd = std::sqrt(sq / n - (sum / n) * (sum / n));
  CHECK(kaiming_std(128 * 9) == doctest::Approx(std::sqrt(2.0 / (128 * 9))));
  CHECK(sd == doctest::Approx(kaiming_std(128 * 9)).epsilon(0.02));
}

TEST_CASE("build_model: degenerate specs are config errors") {
  ModelSpec s = test::small_cnn(1);
  s.classes = 0;
  CHECK_THROWS_AS(build_model(s), ConfigError);
  s = test::small_resnet(1);
  s.blocks = 0;
  CHECK_THROWS_AS(build_model(s), ConfigError);
  s = test::small_cnn(1);
  s.height = 0;
  CHECK_THROWS_AS(build_model(s), ConfigError);
}

TEST_CASE("cnn_small on a zero image returns the head bias") {
  Model m = build_model(test::small_cnn(6, 5));
  auto body_units = m.parameters();
  Parameter* bias = body_units.back();
  REQUIRE(bias->value.size() == 5);
  bias->value.values() = {0.5, -1.0, 2.0, 0.0, 3.25};
  const Tensor y = m.forward(Tensor({3, 3, 8, 8}), false);
  for (std::size_t n = 0; n < 3; ++n)
    for (std::size_t c = 0; c < 5; ++c) CHECK(y[n * 5 + c] == bias->value[c]);
}

TEST_CASE("unit registry order equals execution order") {
  for (auto spec : {test::small_cnn(7), test::small_resnet(7)}) {
    spec.blocks = 2;
    Model m = build_model(spec);
    std::vector<std::string> trace;
    m.set_trace(&trace);
    m.forward(Tensor({1, 3, 8, 8}), true);
    m.set_trace(nullptr);
    CHECK(trace == m.unit_names(false));
  }
}

TEST_CASE("cifar10: hand-built two-record file parses exactly") {
  const auto dir = test::scratch_dir("cifar-fixture");
  write_bytes(dir / "b.bin", fixture_bytes());
  const Dataset d = read_cifar10_file(dir / "b.bin", Split::kTest);
  REQUIRE(d.size() == 2);
  CHECK(d.labels == std::vector<int>{3, 9});
  CHECK(d.split == Split::kTest);
  for (std::size_t i = 0; i < 3072; ++i) {
    CHECK(d.image(0)[i] == i % 256);
    CHECK(d.image(1)[i] == 255 - i % 256);
  }
}

TEST_CASE("cifar10: 3072-byte file is truncated at record 0") {
  const auto dir = test::scratch_dir("cifar-trunc");
  auto b = fixture_bytes();
  b.resize(3072);
  write_bytes(dir / "t.bin", b);
  try {
    read_cifar10_file(dir / "t.bin", Split::kTrain);
    FAIL("expected a format error");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("record 0") != std::string::npos);
    CHECK(std::string(e.what()).find("t.bin") != std::string::npos);
  }
}

TEST_CASE("cifar10: label above 9 and missing file") {
  const auto dir = test::scratch_dir("cifar-bad");
  auto b = fixture_bytes();
  b[3073] = 10;
  write_bytes(dir / "l.bin", b);
  try {
    read_cifar10_file(dir / "l.bin", Split::kTrain);
    FAIL("expected a format error");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("record 1") != std::string::npos);
  }
  CHECK_THROWS_AS(read_cifar10_file(dir / "missing.bin", Split::kTrain), IoError);
}

TEST_CASE("cifar10: write after read reproduces the source bytes") {
  const auto dir = test::scratch_dir("cifar-roundtrip");
  std::vector<std::uint8_t> b;
  std::mt19937_64 rng(8);
  for (int r = 0; r < 5; ++r) {
    b.push_back(static_cast<std::uint8_t>(rng() % 10));
    for (int i = 0; i < 3072; ++i) b.push_back(static_cast<std::uint8_t>(rng()));
  }
  write_bytes(dir / "src.bin", b);
  write_cifar10_file(dir / "out.bin", read_cifar10_file(dir / "src.bin", Split::kTrain));
  CHECK(read_bytes(dir / "out.bin") == b);
}

TEST_CASE("cifar10: directory loader uses training statistics for both splits") {
  const auto dir = test::scratch_dir("cifar-dir");
  for (int i = 1; i <= 5; ++i) write_bytes(dir / ("data_batch_" + std::to_string(i) + ".bin"), fixture_bytes());
  auto t = fixture_bytes();
  t.resize(3073);
  write_bytes(dir / "test_batch.bin", t);
  const auto [train, test] = load_cifar10(dir);
  CHECK(train.size() == 10);
  CHECK(test.size() == 1);
  CHECK(test.split == Split::kTest);
  // Each channel holds i % 256 and 255 - i % 256 equally often: mean 0.5 exactly.
  for (double m : train.stats.mean) CHECK(m == doctest::Approx(0.5));
  CHECK(test.stats.mean == train.stats.mean);
  CHECK(test.stats.std == train.stats.std);
  CHECK_THROWS_AS(load_cifar10(dir / "nowhere"), IoError);
}

TEST_CASE("make_batch standardizes with the dataset statistics") {
  const Dataset d = synthetic_dataset(test::small_synthetic(9, 12));
  const std::vector<std::size_t> idx{4, 7};
  const Batch b = make_batch(d, idx);
  CHECK(b.images.shape() == Shape{2, 3, 8, 8});
  CHECK(b.labels == std::vector<int>{d.labels[4], d.labels[7]});
  const std::size_t c = 2, p = 17;
  const double raw = d.image(7)[c * 64 + p] / 255.0;
  CHECK(b.images[(1 * 3 + c) * 64 + p] ==
        doctest::Approx((raw - d.stats.mean[c]) / d.stats.std[c]).epsilon(1e-12));
}

TEST_CASE("synthetic: size = classes gives one sample per class") {
  auto s = test::small_synthetic(10);
  s.classes = 7;
  s.size = 7;
  const Dataset d = synthetic_dataset(s);
  std::vector<int> sorted = d.labels;
  std::sort(sorted.begin(), sorted.end());
  CHECK(sorted == std::vector<int>{0, 1, 2, 3, 4, 5, 6});
  s.size = 6;
  CHECK_THROWS_AS(synthetic_dataset(s), ConfigError);
}

TEST_CASE("synthetic: same seed gives identical bytes") {
  const auto s = test::small_synthetic(11, 50);
  const Dataset a = synthetic_dataset(s);
  const Dataset b = synthetic_dataset(s);
  CHECK(a.pixels == b.pixels);
  CHECK(a.labels == b.labels);
  auto other = s;
  other.seed = 12;
  CHECK(synthetic_dataset(other).pixels != a.pixels);
  CHECK(synthetic_dataset(s, Split::kTest).pixels != a.pixels);
  a.validate();
}

TEST_CASE("synthetic: high separability is linearly learnable within 5 epochs") {
  SyntheticSpec s;
  s.classes = 10;
  s.size = 500;
  s.seed = 13;
  s.separability = 2.0;
  const Dataset d = synthetic_dataset(s);
  ModelSpec ms;
  ms.architecture = Architecture::kMlpProbe;
  ms.height = 8;
  ms.width = 8;
  ms.seed = 13;
  Model m = build_model(ms);
  TrainSchedule sched = test::short_schedule(13, 0, 5);
  sched.batch_size = 25;
  SGDState opt;
  opt.learning_rate = sched.lr_initial;
  train_epochs(m, opt, sched, d, 0, 5, false);
  CHECK(evaluate(m, d, 100).accuracy >= 0.95);
}

TEST_CASE("augmentation: per-record reproducible and label preserving") {
  const Dataset d = synthetic_dataset(test::small_synthetic(14, 20));
  AugmentOptions aug;
  aug.enabled = true;
  aug.pad = 2;
  const std::vector<std::size_t> pair{3, 5};
  const std::vector<std::size_t> single{5};
  const Batch a = make_batch(d, pair, aug, 1, 2);
  const Batch b = make_batch(d, pair, aug, 1, 2);
  const Batch c = make_batch(d, single, aug, 1, 2);
  CHECK(a.images == b.images);
  CHECK(a.labels == std::vector<int>{d.labels[3], d.labels[5]});
  const std::size_t len = 3 * 64;
  CHECK(std::equal(a.images.values().begin() + len, a.images.values().end(),
                   c.images.values().begin()));
  bool differs = false;
  for (std::uint64_t epoch = 0; epoch < 8 && !differs; ++epoch)
    differs = !(make_batch(d, pair, aug, 1, epoch).images == a.images);
  CHECK(differs);
  const Batch plain = make_batch(d, pair);
  bool changed = false;
  for (std::uint64_t epoch = 0; epoch < 8 && !changed; ++epoch)
    changed = !(make_batch(d, pair, aug, 1, epoch).images == plain.images);
  CHECK(changed);
}

TEST_CASE("epoch order is a seeded permutation") {
  const auto a = epoch_order(50, 3, 1);
  auto sorted = a;
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::size_t> iota(50);
  std::iota(iota.begin(), iota.end(), std::size_t{0});
  CHECK(sorted == iota);
  CHECK(epoch_order(50, 3, 1) == a);
  CHECK(epoch_order(50, 3, 2) != a);
  CHECK(epoch_order(50, 4, 1) != a);
}
