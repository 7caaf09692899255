#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>

#include "hnoseg/objective.hpp"
#include "hnoseg/synthdata.hpp"

using namespace hnoseg;

TEST_CASE("dataset generation is deterministic in the seed") {
  synth::SceneSpec spec;
  auto a = synth::make_dataset(123, 4, spec, {16, 16, 16});
  auto b = synth::make_dataset(123, 4, spec, {16, 16, 16});
  auto c = synth::make_dataset(124, 4, spec, {16, 16, 16});
  REQUIRE(a.train.size() == b.train.size());
  for (std::size_t i = 0; i < a.train.size(); ++i) {
    CHECK(a.train[i].image == b.train[i].image);
    CHECK(a.train[i].labels == b.train[i].labels);
  }
  bool differs = false;
  for (std::size_t i = 0; i < a.train.size(); ++i) {
    differs = differs || !(a.train[i].image == c.train[i].image);
  }
  CHECK(differs);
}

TEST_CASE("split arithmetic: last fifth (at least one) is validation") {
  synth::SceneSpec spec;
  auto big = synth::make_dataset(5, 40, spec, {8, 8, 8});
  CHECK(big.train.size() == 32);
  CHECK(big.val.size() == 8);
  auto small = synth::make_dataset(5, 6, spec, {8, 8, 8});
  CHECK(small.train.size() == 5);
  CHECK(small.val.size() == 1);
  CHECK(small.scenes.size() == 6);
  CHECK_THROWS_AS(synth::make_dataset(5, 1, spec, {8, 8, 8}),
                  std::invalid_argument);
}

TEST_CASE("sampled scenes pass the containment oracle and nesting law") {
  synth::SceneSpec spec;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    synth::Scene scene = synth::sample_scene(rng, spec);
    CHECK(synth::scene_containment_ok(scene));

    synth::Sample s = synth::rasterize(scene, {32, 32, 32}, spec);
    const std::size_t vol = 32 * 32 * 32;
    for (std::size_t i = 0; i < s.labels.size(); ++i) {
      CHECK((s.labels[i] == 0.0 || s.labels[i] == 1.0));
    }
    // Channel l+1 voxels are a subset of channel l.
    for (std::size_t l = 1; l < spec.num_labels; ++l) {
      for (std::size_t v = 0; v < vol; ++v) {
        if (s.labels[l * vol + v] == 1.0) {
          CHECK(s.labels[(l - 1) * vol + v] == 1.0);
        }
      }
    }
  }
}

TEST_CASE("every label id appears in at least 80% of scenes") {
  synth::SceneSpec spec;
  const std::size_t n = 20;
  std::array<std::size_t, 3> present{};
  for (std::uint64_t seed = 100; seed < 100 + n; ++seed) {
    Rng rng(seed);
    synth::Sample s = synth::rasterize(synth::sample_scene(rng, spec),
                                       {16, 16, 16}, spec);
    const std::size_t vol = 16 * 16 * 16;
    for (std::size_t l = 0; l < 3; ++l) {
      for (std::size_t v = 0; v < vol; ++v) {
        if (s.labels[l * vol + v] == 1.0) {
          present[l] += 1;
          break;
        }
      }
    }
  }
  for (std::size_t l = 0; l < 3; ++l) {
    CHECK(present[l] >= n * 8 / 10);
  }
}

TEST_CASE("ellipsoid label volume matches the analytic volume within 10%") {
  synth::SceneSpec spec;
  spec.num_labels = 1;
  synth::Scene scene;
  synth::Primitive prim;
  prim.type = synth::PrimitiveType::kEllipsoid;
  prim.center = {0.5, 0.5, 0.5};
  prim.radii = {0.3, 0.22, 0.25};
  prim.yaw = 0.7;
  prim.label = 1;
  prim.intensity.assign(spec.channels, 1.0);
  scene.primitives.push_back(prim);

  synth::Sample s = synth::rasterize(scene, {32, 32, 32}, spec);
  std::size_t count = 0;
  const std::size_t vol = 32 * 32 * 32;
  for (std::size_t v = 0; v < vol; ++v) count += s.labels[v] == 1.0;
  const double measured = static_cast<double>(count) / vol;
  const double analytic =
      4.0 / 3.0 * std::numbers::pi * 0.3 * 0.22 * 0.25;
  CHECK(measured == doctest::Approx(analytic).epsilon(0.10));
}

TEST_CASE("rasterization is resolution-consistent") {
  // Rasterize the same scene at 32 and 64; block-averaging the fine grid
  // must reproduce the coarse image closely (smooth world-space profiles).
  synth::SceneSpec spec;
  Rng rng(42);
  synth::Scene scene = synth::sample_scene(rng, spec);
  synth::Sample coarse = synth::rasterize(scene, {32, 32, 32}, spec);
  synth::Sample fine = synth::rasterize(scene, {64, 64, 64}, spec);

  Tensor avg(coarse.image.shape());
  const std::size_t cv = 32 * 32 * 32, fv = 64 * 64 * 64;
  for (std::size_t c = 0; c < spec.channels; ++c) {
    for (std::size_t i = 0; i < 32; ++i) {
      for (std::size_t j = 0; j < 32; ++j) {
        for (std::size_t k = 0; k < 32; ++k) {
          double acc = 0.0;
          for (int a = 0; a < 2; ++a) {
            for (int b = 0; b < 2; ++b) {
              for (int d = 0; d < 2; ++d) {
                acc += fine.image[c * fv +
                                  ((2 * i + a) * 64 + 2 * j + b) * 64 +
                                  2 * k + d];
              }
            }
          }
          avg[c * cv + (i * 32 + j) * 32 + k] = acc / 8.0;
        }
      }
    }
  }
  CHECK(objective::mse(avg, coarse.image) < 1e-3);
}

TEST_CASE("rasterize rejects odd grids; sample_scene rejects empty ranges") {
  synth::SceneSpec spec;
  Rng rng(1);
  synth::Scene scene = synth::sample_scene(rng, spec);
  CHECK_THROWS_AS(synth::rasterize(scene, {15, 16, 16}, spec),
                  std::invalid_argument);
  synth::SceneSpec bad;
  bad.min_objects = 3;
  bad.max_objects = 1;
  CHECK_THROWS_AS(synth::sample_scene(rng, bad), std::invalid_argument);
}
