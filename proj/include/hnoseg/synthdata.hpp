// Resolution-independent synthetic 3D scenes. All geometry lives in the unit
// cube in world coordinates, so the same scene can be rasterized at any
// resolution; ground-truth labels come from analytic inside-tests at voxel
// centers. Nested primitives carry deeper labels, giving the containment
// hierarchy label L c ... c label 1.

#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "hnoseg/rng.hpp"
#include "hnoseg/tensor.hpp"

namespace hnoseg::synth {

enum class PrimitiveType { kEllipsoid, kSmoothBlob };

struct Primitive {
  PrimitiveType type = PrimitiveType::kEllipsoid;
  std::array<double, 3> center{};  // in [0,1]^3
  std::array<double, 3> radii{};   // in [0.05, 0.35]
  double yaw = 0.0;                // axial orientation (about z)
  std::vector<double> intensity;   // per-channel response
  int label = 1;                   // 1..num_labels, deeper = larger
};

struct Scene {
  std::vector<Primitive> primitives;
};

struct SceneSpec {
  std::size_t min_objects = 1;  // outer (label-1) primitives per scene
  std::size_t max_objects = 2;
  std::size_t num_labels = 3;
  std::size_t channels = 4;
  double min_radius = 0.16;
  double max_radius = 0.3;
  // Edge smoothing in world units; 1.5 voxels at a 32^3 grid.
  double edge_sigma = 1.5 / 32.0;
};

struct Sample {
  Tensor image;   // [C, X, Y, Z]
  Tensor labels;  // [L, X, Y, Z] binary, nested: channel l+1 subset of l
  std::uint64_t scene_seed = 0;
  std::array<std::size_t, 3> resolution{};
};

// Normalized ellipsoid coordinate of world point p: |q| <= 1 means inside.
double ellipsoid_q2(const Primitive& prim, const std::array<double, 3>& p);

Scene sample_scene(Rng& rng, const SceneSpec& spec);

// Geometric containment check (surface sampling); used by tests and the
// generator's retry loop.
bool scene_containment_ok(const Scene& scene);

Sample rasterize(const Scene& scene, std::array<std::size_t, 3> resolution,
                 const SceneSpec& spec);

struct Dataset {
  std::vector<Scene> scenes;
  std::vector<Sample> train;
  std::vector<Sample> val;
};

// n scenes from the given seed, deterministic split (last 20% validation),
// all rasterized at `resolution`. The scenes are retained so they can be
// re-rasterized at other resolutions.
Dataset make_dataset(std::uint64_t seed, std::size_t n, const SceneSpec& spec,
                     std::array<std::size_t, 3> resolution);

}  // namespace hnoseg::synth
