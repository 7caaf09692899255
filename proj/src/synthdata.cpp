#include "hnoseg/synthdata.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace hnoseg::synth {

namespace {

std::array<double, 3> rotate_z(double angle, const std::array<double, 3>& v) {
  const double c = std::cos(angle), s = std::sin(angle);
  return {c * v[0] - s * v[1], s * v[0] + c * v[1], v[2]};
}

// Roughly uniform directions on the sphere.
std::array<double, 3> random_direction(Rng& rng) {
  while (true) {
    std::array<double, 3> v = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0),
                               rng.uniform(-1.0, 1.0)};
    const double n2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
    if (n2 > 1e-6 && n2 <= 1.0) {
      const double inv = 1.0 / std::sqrt(n2);
      return {v[0] * inv, v[1] * inv, v[2] * inv};
    }
  }
}

Primitive make_child(Rng& rng, const Primitive& parent, std::size_t channels) {
  Primitive child;
  child.type = rng.uniform() < 0.5 ? PrimitiveType::kEllipsoid
                                   : PrimitiveType::kSmoothBlob;
  child.yaw = parent.yaw;
  child.label = parent.label + 1;
  const double f = rng.uniform(0.55, 0.75);
  for (int a = 0; a < 3; ++a) child.radii[a] = f * parent.radii[a];
  // Offset bounded so the child ellipsoid stays strictly inside the parent:
  // |q_parent(child surface)| <= s + f < 1.
  const double s = rng.uniform(0.0, (1.0 - f) * 0.8);
  const auto dir = random_direction(rng);
  std::array<double, 3> local = {s * dir[0] * parent.radii[0],
                                 s * dir[1] * parent.radii[1],
                                 s * dir[2] * parent.radii[2]};
  const auto world = rotate_z(parent.yaw, local);
  for (int a = 0; a < 3; ++a) child.center[a] = parent.center[a] + world[a];
  child.intensity.resize(channels);
  for (auto& v : child.intensity) v = rng.uniform(0.4, 1.4);
  return child;
}

}  // namespace

double ellipsoid_q2(const Primitive& prim, const std::array<double, 3>& p) {
  std::array<double, 3> d = {p[0] - prim.center[0], p[1] - prim.center[1],
                             p[2] - prim.center[2]};
  const auto local = rotate_z(-prim.yaw, d);
  double q2 = 0.0;
  for (int a = 0; a < 3; ++a) {
    const double q = local[a] / prim.radii[a];
    q2 += q * q;
  }
  return q2;
}

Scene sample_scene(Rng& rng, const SceneSpec& spec) {
  if (spec.max_objects < spec.min_objects) {
    throw std::invalid_argument("sample_scene: empty object-count range");
  }
  for (int attempt = 0; attempt < 10; ++attempt) {
    Scene scene;
    const std::size_t n_outer =
        spec.min_objects +
        (spec.max_objects > spec.min_objects
             ? rng.uniform_index(spec.max_objects - spec.min_objects + 1)
             : 0);
    for (std::size_t i = 0; i < n_outer; ++i) {
      Primitive prim;
      prim.type = rng.uniform() < 0.5 ? PrimitiveType::kEllipsoid
                                      : PrimitiveType::kSmoothBlob;
      prim.label = 1;
      prim.yaw = rng.uniform(0.0, 2.0 * std::numbers::pi);
      for (int a = 0; a < 3; ++a) {
        prim.radii[a] = rng.uniform(spec.min_radius, spec.max_radius);
      }
      const double rmax =
          std::max({prim.radii[0], prim.radii[1], prim.radii[2]});
      for (int a = 0; a < 3; ++a) {
        prim.center[a] = rng.uniform(rmax + 0.02, 1.0 - rmax - 0.02);
      }
      prim.intensity.resize(spec.channels);
      for (auto& v : prim.intensity) v = rng.uniform(0.4, 1.4);
      scene.primitives.push_back(prim);

      // The first object always carries the full nesting chain so every
      // label id shows up in (nearly) every scene; extra objects nest with
      // probability 1/2 per level.
      const Primitive* parent = &scene.primitives.back();
      for (std::size_t l = 2; l <= spec.num_labels; ++l) {
        if (i != 0 && rng.uniform() >= 0.5) break;
        Primitive child = make_child(rng, *parent, spec.channels);
        scene.primitives.push_back(child);
        parent = &scene.primitives.back();
      }
    }
    if (scene_containment_ok(scene)) return scene;
  }
  throw std::runtime_error("sample_scene: containment unsatisfiable");
}

bool scene_containment_ok(const Scene& scene) {
  constexpr int kDirs = 26;
  for (const Primitive& prim : scene.primitives) {
    if (prim.label <= 1) continue;
    for (int di = 0; di < kDirs; ++di) {
      // Deterministic direction set: low-discrepancy spherical sweep.
      const double u = -1.0 + 2.0 * (di + 0.5) / kDirs;
      const double phi = 2.39996322972865332 * di;  // golden angle
      const double r = std::sqrt(std::max(0.0, 1.0 - u * u));
      const std::array<double, 3> v = {r * std::cos(phi), r * std::sin(phi),
                                       u};
      std::array<double, 3> local = {v[0] * prim.radii[0],
                                     v[1] * prim.radii[1],
                                     v[2] * prim.radii[2]};
      const auto world = rotate_z(prim.yaw, local);
      const std::array<double, 3> p = {prim.center[0] + world[0],
                                       prim.center[1] + world[1],
                                       prim.center[2] + world[2]};
      bool inside_parent = false;
      for (const Primitive& other : scene.primitives) {
        if (other.label == prim.label - 1 && ellipsoid_q2(other, p) <= 1.0) {
          inside_parent = true;
          break;
        }
      }
      if (!inside_parent) return false;
    }
  }
  return true;
}

Sample rasterize(const Scene& scene, std::array<std::size_t, 3> resolution,
                 const SceneSpec& spec) {
  for (std::size_t d : resolution) {
    if (d == 0 || d % 2 != 0) {
      throw std::invalid_argument("rasterize: dims must be even, got " +
                                  std::to_string(d));
    }
  }
  const std::size_t nx = resolution[0], ny = resolution[1], nz = resolution[2];
  const std::size_t vol = nx * ny * nz;
  Sample out;
  out.resolution = resolution;
  out.image = Tensor({spec.channels, nx, ny, nz});
  out.labels = Tensor({spec.num_labels, nx, ny, nz});

  for (std::size_t i = 0; i < nx; ++i) {
    for (std::size_t j = 0; j < ny; ++j) {
      for (std::size_t k = 0; k < nz; ++k) {
        const std::array<double, 3> p = {
            (static_cast<double>(i) + 0.5) / static_cast<double>(nx),
            (static_cast<double>(j) + 0.5) / static_cast<double>(ny),
            (static_cast<double>(k) + 0.5) / static_cast<double>(nz)};
        const std::size_t v = (i * ny + j) * nz + k;
        int deepest = 0;
        for (const Primitive& prim : scene.primitives) {
          const double q2 = ellipsoid_q2(prim, p);
          const double q = std::sqrt(q2);
          double profile;
          if (prim.type == PrimitiveType::kSmoothBlob) {
            // Gaussian falloff with half-maximum on the label boundary q=1.
            profile = std::exp(-std::numbers::ln2 * q2);
          } else {
            // Smoothed edge: logistic in (approximate) signed distance.
            const double rmin =
                std::min({prim.radii[0], prim.radii[1], prim.radii[2]});
            const double dist = (q - 1.0) * rmin;
            profile = 1.0 / (1.0 + std::exp(dist / spec.edge_sigma));
          }
          for (std::size_t c = 0; c < spec.channels; ++c) {
            out.image[c * vol + v] += prim.intensity[c] * profile;
          }
          if (q2 <= 1.0 && prim.label > deepest) deepest = prim.label;
        }
        for (int l = 0; l < deepest && l < static_cast<int>(spec.num_labels);
             ++l) {
          out.labels[static_cast<std::size_t>(l) * vol + v] = 1.0;
        }
      }
    }
  }
  return out;
}

Dataset make_dataset(std::uint64_t seed, std::size_t n, const SceneSpec& spec,
                     std::array<std::size_t, 3> resolution) {
  if (n < 2) throw std::invalid_argument("make_dataset: need n >= 2");
  Dataset ds;
  Rng meta(seed, "data");
  std::vector<std::uint64_t> scene_seeds(n);
  for (auto& s : scene_seeds) s = meta.next_u64();
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(scene_seeds[i]);
    try {
      ds.scenes.push_back(sample_scene(rng, spec));
    } catch (const std::runtime_error& e) {
      throw std::runtime_error(std::string(e.what()) + " (scene seed " +
                               std::to_string(scene_seeds[i]) + ")");
    }
  }
  const std::size_t n_val = std::max<std::size_t>(1, n / 5);
  for (std::size_t i = 0; i < n; ++i) {
    Sample s = rasterize(ds.scenes[i], resolution, spec);
    s.scene_seed = scene_seeds[i];
    if (i < n - n_val) {
      ds.train.push_back(std::move(s));
    } else {
      ds.val.push_back(std::move(s));
    }
  }
  return ds;
}

}  // namespace hnoseg::synth
