// Acceptance gate: one pass/fail line per criterion, nonzero exit on any
// failure. Criteria 8 and 11 share a pair of full training runs and dominate
// the runtime.

#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <numbers>
#include <vector>

#include "hnoseg/checkpoint.hpp"
#include "hnoseg/gradcheck.hpp"
#include "hnoseg/model.hpp"
#include "hnoseg/objective.hpp"
#include "hnoseg/spectral.hpp"
#include "hnoseg/synthdata.hpp"
#include "hnoseg/trainer.hpp"
#include "test_util.hpp"

using namespace hnoseg;
using testutil::max_abs_diff;
using testutil::max_rel_diff;
using testutil::rand_tensor;

namespace {

int g_failures = 0;

void report(int criterion, bool pass, const std::string& detail) {
  std::printf("criterion %2d: %s  (%s)\n", criterion, pass ? "pass" : "FAIL",
              detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

Tensor circular_conv(const Tensor& r, const Tensor& u) {
  const Shape& rs = r.shape();
  const std::size_t co = rs[0], ci = rs[1], nx = rs[2], ny = rs[3], nz = rs[4];
  Tensor out({co, nx, ny, nz});
  for (std::size_t o = 0; o < co; ++o) {
    for (std::size_t i = 0; i < nx; ++i) {
      for (std::size_t j = 0; j < ny; ++j) {
        for (std::size_t k = 0; k < nz; ++k) {
          double acc = 0.0;
          for (std::size_t c = 0; c < ci; ++c) {
            for (std::size_t si = 0; si < nx; ++si) {
              for (std::size_t sj = 0; sj < ny; ++sj) {
                for (std::size_t sk = 0; sk < nz; ++sk) {
                  acc += r[(((o * ci + c) * nx + si) * ny + sj) * nz + sk] *
                         u[((c * nx + (i + nx - si) % nx) * ny +
                            (j + ny - sj) % ny) *
                               nz +
                           (k + nz - sk) % nz];
                }
              }
            }
          }
          out[((o * nx + i) * ny + j) * nz + k] = acc;
        }
      }
    }
  }
  return out;
}

void direct_dft3(const double* x, std::size_t n, std::complex<double>* out) {
  const double tau = 2.0 * std::numbers::pi;
  for (std::size_t ki = 0; ki < n; ++ki) {
    for (std::size_t kj = 0; kj < n; ++kj) {
      for (std::size_t kk = 0; kk < n; ++kk) {
        std::complex<double> acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < n; ++j) {
            for (std::size_t k = 0; k < n; ++k) {
              const double theta = tau *
                                   (static_cast<double>(ki * i + kj * j +
                                                        kk * k) /
                                    static_cast<double>(n));
              acc += x[(i * n + j) * n + k] *
                     std::complex<double>(std::cos(theta), -std::sin(theta));
            }
          }
        }
        out[(ki * n + kj) * n + kk] = acc;
      }
    }
  }
}

void criterion_1() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(101);
  double worst_rt = 0.0, worst_bridge = 0.0;
  for (Shape s : {Shape{1, 4, 4, 4}, Shape{2, 8, 8, 8}, Shape{4, 16, 8, 4},
                  Shape{8, 16, 16, 16}}) {
    Tensor x = rand_tensor(s, rng);
    ad::Tape t;
    ad::Var vx = t.constant(x);
    auto h = spectral::dht_forward(vx);
    worst_rt = std::max(worst_rt,
                        max_abs_diff(spectral::dht_inverse(h).value(), x));
    auto f = spectral::dft_forward(vx);
    ad::Var bridge = ad::sub(f.re, f.im);
    worst_bridge =
        std::max(worst_bridge, max_abs_diff(h.coeffs.value(), bridge.value()));
  }
  const double secs = seconds_since(t0);
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "roundtrip %.2e < 1e-10, bridge %.2e < 1e-12, %.1fs < 10s",
                worst_rt, worst_bridge, secs);
  report(1, worst_rt < 1e-10 && worst_bridge < 1e-12 && secs < 10.0, buf);
}

void criterion_2() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    const std::size_t n = 2 + rng.uniform_index(5);  // 2..6
    const std::size_t ci = 1 + rng.uniform_index(3);
    const std::size_t co = 1 + rng.uniform_index(3);
    const std::size_t vol = n * n * n;
    Tensor u = rand_tensor({ci, n, n, n}, rng);
    Tensor r = rand_tensor({co, ci, n, n, n}, rng);
    Tensor expect = circular_conv(r, u);

    // Per-mode complex weights from the kernel's DFT.
    Tensor wre({co, ci, n, n, n}), wim({co, ci, n, n, n});
    std::vector<std::complex<double>> d(vol);
    for (std::size_t p = 0; p < co * ci; ++p) {
      direct_dft3(r.data() + p * vol, n, d.data());
      for (std::size_t m = 0; m < vol; ++m) {
        wre[p * vol + m] = d[m].real();
        wim[p * vol + m] = d[m].imag();
      }
    }
    ad::Tape t;
    auto fspec = spectral::dft_forward(t.constant(u));
    Tensor got_f =
        spectral::dft_inverse(spectral::fourier_conv_permode(
                                  fspec, t.constant(wre), t.constant(wim)))
            .value();
    worst = std::max(worst, max_rel_diff(got_f, expect));

    // Per-mode Hartley weights, cas transform Re - Im.
    Tensor wh({co, ci, n, n, n});
    for (std::size_t p = 0; p < co * ci; ++p) {
      direct_dft3(r.data() + p * vol, n, d.data());
      for (std::size_t m = 0; m < vol; ++m) {
        wh[p * vol + m] = d[m].real() - d[m].imag();
      }
    }
    auto hspec = spectral::dht_forward(t.constant(u));
    Tensor got_h = spectral::dht_inverse(
                       spectral::hartley_conv_full(hspec, t.constant(wh)))
                       .value();
    worst = std::max(worst, max_rel_diff(got_h, expect));

    // Shared weights equal a delta-kernel circular convolution.
    Tensor w = rand_tensor({co, ci}, rng);
    Tensor rdelta({co, ci, n, n, n});
    for (std::size_t p = 0; p < co * ci; ++p) rdelta[p * vol] = w[p];
    Tensor got_s = spectral::dht_inverse(
                       spectral::hartley_conv_shared(hspec, t.constant(w)))
                       .value();
    worst = std::max(worst, max_rel_diff(got_s, circular_conv(rdelta, u)));
  }
  const double secs = seconds_since(t0);
  char buf[120];
  std::snprintf(buf, sizeof(buf), "max rel err %.2e < 1e-10, %.1fs < 30s",
                worst, secs);
  report(2, worst < 1e-10 && secs < 30.0, buf);
}

void criterion_3() {
  Rng rng(103);
  Tensor u = rand_tensor({3, 8, 8, 8}, rng);
  Tensor w = rand_tensor({3, 3}, rng);
  ad::Tape t;
  ad::Var vu = t.constant(u);
  ad::Var vw = t.constant(w);
  Tensor freq = spectral::dht_inverse(spectral::hartley_conv_shared(
                                          spectral::dht_forward(vu), vw))
                    .value();
  Tensor spatial = ad::channel_linear(vu, vw).value();
  const double err = max_abs_diff(freq, spatial);
  char buf[80];
  std::snprintf(buf, sizeof(buf), "max abs err %.2e < 1e-10", err);
  report(3, err < 1e-10, buf);
}

void criterion_4() {
  Rng rng(104);
  const spectral::KMax k = {2, 2, 2};
  Tensor u = rand_tensor({3, 8, 8, 8}, rng, 0.3);
  std::vector<Tensor> ws;
  for (int j = 0; j < 3; ++j) ws.push_back(rand_tensor({3, 3}, rng, 0.2));

  ad::Tape t;
  auto spec = spectral::mode_crop(spectral::dht_forward(t.constant(u)), k);
  for (int j = 0; j < 3; ++j) {
    spec = spectral::hartley_conv_shared_nonlinear(spec, t.constant(ws[j]),
                                                   true);
  }
  Tensor one_pair = spectral::dht_inverse(spectral::mode_pad(spec)).value();

  ad::Var x = t.constant(u);
  for (int j = 0; j < 3; ++j) {
    auto s = spectral::mode_crop(spectral::dht_forward(x), k);
    s = spectral::hartley_conv_shared_nonlinear(s, t.constant(ws[j]), true);
    x = spectral::dht_inverse(spectral::mode_pad(s));
  }
  const double err = max_abs_diff(one_pair, x.value());
  char buf[80];
  std::snprintf(buf, sizeof(buf), "max abs err %.2e < 1e-10", err);
  report(4, err < 1e-10, buf);
}

void criterion_5() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  std::size_t configs = 0;
  Rng wr(105);

  auto projected = [&](const std::function<ad::Var(
                           ad::Tape&, const std::vector<ad::Var>&)>& fwd,
                       std::vector<Tensor> inputs, Shape out_shape,
                       double step = 1e-6) {
    Tensor w = rand_tensor(std::move(out_shape), wr);
    auto rep = gradcheck::check(
        [&](ad::Tape& t, const std::vector<ad::Var>& in) {
          return ad::reduce_sum(ad::mul(fwd(t, in), t.constant(w)));
        },
        std::move(inputs), step);
    worst = std::max(worst, rep.max_rel_error);
    ++configs;
  };

  for (std::uint64_t seed = 200; seed < 204; ++seed) {
    Rng rng(seed);
    projected(
        [](ad::Tape&, const std::vector<ad::Var>& in) {
          return ad::selu(ad::add(in[0], in[1]));
        },
        {rand_tensor({2, 3, 3, 3}, rng), rand_tensor({2, 3, 3, 3}, rng)},
        {2, 3, 3, 3});
    projected(
        [](ad::Tape&, const std::vector<ad::Var>& in) {
          return ad::sigmoid(ad::mul(in[0], in[1]));
        },
        {rand_tensor({2, 3, 3}, rng), rand_tensor({2, 3, 3}, rng)},
        {2, 3, 3});
    projected(
        [](ad::Tape&, const std::vector<ad::Var>& in) {
          return ad::channel_linear(in[0], in[1], in[2]);
        },
        {rand_tensor({3, 2, 2, 2}, rng), rand_tensor({2, 3}, rng),
         rand_tensor({2}, rng)},
        {2, 2, 2, 2});
    projected(
        [](ad::Tape&, const std::vector<ad::Var>& in) {
          return ad::conv3d_k2s2(in[0], in[1], in[2]);
        },
        {rand_tensor({2, 4, 4, 4}, rng), rand_tensor({3, 2, 2, 2, 2}, rng),
         rand_tensor({3}, rng)},
        {3, 2, 2, 2});
    projected(
        [](ad::Tape&, const std::vector<ad::Var>& in) {
          return ad::trilinear_resample(in[0], {6, 6, 6});
        },
        {rand_tensor({1, 4, 4, 4}, rng)}, {1, 6, 6, 6});
  }

  // Spectral paths and every block family, via tiny models.
  for (auto variant : {model::Variant::kFno, model::Variant::kFnoSeg,
                       model::Variant::kHnoSeg, model::Variant::kHnoSegXs}) {
    model::ModelConfig mc;
    mc.variant = variant;
    mc.d = 3;
    mc.n_blocks = 2;
    mc.n_xs = variant == model::Variant::kHnoSegXs ? 2 : 1;
    mc.k_max = {1, 1, 1};
    mc.in_channels = 2;
    mc.num_labels = 2;
    model::Model m = model::Model::build(mc, 300 + static_cast<int>(variant));
    Rng rng(400 + static_cast<int>(variant));
    Tensor truth({2, 8, 8, 8});
    for (std::size_t i = 0; i < truth.size(); ++i) {
      truth[i] = rng.uniform() < 0.5 ? 0.0 : 1.0;
    }
    auto rep = gradcheck::check(
        [&](ad::Tape& t, const std::vector<ad::Var>& in) {
          return objective::pcc_loss(m.forward(t, in[0], false).output, truth);
        },
        {rand_tensor({2, 8, 8, 8}, rng, 0.3)}, 1e-5);
    worst = std::max(worst, rep.max_rel_error);
    ++configs;
  }
  const double secs = seconds_since(t0);
  char buf[120];
  std::snprintf(buf, sizeof(buf),
                "%zu configs, max rel err %.2e < 1e-5, %.1fs < 120s", configs,
                worst, secs);
  report(5, configs >= 20 && worst < 1e-5 && secs < 120.0, buf);
}

void criterion_6() {
  Tensor y({2, 16, 16, 16});
  const std::size_t vol = 16 * 16 * 16;
  for (std::size_t l = 0; l < 2; ++l) {
    for (std::size_t v = 0; v < vol; ++v) {
      y[l * vol + v] = v < vol / 2 ? 1.0 : 0.0;
    }
  }
  auto loss_of = [](const Tensor& p, const Tensor& t) {
    ad::Tape tape;
    return objective::pcc_loss(tape.constant(p), t).value()[0];
  };
  const double perfect = loss_of(y, y);
  Tensor flip(y.shape());
  for (std::size_t i = 0; i < y.size(); ++i) flip[i] = 1.0 - y[i];
  const double disagree = loss_of(flip, y);
  const double random = loss_of(Tensor::full(y.shape(), 0.5), y);

  Tensor missing = y;
  for (std::size_t v = 0; v < vol; ++v) missing[vol + v] = 0.0;
  Tensor half = y;
  const double miss = loss_of(half, missing);
  const bool ok = std::abs(perfect) < 1e-12 && std::abs(random - 0.5) < 1e-12 &&
                  std::abs(disagree - 1.0) < 1e-12 && std::isfinite(miss) &&
                  std::abs(miss - 0.25) < 1e-6;
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "loss(perfect)=%.1e loss(random)=%.3f loss(anti)=%.12f "
                "missing-label=%.3f",
                perfect, random, disagree, miss);
  report(6, ok, buf);
}

void criterion_7() {
  model::ModelConfig xs;
  xs.variant = model::Variant::kHnoSegXs;
  xs.d = 24;
  xs.n_blocks = 8;
  xs.n_xs = 3;
  xs.k_max = {14, 14, 10};
  xs.in_channels = 4;
  xs.num_labels = 3;
  const std::size_t n = model::param_count(xs);
  model::ModelConfig fno = xs;
  fno.variant = model::Variant::kFno;
  fno.n_xs = 1;
  const std::size_t nf = model::param_count(fno);
  char buf[120];
  std::snprintf(buf, sizeof(buf),
                "param_count %zu in [20000,40000], per-mode ratio %.0fx > 100x",
                n, static_cast<double>(nf) / static_cast<double>(n));
  report(7, n >= 20000 && n <= 40000 && nf > 100 * n, buf);
}

struct TrainOutcome {
  model::Model trained;
  double dice32 = 0.0;
  double dice64 = 0.0;
};

TrainOutcome run_criterion8_training() {
  model::ModelConfig mc;
  mc.variant = model::Variant::kHnoSegXs;
  mc.d = 16;
  mc.n_blocks = 8;
  mc.n_xs = 3;
  mc.k_max = {6, 6, 6};
  mc.in_channels = 4;
  mc.num_labels = 3;
  train::TrainConfig tc;
  tc.epochs = 60;
  tc.seed = 1;
  synth::SceneSpec spec;
  auto ds = synth::make_dataset(tc.seed, 40, spec, {32, 32, 32});
  auto result = train::train(mc, tc, ds.train, ds.val, nullptr);
  std::vector<synth::Scene> val_scenes(ds.scenes.end() - 8, ds.scenes.end());
  TrainOutcome out{std::move(result.trained)};
  out.dice32 = train::evaluate_at(out.trained, val_scenes, spec, 32).mean_dice;
  out.dice64 = train::evaluate_at(out.trained, val_scenes, spec, 64).mean_dice;
  return out;
}

void criteria_8_and_11() {
  TrainOutcome a = run_criterion8_training();
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "dice@32=%.4f dice@64=%.4f >= 0.75, drop %.4f <= 0.10",
                a.dice32, a.dice64, a.dice32 - a.dice64);
  report(8, a.dice64 >= 0.75 && a.dice32 - a.dice64 <= 0.10, buf);

  TrainOutcome b = run_criterion8_training();
  bool identical = a.trained.params().size() == b.trained.params().size();
  for (std::size_t i = 0; identical && i < a.trained.params().size(); ++i) {
    identical = a.trained.params()[i].first == b.trained.params()[i].first &&
                a.trained.params()[i].second == b.trained.params()[i].second;
  }
  report(11, identical,
         identical ? "repeated run is bitwise identical"
                   : "checkpoints differ between identical runs");
}

void criterion_9() {
  synth::SceneSpec spec;
  Rng rng(109, "data");
  synth::Sample sample =
      synth::rasterize(synth::sample_scene(rng, spec), {32, 32, 32}, spec);
  ad::Tape t;
  Tensor coeffs =
      spectral::dht_forward(t.constant(sample.image)).coeffs.value();
  const std::size_t c = coeffs.dim(0), n = 32;
  std::vector<double> mses;
  for (int tenth = 1; tenth <= 10; ++tenth) {
    const std::size_t k = static_cast<std::size_t>(
        std::lround(0.1 * tenth * (n / 2.0)));
    double dropped = 0.0;
    std::size_t i = 0;
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t bi = 0; bi < n; ++bi) {
        for (std::size_t bj = 0; bj < n; ++bj) {
          for (std::size_t bk = 0; bk < n; ++bk, ++i) {
            const bool kept = (bi < k || bi >= n - k) &&
                              (bj < k || bj >= n - k) &&
                              (bk < k || bk >= n - k);
            if (!kept) dropped += coeffs[i] * coeffs[i];
          }
        }
      }
    }
    mses.push_back(dropped / static_cast<double>(c));
  }
  bool monotone = true;
  for (std::size_t i = 1; i < mses.size(); ++i) {
    monotone = monotone && mses[i] <= mses[i - 1];
  }
  char buf[120];
  std::snprintf(buf, sizeof(buf),
                "nonincreasing over 10 fractions, mse(1.0)=%.1e == 0",
                mses.back());
  report(9, monotone && mses.back() == 0.0, buf);
}

void criterion_10() {
  // Single foreground label: the nested-label variants train too erratically
  // at this scale for a stable comparison, and the effect under test is
  // geometric, not hierarchical. Without the spectral nonlinearity the
  // all-modes convolution degenerates to a pointwise linear map (criterion 3),
  // so the half-band model's non-local kernels should win.
  synth::SceneSpec spec;
  spec.num_labels = 1;
  auto ds = synth::make_dataset(1, 20, spec, {32, 32, 32});
  std::vector<synth::Scene> val_scenes(ds.scenes.end() - 4, ds.scenes.end());

  auto run = [&](std::array<std::size_t, 3> k_max) {
    model::ModelConfig mc;
    mc.variant = model::Variant::kHnoSeg;
    mc.d = 8;
    mc.n_blocks = 4;
    mc.n_xs = 1;
    mc.k_max = k_max;
    mc.in_channels = 4;
    mc.num_labels = 1;
    mc.spectral_nonlinearity = false;
    train::TrainConfig tc;
    tc.epochs = 30;
    tc.seed = 1;
    auto result = train::train(mc, tc, ds.train, ds.val, nullptr);
    return train::evaluate_at(result.trained, val_scenes, spec, 32).mean_dice;
  };
  // Post-downsampling grid is 16^3, so k=8 retains every mode.
  const double all_modes = run({8, 8, 8});
  const double half_band = run({4, 4, 4});
  char buf[120];
  std::snprintf(buf, sizeof(buf), "dice all-modes %.4f < half-band %.4f",
                all_modes, half_band);
  report(10, all_modes < half_band, buf);
}

}  // namespace

int main() {
  criterion_1();
  criterion_2();
  criterion_3();
  criterion_4();
  criterion_5();
  criterion_6();
  criterion_7();
  criterion_9();
  criterion_10();
  criteria_8_and_11();
  if (g_failures > 0) {
    std::printf("%d criterion(s) failed\n", g_failures);
    return 1;
  }
  std::printf("all criteria passed\n");
  return 0;
}
