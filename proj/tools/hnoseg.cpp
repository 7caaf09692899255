// Command-line driver for data generation, training, evaluation and the
// diagnostic experiments.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include <nlohmann/json.hpp>

#include "hnoseg/checkpoint.hpp"
#include "hnoseg/config.hpp"
#include "hnoseg/gradcheck.hpp"
#include "hnoseg/model.hpp"
#include "hnoseg/objective.hpp"
#include "hnoseg/simd.hpp"
#include "hnoseg/spectral.hpp"
#include "hnoseg/synthdata.hpp"
#include "hnoseg/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace hnoseg;

namespace {

synth::Dataset dataset_from(const config::RunConfig& rc) {
  return synth::make_dataset(rc.train.seed, rc.data.n_scenes, rc.data.spec,
                             {rc.data.resolution, rc.data.resolution,
                              rc.data.resolution});
}

Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = scale * rng.normal();
  return t;
}

void print_dice_row(std::size_t resolution, const train::EvalResult& ev) {
  std::printf("%zu", resolution);
  for (double d : ev.per_label_dice) std::printf("\t%.4f", d);
  std::printf("\t%.4f\n", ev.mean_dice);
}

void print_dice_header(std::size_t labels) {
  std::printf("resolution");
  for (std::size_t l = 1; l <= labels; ++l) std::printf("\tdice_l%zu", l);
  std::printf("\tmean\n");
}

int cmd_gen_data(const std::string& config_path, const std::string& out_dir,
                 std::uint64_t seed_override, bool has_seed) {
  auto rc = config::load_run_config(config_path);
  if (has_seed) rc.train.seed = seed_override;
  auto ds = dataset_from(rc);
  fs::create_directories(out_dir);

  json manifest{{"seed", rc.train.seed},
                {"n_scenes", rc.data.n_scenes},
                {"resolution", rc.data.resolution},
                {"spec",
                 {{"min_objects", rc.data.spec.min_objects},
                  {"max_objects", rc.data.spec.max_objects},
                  {"num_labels", rc.data.spec.num_labels},
                  {"channels", rc.data.spec.channels},
                  {"min_radius", rc.data.spec.min_radius},
                  {"max_radius", rc.data.spec.max_radius},
                  {"edge_sigma", rc.data.spec.edge_sigma}}}};
  json samples = json::array();
  std::size_t idx = 0;
  auto dump = [&](const synth::Sample& s, const char* split) {
    char name[32];
    std::snprintf(name, sizeof(name), "sample_%03zu.hnox", idx);
    json header{{"scene_seed", s.scene_seed},
                {"resolution", {s.resolution[0], s.resolution[1],
                                s.resolution[2]}}};
    io::write_tensor_file((fs::path(out_dir) / name).string(), header.dump(),
                          {{"image", s.image}, {"labels", s.labels}});
    samples.push_back(json{{"id", name}, {"split", split}});
    ++idx;
  };
  for (const auto& s : ds.train) dump(s, "train");
  for (const auto& s : ds.val) dump(s, "val");
  manifest["samples"] = samples;
  std::ofstream mf(fs::path(out_dir) / "manifest.json");
  mf << manifest.dump(2) << "\n";
  std::printf("wrote %zu samples to %s\n", idx, out_dir.c_str());
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& out_path,
              const std::string& log_path, std::uint64_t seed_override,
              bool has_seed) {
  auto rc = config::load_run_config(config_path);
  if (has_seed) rc.train.seed = seed_override;
  auto ds = dataset_from(rc);
  std::ofstream log_file;
  std::ostream* log = nullptr;
  if (!log_path.empty()) {
    log_file.open(log_path);
    if (!log_file) throw std::runtime_error("cannot open log " + log_path);
    log = &log_file;
  }
  auto result = train::train(rc.model, rc.train, ds.train, ds.val, log);
  io::save_checkpoint(result.trained,
                      {result.meta.epochs_completed, result.meta.final_lr,
                       result.meta.seed},
                      out_path);
  std::printf("final mean training loss: %.6f\n", result.epoch_loss.back());

  std::vector<std::size_t> resolutions = rc.train.eval_resolutions;
  if (resolutions.empty()) resolutions = {rc.data.resolution};
  // Held-out split scenes, re-rasterized per resolution.
  const std::size_t n_val = ds.val.size();
  std::vector<synth::Scene> val_scenes(ds.scenes.end() - n_val,
                                       ds.scenes.end());
  print_dice_header(rc.model.num_labels);
  for (std::size_t r : resolutions) {
    auto ev = train::evaluate_at(result.trained, val_scenes, rc.data.spec, r);
    print_dice_row(r, ev);
  }
  return 0;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& config_path,
             const std::vector<std::size_t>& resolutions) {
  auto rc = config::load_run_config(config_path);
  model::Model m = io::load_checkpoint(checkpoint_path);
  auto ds = dataset_from(rc);
  const std::size_t n_val = ds.val.size();
  std::vector<synth::Scene> val_scenes(ds.scenes.end() - n_val,
                                       ds.scenes.end());
  print_dice_header(m.config().num_labels);
  for (std::size_t r : resolutions) {
    auto ev = train::evaluate_at(m, val_scenes, rc.data.spec, r);
    print_dice_row(r, ev);
  }
  return 0;
}

int cmd_infer(const std::string& checkpoint_path, const std::string& input_path,
              const std::string& out_path, double threshold) {
  model::Model m = io::load_checkpoint(checkpoint_path);
  auto [header, tensors] = io::read_tensor_file(input_path);
  const Tensor* image = nullptr;
  for (const auto& [name, t] : tensors) {
    if (name == "image") image = &t;
  }
  if (image == nullptr) {
    throw std::runtime_error("infer: input has no 'image' tensor");
  }
  Tensor scores = m.predict(train::normalize_intensity(*image));
  Tensor mask(scores.shape());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    mask[i] = scores[i] >= threshold ? 1.0 : 0.0;
  }
  io::write_tensor_file(out_path, json{{"threshold", threshold}}.dump(),
                        {{"scores", scores}, {"mask", mask}});
  std::printf("wrote %s\n", out_path.c_str());
  return 0;
}

int cmd_param_count(const std::string& config_path) {
  auto rc = config::load_run_config(config_path);
  std::printf("%zu\n", model::param_count(rc.model));
  return 0;
}

int cmd_spectral_demo(std::size_t resolution, std::uint64_t seed,
                      std::vector<double> fractions) {
  if (fractions.empty()) {
    for (int i = 1; i <= 10; ++i) fractions.push_back(0.1 * i);
  }
  synth::SceneSpec spec;
  Rng rng(seed, "data");
  synth::Scene scene = synth::sample_scene(rng, spec);
  synth::Sample sample =
      synth::rasterize(scene, {resolution, resolution, resolution}, spec);

  ad::Tape tape;
  const Tensor& coeffs =
      spectral::dht_forward(tape.constant(sample.image)).coeffs.value();
  const Shape& cs = coeffs.shape();
  const std::size_t channels = cs[0];
  const std::size_t nx = cs[1], ny = cs[2], nz = cs[3];

  // Reconstruction error of the truncated band, via Parseval: the spatial
  // MSE equals the energy of the dropped coefficients divided by the channel
  // count. Exactly zero when the band covers the whole spectrum.
  std::printf("fraction\tk\tmse\n");
  for (double f : fractions) {
    const auto half = resolution / 2;
    std::size_t k = static_cast<std::size_t>(
        std::lround(f * static_cast<double>(half)));
    if (k < 1) k = 1;
    if (k > half) k = half;
    auto kept = [k](std::size_t b, std::size_t n) {
      return b < k || b >= n - k;
    };
    double dropped = 0.0;
    std::size_t i = 0;
    for (std::size_t c = 0; c < channels; ++c) {
      for (std::size_t bx = 0; bx < nx; ++bx) {
        for (std::size_t by = 0; by < ny; ++by) {
          for (std::size_t bz = 0; bz < nz; ++bz, ++i) {
            if (!(kept(bx, nx) && kept(by, ny) && kept(bz, nz))) {
              dropped += coeffs[i] * coeffs[i];
            }
          }
        }
      }
    }
    std::printf("%.3f\t%zu\t%.10e\n", f, k,
                dropped / static_cast<double>(channels));
  }
  return 0;
}

int run_sweep(const config::RunConfig& base, const std::string& label,
              const std::vector<config::RunConfig>& configs,
              const std::vector<std::string>& names) {
  auto ds = dataset_from(base);
  const std::size_t n_val = ds.val.size();
  std::vector<synth::Scene> val_scenes(ds.scenes.end() - n_val,
                                       ds.scenes.end());
  std::printf("%s", label.c_str());
  for (std::size_t l = 1; l <= base.model.num_labels; ++l) {
    std::printf("\tdice_l%zu", l);
  }
  std::printf("\tmean\n");
  for (std::size_t i = 0; i < configs.size(); ++i) {
    auto result = train::train(configs[i].model, configs[i].train, ds.train,
                               ds.val, nullptr);
    auto ev = train::evaluate_at(result.trained, val_scenes, base.data.spec,
                                 base.data.resolution);
    std::printf("%s", names[i].c_str());
    for (double d : ev.per_label_dice) std::printf("\t%.4f", d);
    std::printf("\t%.4f\n", ev.mean_dice);
    std::fflush(stdout);
  }
  return 0;
}

int cmd_sweep_nxs(const std::string& config_path, std::size_t budget,
                  std::vector<std::size_t> values) {
  auto rc = config::load_run_config(config_path);
  if (values.empty()) values = {1, 2, 3, 4};
  std::vector<config::RunConfig> configs;
  std::vector<std::string> names;
  for (std::size_t v : values) {
    if (budget % v != 0) {
      std::fprintf(stderr, "skipping n_xs=%zu (does not divide budget %zu)\n",
                   v, budget);
      continue;
    }
    config::RunConfig c = rc;
    c.model.variant = model::Variant::kHnoSegXs;
    c.model.n_xs = v;
    c.model.n_blocks = budget / v;
    c.validate();
    configs.push_back(c);
    names.push_back("n_xs=" + std::to_string(v) +
                    ",n_B=" + std::to_string(budget / v));
  }
  return run_sweep(rc, "config", configs, names);
}

int cmd_sweep_kmax(const std::string& config_path,
                   std::vector<std::size_t> values) {
  auto rc = config::load_run_config(config_path);
  if (values.empty()) values = {2, 4, rc.data.resolution / 4};
  std::vector<config::RunConfig> configs;
  std::vector<std::string> names;
  for (std::size_t v : values) {
    config::RunConfig c = rc;
    c.model.k_max = {v, v, v};
    c.validate();
    configs.push_back(c);
    names.push_back("k_max=" + std::to_string(v));
  }
  return run_sweep(rc, "config", configs, names);
}

int cmd_gradcheck(std::uint64_t seed) {
  Rng rng(seed, "gradcheck");
  struct Case {
    std::string name;
    gradcheck::Report rep;
  };
  std::vector<Case> cases;

  auto run = [&](const std::string& name, const gradcheck::LossBuilder& build,
                 std::vector<Tensor> inputs, double step = 1e-6) {
    cases.push_back({name, gradcheck::check(build, std::move(inputs), step)});
  };

  // Fixed random projection so the loss is identical across FD evaluations.
  Rng wr(seed, "gradcheck-weights");
  auto projector = [&](const Shape& shape) {
    Tensor w(shape);
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = wr.normal();
    return w;
  };
  auto weighted_sum = [](ad::Tape& t, ad::Var y, const Tensor& w) {
    return ad::reduce_sum(ad::mul(y, t.constant(w)));
  };
  Tensor w_selu = projector({2, 3, 3, 3});
  run("selu",
      [&](ad::Tape& t, const std::vector<ad::Var>& in) {
        return weighted_sum(t, ad::selu(in[0]), w_selu);
      },
      {random_tensor({2, 3, 3, 3}, rng)});
  Tensor w_cl = projector({2, 2, 2, 2});
  run("channel_linear",
      [&](ad::Tape& t, const std::vector<ad::Var>& in) {
        return weighted_sum(t, ad::channel_linear(in[0], in[1], in[2]), w_cl);
      },
      {random_tensor({3, 2, 2, 2}, rng), random_tensor({2, 3}, rng),
       random_tensor({2}, rng)});
  Tensor w_conv = projector({2, 2, 2, 2});
  run("conv3d_k2s2",
      [&](ad::Tape& t, const std::vector<ad::Var>& in) {
        return weighted_sum(t, ad::conv3d_k2s2(in[0], in[1], in[2]), w_conv);
      },
      {random_tensor({2, 4, 4, 4}, rng), random_tensor({2, 2, 2, 2, 2}, rng),
       random_tensor({2}, rng)});
  Tensor w_tri = projector({2, 6, 6, 6});
  run("trilinear_resample",
      [&](ad::Tape& t, const std::vector<ad::Var>& in) {
        return weighted_sum(t, ad::trilinear_resample(in[0], {6, 6, 6}), w_tri);
      },
      {random_tensor({2, 4, 4, 4}, rng)});
  Tensor w_dht = projector({1, 4, 4, 4});
  run("dht_roundtrip",
      [&](ad::Tape& t, const std::vector<ad::Var>& in) {
        auto s = spectral::dht_forward(in[0]);
        return weighted_sum(t, spectral::dht_inverse(s), w_dht);
      },
      {random_tensor({1, 4, 4, 4}, rng)});
  run("model_hnoseg_xs",
      [&](ad::Tape& t, const std::vector<ad::Var>& in) {
        (void)in;
        model::ModelConfig mc;
        mc.variant = model::Variant::kHnoSegXs;
        mc.d = 3;
        mc.n_blocks = 2;
        mc.n_xs = 2;
        mc.k_max = {1, 1, 1};
        mc.in_channels = 2;
        mc.num_labels = 2;
        model::Model m = model::Model::build(mc, seed);
        Tensor truth({2, 8, 8, 8});
        Rng tr(seed, "truth");
        for (std::size_t i = 0; i < truth.size(); ++i) {
          truth[i] = tr.uniform() < 0.5 ? 0.0 : 1.0;
        }
        return objective::pcc_loss(m.forward(t, in[0], false).output, truth);
      },
      {random_tensor({2, 8, 8, 8}, rng, 0.3)}, 1e-5);

  bool ok = true;
  std::printf("case\tchecked\tmax_rel_err\tstatus\n");
  for (const auto& c : cases) {
    const bool pass = c.rep.max_rel_error < 1e-5;
    ok = ok && pass;
    std::printf("%s\t%zu\t%.3e\t%s\n", c.name.c_str(), c.rep.checked,
                c.rep.max_rel_error, pass ? "pass" : "FAIL");
  }
  return ok ? 0 : 1;
}

int cmd_bench(std::vector<std::size_t> sizes) {
  if (sizes.empty()) sizes = {16, 32};
  using clock = std::chrono::steady_clock;
  std::printf("benchmark\tsize\tms\n");
  Rng rng(1);
  std::printf("simd_backend\t-\t%s\n", simd::active_name());
  for (std::size_t n : sizes) {
    Tensor x = random_tensor({8, n, n, n}, rng);
    auto t0 = clock::now();
    constexpr int reps = 5;
    for (int r = 0; r < reps; ++r) {
      ad::Tape tape;
      auto s = spectral::dht_forward(tape.constant(x));
      (void)s;
    }
    const double ms =
        std::chrono::duration<double, std::milli>(clock::now() - t0).count() /
        reps;
    std::printf("dht_forward_8ch\t%zu\t%.3f\n", n, ms);
  }
  for (std::size_t n : sizes) {
    model::ModelConfig mc;
    mc.d = 16;
    mc.n_blocks = 8;
    mc.n_xs = 3;
    mc.k_max = {n / 8, n / 8, n / 8};
    model::Model m = model::Model::build(mc, 1);
    Tensor x = random_tensor({4, n, n, n}, rng);
    auto t0 = clock::now();
    Tensor y = m.predict(x);
    const double ms =
        std::chrono::duration<double, std::milli>(clock::now() - t0).count();
    std::printf("forward_hnoseg_xs_d16\t%zu\t%.3f\n", n, ms);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hartley/Fourier neural operators for volumetric segmentation"};
  app.require_subcommand(1);

  std::string config_path, out_path, log_path, checkpoint_path, input_path;
  std::uint64_t seed = 0;
  std::vector<std::size_t> resolutions;
  std::vector<double> fractions;
  std::vector<std::size_t> values;
  std::vector<std::size_t> sizes;
  std::size_t resolution = 32, budget = 24;
  double threshold = 0.5;

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  gen->add_option("--config", config_path, "Run config JSON")->required();
  gen->add_option("--out", out_path, "Output directory")->required();
  auto* gen_seed = gen->add_option("--seed", seed, "Seed override");

  auto* tr = app.add_subcommand("train", "Train a model");
  tr->add_option("--config", config_path)->required();
  tr->add_option("--out", out_path, "Checkpoint path")->required();
  tr->add_option("--log", log_path, "JSONL training log");
  auto* tr_seed = tr->add_option("--seed", seed, "Seed override");

  auto* ev = app.add_subcommand("eval", "Evaluate across resolutions");
  ev->add_option("--checkpoint", checkpoint_path)->required();
  ev->add_option("--config", config_path)->required();
  ev->add_option("--resolution", resolutions, "Evaluation resolution")
      ->required();

  auto* inf = app.add_subcommand("infer", "Run inference on one sample");
  inf->add_option("--checkpoint", checkpoint_path)->required();
  inf->add_option("--input", input_path)->required();
  inf->add_option("--out", out_path)->required();
  inf->add_option("--threshold", threshold);

  auto* pc = app.add_subcommand("param-count", "Print the parameter count");
  pc->add_option("--config", config_path)->required();

  auto* sd = app.add_subcommand("spectral-demo",
                                "Mode-truncation reconstruction MSE table");
  sd->add_option("--resolution", resolution);
  sd->add_option("--seed", seed);
  sd->add_option("--mode-fraction", fractions, "Fraction of modes kept");

  auto* sn = app.add_subcommand("sweep-nxs",
                                "Accuracy vs. frequency-convs-per-block");
  sn->add_option("--config", config_path)->required();
  sn->add_option("--budget", budget, "Total n_xs * n_B");
  sn->add_option("--values", values, "n_xs values");

  auto* sk = app.add_subcommand("sweep-kmax", "Accuracy vs. retained modes");
  sk->add_option("--config", config_path)->required();
  sk->add_option("--values", values, "k_max values");

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference checks");
  gc->add_option("--seed", seed);

  auto* bn = app.add_subcommand("bench", "Timing table");
  bn->add_option("--sizes", sizes, "Grid sizes");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      return cmd_gen_data(config_path, out_path, seed, !gen_seed->empty());
    }
    if (tr->parsed()) {
      return cmd_train(config_path, out_path, log_path, seed,
                       !tr_seed->empty());
    }
    if (ev->parsed()) return cmd_eval(checkpoint_path, config_path, resolutions);
    if (inf->parsed()) {
      return cmd_infer(checkpoint_path, input_path, out_path, threshold);
    }
    if (pc->parsed()) return cmd_param_count(config_path);
    if (sd->parsed()) return cmd_spectral_demo(resolution, seed, fractions);
    if (sn->parsed()) return cmd_sweep_nxs(config_path, budget, values);
    if (sk->parsed()) return cmd_sweep_kmax(config_path, values);
    if (gc->parsed()) return cmd_gradcheck(seed);
    if (bn->parsed()) return cmd_bench(sizes);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
