// fsr: rectified-flow super-resolution trainer / sampler / evaluator.
//
// Exit codes: 0 success, 2 configuration error, 3 missing prerequisite
// (corpus or checkpoint), 4 numeric failure during training or sampling.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "fsr/config.hpp"
#include "fsr/eval.hpp"
#include "fsr/image_io.hpp"
#include "fsr/train.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitPrereq = 3;
constexpr int kExitNumeric = 4;

fsr::ExperimentConfig resolve_config(const std::string& path,
                                     const std::vector<std::string>& overrides) {
  fsr::ExperimentConfig cfg = path.empty() ? fsr::ExperimentConfig{} : fsr::load_config(path);
  for (const auto& ov : overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos)
      throw fsr::ConfigError("override must look like section.key=value: '" + ov + "'");
    cfg.set(ov.substr(0, eq), ov.substr(eq + 1));
  }
  cfg.net.condition_lr = cfg.train.flow_variant.kind != fsr::FlowKind::sr_flow;
  cfg.eval.shift_s = cfg.train.sched.shift_s;
  return cfg;
}

void write_text(const std::string& path, const std::string& text) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw fsr::IoError("cannot open " + tmp);
    f << text;
  }
  fs::rename(tmp, path);
}

// ---- corpus on disk ----

void write_split(const std::string& dir, int count, int size, const fsr::DegradeConfig& dcfg,
                 uint64_t split_salt, json& manifest_entry) {
  fs::create_directories(dir);
  for (int i = 0; i < count; ++i) {
    const uint64_t seed = fsr::derive_seed(split_salt, static_cast<uint64_t>(i));
    const fsr::ImagePair pair = fsr::make_pair(seed, size, dcfg);
    char name[32];
    std::snprintf(name, sizeof(name), "%04d", i);
    fsr::write_fsrf(dir + "/" + name + "_hr.fsrf", pair.x_hr);
    fsr::write_fsrf(dir + "/" + name + "_lr.fsrf", pair.x_lr);
    fsr::write_png(dir + "/" + name + "_hr.png", pair.x_hr);
    fsr::write_png(dir + "/" + name + "_lr.png", pair.x_lr);
  }
  manifest_entry = {{"count", count}, {"size", size}, {"salt", split_salt}};
}

std::vector<fsr::ImagePair> load_split(const std::string& dir) {
  std::vector<fsr::ImagePair> out;
  for (int i = 0;; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "%04d", i);
    const std::string hr = dir + "/" + name + "_hr.fsrf";
    const std::string lr = dir + "/" + name + "_lr.fsrf";
    if (!fs::exists(hr)) break;
    out.push_back({fsr::read_fsrf(hr), fsr::read_fsrf(lr)});
  }
  return out;
}

fsr::Corpus load_corpus(const std::string& data_dir) {
  if (!fs::exists(data_dir + "/manifest.json"))
    throw fsr::PrerequisiteError("no corpus at " + data_dir + " (run gen-data first)");
  fsr::Corpus c;
  c.train = load_split(data_dir + "/train");
  c.val = load_split(data_dir + "/val");
  if (c.train.empty()) throw fsr::PrerequisiteError("corpus at " + data_dir + " has no training pairs");
  return c;
}

// ---- subcommand bodies ----

int cmd_gen_data(const fsr::ExperimentConfig& cfg, const std::string& out_dir) {
  cfg.degrade.validate();
  fs::create_directories(out_dir);
  json manifest;
  manifest["config"] = cfg.serialize();
  write_split(out_dir + "/train", cfg.corpus_train, cfg.corpus_size, cfg.degrade,
              fsr::derive_seed(cfg.degrade.seed, 0x7121), manifest["train"]);
  write_split(out_dir + "/val", cfg.corpus_val, cfg.corpus_size, cfg.degrade,
              fsr::derive_seed(cfg.degrade.seed, 0x7a1), manifest["val"]);
  write_text(out_dir + "/manifest.json", manifest.dump(2) + "\n");
  std::cout << "wrote " << cfg.corpus_train << " train + " << cfg.corpus_val << " val pairs to "
            << out_dir << "\n";
  return 0;
}

int cmd_train(fsr::ExperimentConfig cfg, fsr::Stage stage, const std::string& data_dir,
              const std::string& out_dir, const std::string& init_ckpt) {
  cfg.train.stage = stage;
  cfg.train.steps = stage == fsr::Stage::flow_pretrain ? cfg.stage1_steps : cfg.stage2_steps;
  cfg.train.validate();
  const fsr::Corpus corpus = load_corpus(data_dir);
  fs::create_directories(out_dir);
  write_text(out_dir + "/config.resolved", cfg.serialize());
  const std::string final_path =
      fsr::run_training<float>(cfg.net, cfg.train, corpus, out_dir, init_ckpt, &std::cout);
  std::cout << "final checkpoint: " << final_path << "\n";
  return 0;
}

int cmd_sample(const std::string& ckpt_path, const std::string& input, const std::string& output,
               int steps, double shift_s, int upscale_factor, const std::string& traj_dir) {
  if (!fs::exists(ckpt_path)) throw fsr::PrerequisiteError("checkpoint not found: " + ckpt_path);
  if (!fs::exists(input)) throw fsr::PrerequisiteError("input image not found: " + input);
  const fsr::CheckpointData d = fsr::load_checkpoint(ckpt_path);
  fsr::VelocityField<float> net;
  net.cfg = fsr::detail::net_from_meta(d);
  net.params = fsr::detail::get_blobs<float>(d, "theta");
  const fsr::FlowVariant var = fsr::variant_from_checkpoint(d);

  fsr::TensorD x_in = fsr::read_image(input);
  if (upscale_factor > 1) x_in = fsr::upscale(x_in, upscale_factor, fsr::UpscaleMethod::nearest);
  const fsr::TensorF x_lr = x_in.cast<float>();

  const fsr::Scheduler grid = fsr::shift_grid(fsr::uniform_grid(steps), shift_s);
  fsr::Rng rng(fsr::derive_seed(d.step, 0x5a));  // only the noise-bearing variants draw from it
  const fsr::TensorF x1 = fsr::variant_endpoint(var, x_lr, rng);
  auto fn = fsr::make_velocity_fn(net, &x_lr);
  const fsr::Trajectory<float> traj = fsr::sample_ode(x1, fn, grid);
  const fsr::TensorF out = fsr::clamp01(traj.final_state());
  if (!std::all_of(out.data.begin(), out.data.end(), [](float v) { return std::isfinite(v); }))
    throw fsr::NumericError("sample: non-finite output");
  fsr::write_image(output, out.cast<double>());
  if (!traj_dir.empty()) {
    fs::create_directories(traj_dir);
    for (size_t i = 0; i < traj.states.size(); ++i) {
      char name[48];
      std::snprintf(name, sizeof(name), "state_%03zu_t%.4f", i, traj.states[i].first);
      const fsr::TensorD state = traj.states[i].second.cast<double>();
      fsr::write_png(traj_dir + "/" + name + ".png", fsr::clamp01(state));
      fsr::write_fsrf(traj_dir + "/" + name + ".fsrf", state);
    }
  }
  std::cout << "wrote " << output << " (" << steps << " steps)\n";
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_dir, const std::string& out_path,
             std::vector<int> step_counts, double shift_s, uint64_t seed) {
  if (!fs::exists(ckpt_path)) throw fsr::PrerequisiteError("checkpoint not found: " + ckpt_path);
  const fsr::CheckpointData d = fsr::load_checkpoint(ckpt_path);
  fsr::VelocityField<float> net;
  net.cfg = fsr::detail::net_from_meta(d);
  net.params = fsr::detail::get_blobs<float>(d, "theta");
  const fsr::Corpus corpus = load_corpus(data_dir);
  const std::vector<fsr::ImagePair>& split = corpus.val.empty() ? corpus.train : corpus.val;
  fsr::EvalSettings settings{step_counts, shift_s, seed};
  const fsr::EvalReport report =
      fsr::evaluate(net, fsr::variant_from_checkpoint(d), split, settings, "model");
  std::cout << report.to_table();
  if (!out_path.empty()) write_text(out_path, report.to_records());
  return 0;
}

// ---- ablations ----

fsr::EvalRow eval_one(const fsr::VelocityField<float>& net, const fsr::FlowVariant& var,
                      const std::vector<fsr::ImagePair>& split, int steps, double shift_s,
                      uint64_t seed, const std::string& label) {
  fsr::EvalSettings settings{{steps}, shift_s, seed};
  fsr::EvalRow row = fsr::evaluate(net, var, split, settings, label).rows.at(0);
  row.label = label;
  return row;
}

std::string rows_to_table(const std::vector<fsr::EvalRow>& rows) {
  std::ostringstream os;
  os << "method | steps | psnr_db | ssim | surrogate_lpips\n";
  for (const auto& r : rows) {
    os.setf(std::ios::fixed);
    os.precision(4);
    os << r.label << " | " << r.steps << " | " << r.psnr_db << " | " << r.ssim << " | "
       << r.surrogate_lpips << "\n";
  }
  return os.str();
}

int cmd_ablate(fsr::ExperimentConfig cfg, const std::string& study, const std::string& data_dir,
               const std::string& out_dir) {
  const fsr::Corpus corpus = load_corpus(data_dir);
  const std::vector<fsr::ImagePair>& split = corpus.val.empty() ? corpus.train : corpus.val;
  fs::create_directories(out_dir);
  const double s = cfg.train.sched.shift_s;
  const uint64_t eseed = cfg.eval.seed;
  std::vector<fsr::EvalRow> rows;

  auto train_flow = [&](fsr::ExperimentConfig c, const std::string& dir) {
    c.train.stage = fsr::Stage::flow_pretrain;
    c.train.steps = c.stage1_steps;
    return fsr::run_training<float>(c.net, c.train, corpus, dir);
  };
  auto distill_from = [&](fsr::ExperimentConfig c, const std::string& dir, const std::string& flow_ckpt) {
    c.train.stage = fsr::Stage::consistency;
    c.train.steps = c.stage2_steps;
    return fsr::run_training<float>(c.net, c.train, corpus, dir, flow_ckpt);
  };
  auto load_theta = [](const std::string& path) { return fsr::load_velocity_field<float>(path); };

  if (study == "flow") {
    // flow formulation comparison: three interpolation paths, at 1 and 4 steps
    const std::pair<fsr::FlowKind, std::string> variants[] = {
        {fsr::FlowKind::sr_flow, "sr_flow"},
        {fsr::FlowKind::noise_to_hr, "noise_to_hr"},
        {fsr::FlowKind::noised_lr_to_hr, "noised_lr_to_hr"},
    };
    for (const auto& [kind, name] : variants) {
      fsr::ExperimentConfig c = cfg;
      c.train.flow_variant.kind = kind;
      c.net.condition_lr = kind != fsr::FlowKind::sr_flow;
      const std::string ckpt = train_flow(c, out_dir + "/" + name);
      const auto net = load_theta(ckpt);
      for (int steps : {1, 4})
        rows.push_back(eval_one(net, c.train.flow_variant, split, steps, s, eseed, name));
    }
  } else if (study == "consistency") {
    // distillation objective comparison at one sampling step:
    // the undistilled flow model, then cd / hr / hrcd objectives
    const std::string flow_ckpt = train_flow(cfg, out_dir + "/flow");
    rows.push_back(
        eval_one(load_theta(flow_ckpt), cfg.train.flow_variant, split, 1, s, eseed, "sr_flow"));
    const std::pair<fsr::Objective, std::string> objectives[] = {
        {fsr::Objective::cd, "cd"}, {fsr::Objective::hr, "hr"}, {fsr::Objective::hrcd, "hrcd"}};
    for (const auto& [obj, name] : objectives) {
      fsr::ExperimentConfig c = cfg;
      c.train.objective = obj;
      const std::string ckpt = distill_from(c, out_dir + "/" + name, flow_ckpt);
      rows.push_back(eval_one(load_theta(ckpt), c.train.flow_variant, split, 1, s, eseed, name));
    }
  } else if (study == "fastslow") {
    // timestep pairing comparison at one sampling step: n-interval grids,
    // slow-only, and fast-slow with varying fast grid sizes
    const std::string flow_ckpt = train_flow(cfg, out_dir + "/flow");
    struct Row {
      fsr::Pairing pairing;
      int n;
      std::string name;
    };
    const Row specs[] = {
        {fsr::Pairing::n_interval, 50, "n_interval_50"},
        {fsr::Pairing::n_interval, 18, "n_interval_18"},
        {fsr::Pairing::n_interval, 4, "n_interval_4"},
        {fsr::Pairing::slow_only, 1000, "slow_only_1000"},
        {fsr::Pairing::fast_slow, 8, "fast_slow_8"},
        {fsr::Pairing::fast_slow, 4, "fast_slow_4"},
        {fsr::Pairing::fast_slow, 1, "fast_slow_1"},
    };
    for (const auto& spec : specs) {
      fsr::ExperimentConfig c = cfg;
      c.train.pairing = spec.pairing;
      if (spec.pairing == fsr::Pairing::n_interval) c.train.n_interval = spec.n;
      if (spec.pairing == fsr::Pairing::fast_slow) c.train.sched.fast_steps = spec.n;
      const std::string ckpt = distill_from(c, out_dir + "/" + spec.name, flow_ckpt);
      rows.push_back(eval_one(load_theta(ckpt), c.train.flow_variant, split, 1, s, eseed, spec.name));
    }
  } else {
    throw fsr::ConfigError("unknown ablation study '" + study + "' (flow|consistency|fastslow)");
  }

  std::ostringstream report;
  report << rows_to_table(rows) << "\n# config\n";
  std::istringstream cfg_lines(cfg.serialize());
  for (std::string line; std::getline(cfg_lines, line);) report << "# " << line << "\n";
  write_text(out_dir + "/ablation_" + study + ".txt", report.str());
  std::cout << rows_to_table(rows);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fsr: flow-matching super-resolution at desk scale"};
  app.require_subcommand(1);

  std::string config_path, data_dir, out_dir, ckpt_path, init_ckpt, input, output, traj_dir, study;
  std::vector<std::string> overrides;
  std::vector<int> eval_steps = {1, 4};
  int sample_steps = 4;
  int upscale_factor = 1;
  double shift_s = 3.0;
  uint64_t eval_seed = 0;

  auto add_cfg = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "sectioned key=value config file");
    sub->add_option("--set", overrides, "override, e.g. --set train.lr=5e-4")->take_all();
  };

  auto* gen = app.add_subcommand("gen-data", "synthesize a degradation corpus");
  add_cfg(gen);
  gen->add_option("--out", out_dir, "corpus directory")->required();

  auto* tf = app.add_subcommand("train-flow", "stage 1: flow-matching pretraining");
  add_cfg(tf);
  tf->add_option("--data", data_dir, "corpus directory")->required();
  tf->add_option("--out", out_dir, "run directory")->required();

  auto* di = app.add_subcommand("distill", "stage 2: consistency distillation");
  add_cfg(di);
  di->add_option("--data", data_dir, "corpus directory")->required();
  di->add_option("--out", out_dir, "run directory")->required();
  di->add_option("--flow-checkpoint", init_ckpt, "stage-1 checkpoint (teacher)")->required();

  auto* sa = app.add_subcommand("sample", "run the reverse ODE on one image");
  sa->add_option("--checkpoint", ckpt_path, "model checkpoint")->required();
  sa->add_option("--input", input, "LR input (.png or .fsrf)")->required();
  sa->add_option("--output", output, "output image path")->required();
  sa->add_option("--steps", sample_steps, "Euler steps (default 4)");
  sa->add_option("--shift", shift_s, "timestep shift s (default 3)");
  sa->add_option("--upscale", upscale_factor, "nearest-upscale input first (default 1)");
  sa->add_option("--dump-trajectory", traj_dir, "write every intermediate state here");

  auto* ev = app.add_subcommand("eval", "PSNR/SSIM over the validation split");
  ev->add_option("--checkpoint", ckpt_path, "model checkpoint")->required();
  ev->add_option("--data", data_dir, "corpus directory")->required();
  ev->add_option("--out", output, "write line records here");
  ev->add_option("--steps", eval_steps, "step counts (default 1 4)")->take_all();
  ev->add_option("--shift", shift_s, "timestep shift s (default 3)");
  ev->add_option("--seed", eval_seed, "eval noise seed");

  auto* ab = app.add_subcommand("ablate", "reproduce an ablation table");
  add_cfg(ab);
  ab->add_option("--study", study, "flow | consistency | fastslow")->required();
  ab->add_option("--data", data_dir, "corpus directory")->required();
  ab->add_option("--out", out_dir, "run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  // FSR_OUT_ROOT prefixes relative output destinations
  if (const char* root = std::getenv("FSR_OUT_ROOT"); root && *root) {
    auto rebase = [&](std::string& p) {
      if (!p.empty() && !fs::path(p).is_absolute()) p = (fs::path(root) / p).string();
    };
    rebase(out_dir);
    rebase(output);
    rebase(traj_dir);
  }

  try {
    if (gen->parsed()) return cmd_gen_data(resolve_config(config_path, overrides), out_dir);
    if (tf->parsed())
      return cmd_train(resolve_config(config_path, overrides), fsr::Stage::flow_pretrain, data_dir,
                       out_dir, "");
    if (di->parsed())
      return cmd_train(resolve_config(config_path, overrides), fsr::Stage::consistency, data_dir,
                       out_dir, init_ckpt);
    if (sa->parsed())
      return cmd_sample(ckpt_path, input, output, sample_steps, shift_s, upscale_factor, traj_dir);
    if (ev->parsed()) return cmd_eval(ckpt_path, data_dir, output, eval_steps, shift_s, eval_seed);
    if (ab->parsed())
      return cmd_ablate(resolve_config(config_path, overrides), study, data_dir, out_dir);
  } catch (const fsr::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const fsr::PrerequisiteError& e) {
    std::cerr << "prerequisite error: " << e.what() << "\n";
    return kExitPrereq;
  } catch (const fsr::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const fsr::CheckpointError& e) {
    std::cerr << "prerequisite error: " << e.what() << "\n";
    return kExitPrereq;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
