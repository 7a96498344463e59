#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>

#include "fsr/distill.hpp"

namespace fsr {

struct PrerequisiteError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Corpus {
  std::vector<ImagePair> train;
  std::vector<ImagePair> val;
};

// ---- state <-> checkpoint ----

namespace detail {

inline void put_net_meta(CheckpointData& d, const NetConfig& c) {
  d.meta["net.in_channels"] = std::to_string(c.in_channels);
  d.meta["net.base_channels"] = std::to_string(c.base_channels);
  d.meta["net.depth"] = std::to_string(c.depth);
  d.meta["net.time_embed_dim"] = std::to_string(c.time_embed_dim);
  d.meta["net.condition_lr"] = c.condition_lr ? "1" : "0";
}

inline NetConfig net_from_meta(const CheckpointData& d) {
  NetConfig c;
  c.in_channels = std::stoll(d.meta.at("net.in_channels"));
  c.base_channels = std::stoll(d.meta.at("net.base_channels"));
  c.depth = std::stoll(d.meta.at("net.depth"));
  c.time_embed_dim = std::stoll(d.meta.at("net.time_embed_dim"));
  c.condition_lr = d.meta.at("net.condition_lr") == "1";
  return c;
}

template <typename T>
void put_blobs(CheckpointData& d, const std::string& prefix, const std::map<std::string, Tensor<T>>& m) {
  for (const auto& [k, v] : m) d.blobs[prefix + "/" + k] = v.template cast<float>();
}

template <typename T>
std::map<std::string, Tensor<T>> get_blobs(const CheckpointData& d, const std::string& prefix) {
  std::map<std::string, Tensor<T>> out;
  const std::string p = prefix + "/";
  for (const auto& [k, v] : d.blobs)
    if (k.rfind(p, 0) == 0) out[k.substr(p.size())] = v.template cast<T>();
  return out;
}

}  // namespace detail

template <typename T>
CheckpointData state_to_checkpoint(const TrainState<T>& state, const TrainConfig& cfg) {
  CheckpointData d;
  d.config_digest = net_config_digest(state.theta.cfg);
  d.step = static_cast<uint64_t>(state.step);
  detail::put_net_meta(d, state.theta.cfg);
  d.meta["stage"] = cfg.stage == Stage::flow_pretrain ? "flow_pretrain" : "consistency";
  d.meta["seed"] = std::to_string(state.seed);
  d.meta["adam_t"] = std::to_string(state.opt.t);
  d.meta["disc_adam_t"] = std::to_string(state.disc_opt.t);
  d.meta["flow_kind"] = flow_kind_name(cfg.flow_variant.kind);
  d.meta["kappa"] = std::to_string(cfg.flow_variant.kappa);
  d.meta["shift_s"] = std::to_string(cfg.sched.shift_s);
  detail::put_blobs(d, "theta", state.theta.params);
  detail::put_blobs(d, "m", state.opt.m);
  detail::put_blobs(d, "v", state.opt.v);
  if (cfg.stage == Stage::consistency) {
    detail::put_blobs(d, "ema", state.theta_minus.params);
    detail::put_blobs(d, "teacher", state.phi.params);
    if (state.disc) {
      detail::put_blobs(d, "disc", state.disc->params);
      detail::put_blobs(d, "dm", state.disc_opt.m);
      detail::put_blobs(d, "dv", state.disc_opt.v);
    }
  }
  return d;
}

template <typename T>
TrainState<T> state_from_checkpoint(const CheckpointData& d) {
  TrainState<T> state;
  const NetConfig cfg = detail::net_from_meta(d);
  state.theta.cfg = cfg;
  state.theta.params = detail::get_blobs<T>(d, "theta");
  state.opt.m = detail::get_blobs<T>(d, "m");
  state.opt.v = detail::get_blobs<T>(d, "v");
  state.opt.t = std::stoll(d.meta.at("adam_t"));
  state.step = static_cast<int64_t>(d.step);
  state.seed = std::stoull(d.meta.at("seed"));
  auto ema = detail::get_blobs<T>(d, "ema");
  if (!ema.empty()) {
    state.theta_minus.cfg = cfg;
    state.theta_minus.params = std::move(ema);
    state.phi.cfg = cfg;
    state.phi.params = detail::get_blobs<T>(d, "teacher");
  }
  auto disc = detail::get_blobs<T>(d, "disc");
  if (!disc.empty()) {
    Discriminator<T> dd;
    dd.cfg.in_channels = cfg.in_channels;
    dd.cfg.time_embed_dim = cfg.time_embed_dim;
    dd.params = std::move(disc);
    dd.cfg.base_channels = dd.params.at("c0.w").shape[0];
    state.disc = std::move(dd);
    state.disc_opt.m = detail::get_blobs<T>(d, "dm");
    state.disc_opt.v = detail::get_blobs<T>(d, "dv");
    state.disc_opt.t = std::stoll(d.meta.at("disc_adam_t"));
  }
  return state;
}

/// velocity field alone, for sampling/eval from a checkpoint file
template <typename T>
VelocityField<T> load_velocity_field(const std::string& path) {
  const CheckpointData d = load_checkpoint(path);
  VelocityField<T> net;
  net.cfg = detail::net_from_meta(d);
  net.params = detail::get_blobs<T>(d, "theta");
  return net;
}

inline FlowVariant variant_from_checkpoint(const CheckpointData& d) {
  FlowVariant v;
  const std::string kind = d.meta.count("flow_kind") ? d.meta.at("flow_kind") : "sr_flow";
  if (kind == "noise_to_hr") v.kind = FlowKind::noise_to_hr;
  else if (kind == "noised_lr_to_hr") v.kind = FlowKind::noised_lr_to_hr;
  if (d.meta.count("kappa")) v.kappa = std::stod(d.meta.at("kappa"));
  return v;
}

// ---- the end-to-end trainer ----

/// Executes one configured stage over the corpus. Emits a line-delimited
/// metrics log, periodic checkpoints (ckpt_last.fsr) and a final
/// ckpt_final.fsr; resumes from ckpt_last.fsr when present.
template <typename T = float>
std::string run_training(const NetConfig& netcfg, const TrainConfig& cfg, const Corpus& corpus,
                         const std::string& out_dir, const std::string& init_checkpoint = "",
                         std::ostream* progress = nullptr) {
  cfg.validate();
  netcfg.validate();
  if (corpus.train.empty()) throw PrerequisiteError("run_training: empty training corpus");
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const std::string last_path = out_dir + "/ckpt_last.fsr";
  const std::string final_path = out_dir + "/ckpt_final.fsr";

  TrainState<T> state;
  if (fs::exists(last_path)) {
    state = state_from_checkpoint<T>(load_checkpoint(last_path, net_config_digest(netcfg)));
  } else if (cfg.stage == Stage::consistency) {
    if (init_checkpoint.empty() || !fs::exists(init_checkpoint))
      throw PrerequisiteError("consistency stage requires a stage-1 flow checkpoint, missing: " +
                              (init_checkpoint.empty() ? std::string("<none given>") : init_checkpoint));
    // teacher phi is a frozen copy of the stage-1 model; theta and theta^-
    // initialize from the same weights
    auto d = load_checkpoint(init_checkpoint, net_config_digest(netcfg));
    VelocityField<T> flow_net;
    flow_net.cfg = netcfg;
    flow_net.params = detail::get_blobs<T>(d, "theta");
    state.theta = flow_net;
    state.theta_minus = flow_net;
    state.phi = std::move(flow_net);
    state.step = 0;
    state.seed = cfg.seed;
    if (cfg.adv_enabled) {
      DiscConfig dc;
      dc.in_channels = netcfg.in_channels;
      dc.time_embed_dim = netcfg.time_embed_dim;
      state.disc = Discriminator<T>::init(dc, derive_seed(cfg.seed, 0xd15c));
    }
  } else {
    state.theta = VelocityField<T>::init(netcfg, cfg.seed);
    state.seed = cfg.seed;
  }

  std::ofstream log(out_dir + "/metrics.log", std::ios::app);
  const EvalSettings eval_settings{{1, 4}, cfg.sched.shift_s, derive_seed(cfg.seed, 0xe7a1)};

  if (state.step >= cfg.steps) {
    save_checkpoint(state_to_checkpoint(state, cfg), final_path);
    return final_path;
  }

  while (state.step < cfg.steps) {
    Rng rng(derive_seed(derive_seed(cfg.seed, 0x57e9), static_cast<uint64_t>(state.step)));
    std::vector<const ImagePair*> batch;
    batch.reserve(static_cast<size_t>(cfg.batch));
    for (int64_t i = 0; i < cfg.batch; ++i)
      batch.push_back(&corpus.train[static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(corpus.train.size())))]);
    const LossReport report = cfg.stage == Stage::flow_pretrain
                                  ? flow_pretrain_step(state, batch, cfg, rng)
                                  : consistency_step(state, batch, cfg, rng);
    log << "step=" << state.step;
    for (const auto& [k, v] : report) log << " " << k << "=" << v;
    log << "\n";
    if (progress && state.step % 100 == 0) {
      *progress << "step " << state.step << " total " << report.at("total") << "\n";
      progress->flush();
    }
    if (cfg.eval_every > 0 && !corpus.val.empty() && state.step % cfg.eval_every == 0) {
      const EvalReport er = evaluate(state.theta, cfg.flow_variant, corpus.val, eval_settings, "eval");
      for (const auto& r : er.rows)
        if (r.steps > 0)
          log << "eval step=" << state.step << " sample_steps=" << r.steps << " psnr_db=" << r.psnr_db
              << " ssim=" << r.ssim << " surrogate=" << r.surrogate_lpips << "\n";
    }
    if (cfg.checkpoint_every > 0 && state.step % cfg.checkpoint_every == 0)
      save_checkpoint(state_to_checkpoint(state, cfg), last_path);
    log.flush();
  }
  save_checkpoint(state_to_checkpoint(state, cfg), last_path);
  save_checkpoint(state_to_checkpoint(state, cfg), final_path);
  return final_path;
}

}  // namespace fsr
