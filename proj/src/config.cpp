#include "fsr/config.hpp"

#include <fstream>
#include <sstream>

namespace fsr {

namespace {

int64_t to_i(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const int64_t r = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError("config: bad integer for " + key + ": '" + v + "'");
  }
}

double to_d(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const double r = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError("config: bad number for " + key + ": '" + v + "'");
  }
}

bool to_b(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config: bad boolean for " + key + ": '" + v + "'");
}

uint64_t to_u(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const uint64_t r = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError("config: bad seed for " + key + ": '" + v + "'");
  }
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

void ExperimentConfig::set(const std::string& dotted_key, const std::string& value) {
  const std::string& k = dotted_key;
  // [corpus]
  if (k == "corpus.train_count") corpus_train = static_cast<int>(to_i(k, value));
  else if (k == "corpus.val_count") corpus_val = static_cast<int>(to_i(k, value));
  else if (k == "corpus.size") corpus_size = static_cast<int>(to_i(k, value));
  // [degrade]
  else if (k == "degrade.scale") degrade.scale = static_cast<int>(to_i(k, value));
  else if (k == "degrade.blur_sigma_lo") degrade.blur_sigma_lo = to_d(k, value);
  else if (k == "degrade.blur_sigma_hi") degrade.blur_sigma_hi = to_d(k, value);
  else if (k == "degrade.noise_sigma_lo") degrade.noise_sigma_lo = to_d(k, value);
  else if (k == "degrade.noise_sigma_hi") degrade.noise_sigma_hi = to_d(k, value);
  else if (k == "degrade.seed") degrade.seed = to_u(k, value);
  // [net]
  else if (k == "net.base_channels") net.base_channels = to_i(k, value);
  else if (k == "net.depth") net.depth = to_i(k, value);
  else if (k == "net.time_embed_dim") net.time_embed_dim = to_i(k, value);
  // [train]
  else if (k == "train.stage1_steps") stage1_steps = to_i(k, value);
  else if (k == "train.stage2_steps") stage2_steps = to_i(k, value);
  else if (k == "train.batch") train.batch = to_i(k, value);
  else if (k == "train.lr") train.lr = to_d(k, value);
  else if (k == "train.ema_mu") train.ema_mu = to_d(k, value);
  else if (k == "train.lambda_p") train.weights.lambda_p = to_d(k, value);
  else if (k == "train.lambda_cd") train.weights.lambda_cd = to_d(k, value);
  else if (k == "train.lambda_adv") train.weights.lambda_adv = to_d(k, value);
  else if (k == "train.flow_variant") {
    if (value == "sr_flow") train.flow_variant.kind = FlowKind::sr_flow;
    else if (value == "noise_to_hr") train.flow_variant.kind = FlowKind::noise_to_hr;
    else if (value == "noised_lr_to_hr") train.flow_variant.kind = FlowKind::noised_lr_to_hr;
    else throw ConfigError("config: unknown flow_variant '" + value + "'");
  } else if (k == "train.kappa") train.flow_variant.kappa = to_d(k, value);
  else if (k == "train.objective") {
    if (value == "cd") train.objective = Objective::cd;
    else if (value == "hr") train.objective = Objective::hr;
    else if (value == "hrcd") train.objective = Objective::hrcd;
    else throw ConfigError("config: unknown objective '" + value + "'");
  } else if (k == "train.pairing") {
    if (value == "fast_slow") train.pairing = Pairing::fast_slow;
    else if (value == "n_interval") train.pairing = Pairing::n_interval;
    else if (value == "slow_only") train.pairing = Pairing::slow_only;
    else throw ConfigError("config: unknown pairing '" + value + "'");
  } else if (k == "train.n_interval") train.n_interval = static_cast<int>(to_i(k, value));
  else if (k == "train.hr_perceptual") train.hr_perceptual = to_b(k, value);
  else if (k == "train.adv_enabled") train.adv_enabled = to_b(k, value);
  else if (k == "train.seed") train.seed = to_u(k, value);
  else if (k == "train.checkpoint_every") train.checkpoint_every = to_i(k, value);
  else if (k == "train.eval_every") train.eval_every = to_i(k, value);
  // [sched]
  else if (k == "sched.fast_steps") train.sched.fast_steps = static_cast<int>(to_i(k, value));
  else if (k == "sched.slow_steps") train.sched.slow_steps = static_cast<int>(to_i(k, value));
  else if (k == "sched.shift_s") train.sched.shift_s = to_d(k, value);
  else if (k == "sched.time_sampling") {
    if (value == "uniform") train.sched.time_sampling = TimeSampling::uniform;
    else if (value == "lognorm") train.sched.time_sampling = TimeSampling::lognorm;
    else throw ConfigError("config: unknown time_sampling '" + value + "'");
  } else if (k == "sched.lognorm_mu") train.sched.lognorm_mu = to_d(k, value);
  else if (k == "sched.lognorm_sigma") train.sched.lognorm_sigma = to_d(k, value);
  // [eval]
  else if (k == "eval.steps") {
    eval.step_counts.clear();
    std::stringstream ss(value);
    std::string tok;
    while (std::getline(ss, tok, ','))
      eval.step_counts.push_back(static_cast<int>(to_i(k, trim(tok))));
    if (eval.step_counts.empty()) throw ConfigError("config: eval.steps must not be empty");
  } else if (k == "eval.seed") eval.seed = to_u(k, value);
  else throw ConfigError("config: unknown key '" + k + "'");
}

ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t.front() == '[' && t.back() == ']') {
      section = t.substr(1, t.size() - 2);
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: line " + std::to_string(lineno) + " is not key=value: '" + t + "'");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (section.empty()) throw ConfigError("config: key '" + key + "' outside any [section]");
    cfg.set(section + "." + key, value);
  }
  // conditioning channel follows the flow variant
  cfg.net.condition_lr = cfg.train.flow_variant.kind != FlowKind::sr_flow;
  cfg.eval.shift_s = cfg.train.sched.shift_s;
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("config: cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_config_text(ss.str());
}

std::string ExperimentConfig::serialize() const {
  std::ostringstream os;
  os << "[corpus]\n"
     << "train_count=" << corpus_train << "\nval_count=" << corpus_val << "\nsize=" << corpus_size << "\n"
     << "[degrade]\n"
     << "scale=" << degrade.scale << "\nblur_sigma_lo=" << degrade.blur_sigma_lo
     << "\nblur_sigma_hi=" << degrade.blur_sigma_hi << "\nnoise_sigma_lo=" << degrade.noise_sigma_lo
     << "\nnoise_sigma_hi=" << degrade.noise_sigma_hi << "\nseed=" << degrade.seed << "\n"
     << "[net]\n"
     << "base_channels=" << net.base_channels << "\ndepth=" << net.depth
     << "\ntime_embed_dim=" << net.time_embed_dim << "\n"
     << "[train]\n"
     << "stage1_steps=" << stage1_steps << "\nstage2_steps=" << stage2_steps << "\nbatch=" << train.batch
     << "\nlr=" << train.lr << "\nema_mu=" << train.ema_mu << "\nlambda_p=" << train.weights.lambda_p
     << "\nlambda_cd=" << train.weights.lambda_cd << "\nlambda_adv=" << train.weights.lambda_adv
     << "\nflow_variant=" << flow_kind_name(train.flow_variant.kind) << "\nkappa=" << train.flow_variant.kappa
     << "\nobjective="
     << (train.objective == Objective::cd ? "cd" : train.objective == Objective::hr ? "hr" : "hrcd")
     << "\npairing="
     << (train.pairing == Pairing::fast_slow ? "fast_slow"
                                             : train.pairing == Pairing::n_interval ? "n_interval" : "slow_only")
     << "\nn_interval=" << train.n_interval << "\nhr_perceptual=" << (train.hr_perceptual ? "true" : "false")
     << "\nadv_enabled=" << (train.adv_enabled ? "true" : "false") << "\nseed=" << train.seed
     << "\ncheckpoint_every=" << train.checkpoint_every << "\neval_every=" << train.eval_every << "\n"
     << "[sched]\n"
     << "fast_steps=" << train.sched.fast_steps << "\nslow_steps=" << train.sched.slow_steps
     << "\nshift_s=" << train.sched.shift_s << "\ntime_sampling="
     << (train.sched.time_sampling == TimeSampling::uniform ? "uniform" : "lognorm")
     << "\nlognorm_mu=" << train.sched.lognorm_mu << "\nlognorm_sigma=" << train.sched.lognorm_sigma << "\n"
     << "[eval]\n"
     << "steps=";
  for (size_t i = 0; i < eval.step_counts.size(); ++i) os << (i ? "," : "") << eval.step_counts[i];
  os << "\nseed=" << eval.seed << "\n";
  return os.str();
}

}  // namespace fsr
