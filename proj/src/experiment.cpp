#include "unijdot/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "unijdot/checkpoint.hpp"
#include "unijdot/errors.hpp"
#include "unijdot/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace unijdot {

// ---------------------------------------------------------------------------
// config parsing
// ---------------------------------------------------------------------------

namespace {

void reject_unknown_keys(const json& obj, const std::string& path,
                         std::initializer_list<const char*> allowed) {
  for (const auto& [key, _] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed)
      if (key == a) {
        ok = true;
        break;
      }
    if (!ok)
      throw ConfigError("unknown config key '" + path + "." + key + "'");
  }
}

template <class T>
void read_field(const json& obj, const std::string& path, const char* key,
                T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config field '" + path + "." + key +
                      "' has the wrong type");
  }
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }

  ExperimentConfig cfg;
  reject_unknown_keys(j, "$",
                      {"scenario", "model", "train", "ot", "threshold",
                       "anchors", "align", "ablation", "eval", "seeds",
                       "out_dir"});

  if (j.contains("scenario")) {
    const auto& s = j["scenario"];
    reject_unknown_keys(s, "scenario",
                        {"synth", "source_dir", "target_dir", "source_private",
                         "target_private"});
    if (s.contains("synth")) {
      const auto& sy = s["synth"];
      reject_unknown_keys(
          sy, "scenario.synth",
          {"classes", "channels", "t", "per_class", "train_fraction", "amp_lo",
           "amp_hi", "phase_jitter", "source_noise", "target_noise", "seed"});
      cfg.scenario.synthetic = true;
      read_field(sy, "scenario.synth", "classes", cfg.scenario.synth.num_classes);
      read_field(sy, "scenario.synth", "channels", cfg.scenario.synth.channels);
      read_field(sy, "scenario.synth", "t", cfg.scenario.synth.t);
      read_field(sy, "scenario.synth", "per_class", cfg.scenario.synth.per_class);
      read_field(sy, "scenario.synth", "train_fraction",
                 cfg.scenario.synth.train_fraction);
      read_field(sy, "scenario.synth", "amp_lo", cfg.scenario.synth.amp_lo);
      read_field(sy, "scenario.synth", "amp_hi", cfg.scenario.synth.amp_hi);
      read_field(sy, "scenario.synth", "phase_jitter",
                 cfg.scenario.synth.phase_jitter);
      read_field(sy, "scenario.synth", "source_noise",
                 cfg.scenario.synth.source_noise);
      read_field(sy, "scenario.synth", "target_noise",
                 cfg.scenario.synth.target_noise);
      read_field(sy, "scenario.synth", "seed", cfg.scenario.synth.seed);
    }
    if (s.contains("source_dir") || s.contains("target_dir")) {
      if (s.contains("synth"))
        throw ConfigError(
            "scenario: 'synth' and dataset directories are exclusive");
      cfg.scenario.synthetic = false;
      read_field(s, "scenario", "source_dir", cfg.scenario.source_dir);
      read_field(s, "scenario", "target_dir", cfg.scenario.target_dir);
      if (cfg.scenario.source_dir.empty() || cfg.scenario.target_dir.empty())
        throw ConfigError("scenario: both source_dir and target_dir required");
    }
    read_field(s, "scenario", "source_private", cfg.scenario.source_private);
    read_field(s, "scenario", "target_private", cfg.scenario.target_private);
    if (cfg.scenario.source_private == cfg.scenario.target_private)
      throw ConfigError("scenario: private classes must differ");
  }

  if (j.contains("model")) {
    const auto& m = j["model"];
    reject_unknown_keys(m, "model",
                        {"conv_channels", "conv_kernels", "fourier",
                         "fourier_modes", "fourier_out", "fourier_smoothing"});
    read_field(m, "model", "conv_channels", cfg.model.conv_channels);
    read_field(m, "model", "conv_kernels", cfg.model.conv_kernels);
    read_field(m, "model", "fourier", cfg.model.fourier);
    read_field(m, "model", "fourier_modes", cfg.model.fourier_modes);
    read_field(m, "model", "fourier_out", cfg.model.fourier_out);
    read_field(m, "model", "fourier_smoothing", cfg.model.fourier_smoothing);
    if (cfg.model.conv_channels.size() != cfg.model.conv_kernels.size())
      throw ConfigError("model: conv_channels and conv_kernels differ in length");
  }

  if (j.contains("train")) {
    const auto& t = j["train"];
    reject_unknown_keys(t, "train",
                        {"lambda", "mu", "learning_rate", "momentum",
                         "source_batch", "target_batch", "epochs",
                         "pretrain_epochs"});
    read_field(t, "train", "lambda", cfg.train.lambda);
    read_field(t, "train", "mu", cfg.train.mu);
    read_field(t, "train", "learning_rate", cfg.train.learning_rate);
    read_field(t, "train", "momentum", cfg.train.momentum);
    read_field(t, "train", "source_batch", cfg.train.source_batch);
    read_field(t, "train", "target_batch", cfg.train.target_batch);
    read_field(t, "train", "epochs", cfg.train.epochs);
    read_field(t, "train", "pretrain_epochs", cfg.train.pretrain_epochs);
    if (!(cfg.train.lambda > 0.0 && cfg.train.lambda <= 1.0))
      throw ConfigError("train.lambda must lie in (0, 1]");
    if (cfg.train.mu < 0) throw ConfigError("train.mu must be >= 0");
  }

  if (j.contains("ot")) {
    const auto& o = j["ot"];
    reject_unknown_keys(o, "ot", {"epsilon", "max_iters", "tol", "tau1", "tau2"});
    read_field(o, "ot", "epsilon", cfg.ot.epsilon);
    read_field(o, "ot", "max_iters", cfg.ot.max_iters);
    read_field(o, "ot", "tol", cfg.ot.tol);
    read_field(o, "ot", "tau1", cfg.ot.tau1);
    read_field(o, "ot", "tau2", cfg.ot.tau2);
    if (cfg.ot.epsilon <= 0) throw ConfigError("ot.epsilon must be > 0");
    if (cfg.ot.tau1 <= 0 || cfg.ot.tau2 <= 0)
      throw ConfigError("ot.tau1 and ot.tau2 must be > 0");
  }

  if (j.contains("threshold")) {
    const auto& t = j["threshold"];
    reject_unknown_keys(t, "threshold", {"method", "bins"});
    std::string method = to_string(cfg.threshold_method);
    read_field(t, "threshold", "method", method);
    try {
      cfg.threshold_method = threshold_method_from_string(method);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    read_field(t, "threshold", "bins", cfg.threshold_bins);
  }

  if (j.contains("anchors")) {
    const auto& a = j["anchors"];
    reject_unknown_keys(a, "anchors", {"count", "momentum", "memory_per_class"});
    read_field(a, "anchors", "count", cfg.num_anchors);
    read_field(a, "anchors", "momentum", cfg.anchor_momentum);
    read_field(a, "anchors", "memory_per_class", cfg.memory_per_class);
    if (cfg.num_anchors < 1) throw ConfigError("anchors.count must be >= 1");
  }

  if (j.contains("align")) {
    const auto& a = j["align"];
    reject_unknown_keys(a, "align",
                        {"onehot_label_cost", "softmax_unknown_term"});
    read_field(a, "align", "onehot_label_cost", cfg.align.onehot_label_cost);
    read_field(a, "align", "softmax_unknown_term",
               cfg.align.softmax_unknown_term);
  }

  if (j.contains("ablation")) {
    const auto& a = j["ablation"];
    reject_unknown_keys(a, "ablation",
                        {"auto_threshold", "fixed_tau", "joint_decision",
                         "fourier"});
    read_field(a, "ablation", "auto_threshold", cfg.ablation.auto_threshold);
    read_field(a, "ablation", "joint_decision", cfg.ablation.joint_decision);
    read_field(a, "ablation", "fourier", cfg.ablation.fourier);
    if (!cfg.ablation.auto_threshold && !a.contains("fixed_tau"))
      throw ConfigError(
          "ablation: fixed_tau is required when auto_threshold is off");
    read_field(a, "ablation", "fixed_tau", cfg.ablation.fixed_tau);
  }

  if (j.contains("eval")) {
    const auto& e = j["eval"];
    reject_unknown_keys(e, "eval", {"mode", "validation_batch"});
    std::string mode = to_string(cfg.eval_mode);
    read_field(e, "eval", "mode", mode);
    try {
      cfg.eval_mode = inference_mode_from_string(mode);
    } catch (const std::invalid_argument& ex) {
      throw ConfigError(ex.what());
    }
    read_field(e, "eval", "validation_batch", cfg.validation_batch);
  }

  if (j.contains("seeds")) {
    try {
      cfg.seeds = j["seeds"].get<std::vector<uint64_t>>();
    } catch (const json::exception&) {
      throw ConfigError("seeds must be an array of integers");
    }
    if (cfg.seeds.empty()) throw ConfigError("seeds must not be empty");
  }
  read_field(j, "$", "out_dir", cfg.out_dir);

  cfg.align.mu = cfg.train.mu;
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file: " + path);
  std::string text((std::istreambuf_iterator<char>(f)),
                   std::istreambuf_iterator<char>());
  return parse_experiment_config(text);
}

std::string dump_experiment_config(const ExperimentConfig& cfg) {
  json j;
  if (cfg.scenario.synthetic) {
    j["scenario"]["synth"] = {
        {"classes", cfg.scenario.synth.num_classes},
        {"channels", cfg.scenario.synth.channels},
        {"t", cfg.scenario.synth.t},
        {"per_class", cfg.scenario.synth.per_class},
        {"train_fraction", cfg.scenario.synth.train_fraction},
        {"amp_lo", cfg.scenario.synth.amp_lo},
        {"amp_hi", cfg.scenario.synth.amp_hi},
        {"phase_jitter", cfg.scenario.synth.phase_jitter},
        {"source_noise", cfg.scenario.synth.source_noise},
        {"target_noise", cfg.scenario.synth.target_noise},
        {"seed", cfg.scenario.synth.seed}};
  } else {
    j["scenario"]["source_dir"] = cfg.scenario.source_dir;
    j["scenario"]["target_dir"] = cfg.scenario.target_dir;
  }
  j["scenario"]["source_private"] = cfg.scenario.source_private;
  j["scenario"]["target_private"] = cfg.scenario.target_private;
  j["model"] = {{"conv_channels", cfg.model.conv_channels},
                {"conv_kernels", cfg.model.conv_kernels},
                {"fourier", cfg.model.fourier},
                {"fourier_modes", cfg.model.fourier_modes},
                {"fourier_out", cfg.model.fourier_out},
                {"fourier_smoothing", cfg.model.fourier_smoothing}};
  j["train"] = {{"lambda", cfg.train.lambda},
                {"mu", cfg.train.mu},
                {"learning_rate", cfg.train.learning_rate},
                {"momentum", cfg.train.momentum},
                {"source_batch", cfg.train.source_batch},
                {"target_batch", cfg.train.target_batch},
                {"epochs", cfg.train.epochs},
                {"pretrain_epochs", cfg.train.pretrain_epochs}};
  j["ot"] = {{"epsilon", cfg.ot.epsilon},
             {"max_iters", cfg.ot.max_iters},
             {"tol", cfg.ot.tol},
             {"tau1", cfg.ot.tau1},
             {"tau2", cfg.ot.tau2}};
  j["threshold"] = {{"method", to_string(cfg.threshold_method)},
                    {"bins", cfg.threshold_bins}};
  j["anchors"] = {{"count", cfg.num_anchors},
                  {"momentum", cfg.anchor_momentum},
                  {"memory_per_class", cfg.memory_per_class}};
  j["align"] = {{"onehot_label_cost", cfg.align.onehot_label_cost},
                {"softmax_unknown_term", cfg.align.softmax_unknown_term}};
  j["ablation"] = {{"auto_threshold", cfg.ablation.auto_threshold},
                   {"fixed_tau", cfg.ablation.fixed_tau},
                   {"joint_decision", cfg.ablation.joint_decision},
                   {"fourier", cfg.ablation.fourier}};
  j["eval"] = {{"mode", to_string(cfg.eval_mode)},
               {"validation_batch", cfg.validation_batch}};
  j["seeds"] = cfg.seeds;
  j["out_dir"] = cfg.out_dir;
  return j.dump(2);
}

std::string config_hash(const ExperimentConfig& cfg, uint64_t seed) {
  const std::string text = dump_experiment_config(cfg) + ":" +
                           std::to_string(seed);
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

// ---------------------------------------------------------------------------
// scenario preparation
// ---------------------------------------------------------------------------

ScenarioData prepare_scenario(const ScenarioConfig& cfg) {
  TimeSeriesDataset st, se, tt, te;
  if (cfg.synthetic) {
    auto pair = synth_generate(cfg.synth);
    st = std::move(pair.source_train);
    se = std::move(pair.source_test);
    tt = std::move(pair.target_train);
    te = std::move(pair.target_test);
  } else {
    st = load_dataset((fs::path(cfg.source_dir) / "train").string());
    se = load_dataset((fs::path(cfg.source_dir) / "test").string());
    tt = load_dataset((fs::path(cfg.target_dir) / "train").string());
    te = load_dataset((fs::path(cfg.target_dir) / "test").string());
  }
  ScenarioData data;
  data.scenario = build_unida_scenario(st, se, tt, te, cfg.source_private,
                                       cfg.target_private);
  data.in_channels = data.scenario.source_train.channels();
  data.seq_len = data.scenario.source_train.t();
  data.num_classes = data.scenario.num_source_classes;
  return data;
}

// ---------------------------------------------------------------------------
// checkpoint assembly
// ---------------------------------------------------------------------------

void save_model_state(const std::string& path, const ModelState& state) {
  std::vector<NamedTensor> ts;
  const ModelConfig& mc = state.net.cfg;
  std::vector<float> arch{static_cast<float>(mc.in_channels),
                          static_cast<float>(mc.seq_len),
                          static_cast<float>(mc.num_classes),
                          static_cast<float>(mc.conv_channels.size())};
  for (size_t i = 0; i < mc.conv_channels.size(); ++i) {
    arch.push_back(static_cast<float>(mc.conv_channels[i]));
    arch.push_back(static_cast<float>(mc.conv_kernels[i]));
  }
  arch.push_back(mc.fourier ? 1.f : 0.f);
  arch.push_back(static_cast<float>(mc.fourier_modes));
  arch.push_back(static_cast<float>(mc.fourier_out));
  arch.push_back(mc.fourier_smoothing ? 1.f : 0.f);
  const int64_t arch_len = static_cast<int64_t>(arch.size());
  ts.push_back({"meta.arch", Tensor({arch_len}, std::move(arch))});

  for (size_t i = 0; i < state.net.blocks.size(); ++i) {
    const auto& blk = state.net.blocks[i];
    ts.push_back({"conv" + std::to_string(i) + ".w",
                  Tensor({blk.out_ch, blk.in_ch, blk.k}, blk.w)});
    ts.push_back({"conv" + std::to_string(i) + ".b",
                  Tensor({blk.out_ch}, blk.b)});
  }
  if (state.net.spectral) {
    const auto& s = *state.net.spectral;
    ts.push_back({"spectral.re",
                  Tensor({s.out_channels, s.in_channels, s.modes}, s.w_re)});
    ts.push_back({"spectral.im",
                  Tensor({s.out_channels, s.in_channels, s.modes}, s.w_im)});
  }
  ts.push_back({"classifier.w",
                Tensor({state.net.classifier.out_dim,
                        state.net.classifier.in_dim},
                       state.net.classifier.w)});
  ts.push_back({"classifier.b",
                Tensor({state.net.classifier.out_dim}, state.net.classifier.b)});

  ts.push_back({"memory.meta",
                Tensor({3}, {static_cast<float>(state.memory.num_classes),
                             static_cast<float>(state.memory.dim),
                             static_cast<float>(state.memory.capacity)})});
  for (int k = 0; k < state.memory.num_classes; ++k) {
    ts.push_back({"memory.class" + std::to_string(k),
                  Tensor({state.memory.count(k), state.memory.dim},
                         state.memory.store[k])});
  }
  {
    std::vector<float> cur(state.memory.cursor.begin(),
                           state.memory.cursor.end());
    const int64_t cur_len = static_cast<int64_t>(cur.size());
    ts.push_back({"memory.cursor", Tensor({cur_len}, std::move(cur))});
  }
  ts.push_back({"anchors.centroids",
                Tensor({state.anchors.num_anchors, state.anchors.dim},
                       state.anchors.centroids)});
  ts.push_back({"anchors.momentum",
                Tensor({1}, {state.anchors.momentum})});
  ts.push_back({"meta.last_tau",
                Tensor({1}, {static_cast<float>(state.last_tau)})});
  write_checkpoint(path, ts);
}

ModelState load_model_state(const std::string& path) {
  const auto ts = read_checkpoint(path);
  const Tensor& arch = checkpoint_get(ts, "meta.arch");
  size_t p = 0;
  auto next = [&]() -> float {
    if (p >= arch.data.size())
      throw DataError(DataErrorCode::CorruptCheckpoint,
                      "checkpoint meta.arch too short");
    return arch.data[p++];
  };
  ModelConfig mc;
  mc.in_channels = static_cast<int>(next());
  mc.seq_len = static_cast<int>(next());
  mc.num_classes = static_cast<int>(next());
  const int nblocks = static_cast<int>(next());
  mc.conv_channels.clear();
  mc.conv_kernels.clear();
  for (int i = 0; i < nblocks; ++i) {
    mc.conv_channels.push_back(static_cast<int>(next()));
    mc.conv_kernels.push_back(static_cast<int>(next()));
  }
  mc.fourier = next() != 0.f;
  mc.fourier_modes = static_cast<int>(next());
  mc.fourier_out = static_cast<int>(next());
  mc.fourier_smoothing = next() != 0.f;

  ModelState state{Net::init(mc, 0), {}, {}, 0.5};
  for (size_t i = 0; i < state.net.blocks.size(); ++i) {
    auto& blk = state.net.blocks[i];
    blk.w = checkpoint_get(ts, "conv" + std::to_string(i) + ".w").data;
    blk.b = checkpoint_get(ts, "conv" + std::to_string(i) + ".b").data;
  }
  if (state.net.spectral) {
    state.net.spectral->w_re = checkpoint_get(ts, "spectral.re").data;
    state.net.spectral->w_im = checkpoint_get(ts, "spectral.im").data;
  }
  state.net.classifier.w = checkpoint_get(ts, "classifier.w").data;
  state.net.classifier.b = checkpoint_get(ts, "classifier.b").data;

  const Tensor& mmeta = checkpoint_get(ts, "memory.meta");
  if (mmeta.data.size() != 3)
    throw DataError(DataErrorCode::CorruptCheckpoint,
                    "checkpoint memory.meta malformed");
  state.memory.num_classes = static_cast<int>(mmeta.data[0]);
  state.memory.dim = static_cast<int>(mmeta.data[1]);
  state.memory.capacity = static_cast<int>(mmeta.data[2]);
  state.memory.store.resize(state.memory.num_classes);
  for (int k = 0; k < state.memory.num_classes; ++k)
    state.memory.store[k] =
        checkpoint_get(ts, "memory.class" + std::to_string(k)).data;
  {
    const Tensor& cur = checkpoint_get(ts, "memory.cursor");
    state.memory.cursor.assign(cur.data.begin(), cur.data.end());
  }
  state.memory.initialized = true;

  const Tensor& cen = checkpoint_get(ts, "anchors.centroids");
  state.anchors.num_anchors = static_cast<int>(cen.shape[0]);
  state.anchors.dim = static_cast<int>(cen.shape[1]);
  state.anchors.centroids = cen.data;
  state.anchors.momentum = checkpoint_get(ts, "anchors.momentum").data.at(0);
  state.anchors.decision_anchor = decision_anchor(mc.num_classes);
  state.anchors.initialized = true;

  state.last_tau = checkpoint_get(ts, "meta.last_tau").data.at(0);
  return state;
}

// ---------------------------------------------------------------------------
// training
// ---------------------------------------------------------------------------

namespace {

struct TrainOutput {
  ModelState state;
  double first_loss = 0, final_loss = 0;
  int steps = 0;
};

// feature pass over a whole dataset, batched
std::vector<float> all_features(const Net& net, const Tensor& samples) {
  const int n = static_cast<int>(samples.shape[0]);
  const int d = net.cfg.feature_dim();
  std::vector<float> out;
  out.reserve(static_cast<size_t>(n) * d);
  const int chunk = 256;
  ForwardCache cache;
  for (int start = 0; start < n; start += chunk) {
    const int cnt = std::min(chunk, n - start);
    const float* x = samples.data.data() +
                     static_cast<size_t>(start) * samples.shape[1] *
                         samples.shape[2];
    feature_forward(net, x, cnt, cache);
    out.insert(out.end(), cache.features.begin(), cache.features.end());
  }
  return out;
}

ModelConfig effective_model_config(const ExperimentConfig& cfg,
                                   const ScenarioData& data) {
  ModelConfig mc = cfg.model;
  mc.in_channels = data.in_channels;
  mc.seq_len = data.seq_len;
  mc.num_classes = data.num_classes;
  mc.fourier = cfg.model.fourier && cfg.ablation.fourier;
  return mc;
}

TrainOutput train_state(const ExperimentConfig& cfg, uint64_t seed,
                        const ScenarioData& data, std::ostream* log) {
  const auto& sc = data.scenario;
  const ModelConfig mc = effective_model_config(cfg, data);
  mc.validate();
  cfg.train.validate();

  TrainOutput out;
  out.state.net = Net::init(mc, seed);
  Net& net = out.state.net;

  const int ns = sc.source_train.n();
  const int nt = sc.target_train.n();
  const int k = mc.num_classes;

  // source-only pretraining
  for (int epoch = 0; epoch < cfg.train.pretrain_epochs; ++epoch) {
    const auto batches = batch_iter(ns, cfg.train.source_batch,
                                    Rng::mix(seed, 0x50), epoch, true);
    for (const auto& idx : batches) {
      const auto xs = gather_samples(sc.source_train.samples, idx);
      std::vector<int> ys(idx.size());
      for (size_t i = 0; i < idx.size(); ++i)
        ys[i] = sc.source_train.labels[idx[i]];
      ForwardCache cache;
      feature_forward(net, xs.data(), static_cast<int>(idx.size()), cache);
      classifier_forward(net, cache);
      std::vector<float> grad;
      cross_entropy(cache.logits, ys, k, &grad);
      zero_grads(net);
      net_backward(net, xs.data(), cache, {}, grad);
      optimizer_step(net, cfg.train.learning_rate, cfg.train.momentum);
    }
  }

  // classwise memory from the pretrained feature space
  {
    const auto feats = all_features(net, sc.source_train.samples);
    out.state.memory =
        memory_init(feats, ns, mc.feature_dim(), sc.source_train.labels, k,
                    cfg.memory_per_class, Rng::mix(seed, 0x51));
  }
  // anchors from all target feature vectors
  {
    const auto feats = all_features(net, sc.target_train.samples);
    out.state.anchors =
        init_anchors(feats, nt, mc.feature_dim(), cfg.num_anchors, k,
                     cfg.anchor_momentum, Rng::mix(seed, 0x52));
  }

  PseudoLabelConfig plc;
  plc.method = cfg.threshold_method;
  plc.bin_count = cfg.effective_bins();
  plc.joint_decision = cfg.ablation.joint_decision;
  const bool use_auto = cfg.ablation.auto_threshold;
  const double fixed_tau = cfg.ablation.fixed_tau;

  out.state.last_tau = use_auto ? 0.5 : fixed_tau;
  int step = 0;
  const UnlabeledView target_view = sc.target_train_view();
  for (int epoch = 0; epoch < cfg.train.epochs; ++epoch) {
    const auto sb = batch_iter(ns, cfg.train.source_batch,
                               Rng::mix(seed, 0x60), epoch, true);
    const auto tb = batch_iter(nt, cfg.train.target_batch,
                               Rng::mix(seed, 0x61), epoch, true);
    const size_t nsteps = std::min(sb.size(), tb.size());
    for (size_t bi = 0; bi < nsteps; ++bi, ++step) {
      const auto xs = gather_samples(sc.source_train.samples, sb[bi]);
      std::vector<int> ys(sb[bi].size());
      for (size_t i = 0; i < sb[bi].size(); ++i)
        ys[i] = sc.source_train.labels[sb[bi][i]];
      const auto xt = gather_samples(*target_view.samples, tb[bi]);

      auto rep = training_step(net, xs.data(), ys,
                               static_cast<int>(sb[bi].size()), xt.data(),
                               static_cast<int>(tb[bi].size()),
                               out.state.memory, out.state.anchors, cfg.train,
                               cfg.ot, cfg.align, plc,
                               use_auto ? nullptr : &fixed_tau);
      rep.step = step;
      if (step == 0) out.first_loss = rep.combined_loss;
      out.final_loss = rep.combined_loss;
      if (!rep.degenerate_threshold) out.state.last_tau = rep.tau;
      if (log) {
        json line{{"step", rep.step},
                  {"tau", rep.tau},
                  {"degenerate", rep.degenerate_threshold},
                  {"common", rep.n_common},
                  {"unknown", rep.n_unknown},
                  {"ce_loss", rep.ce_loss},
                  {"ot_loss", rep.ot_loss},
                  {"loss", rep.combined_loss},
                  {"ot_converged", rep.ot_converged},
                  {"mass", rep.transported_mass}};
        *log << line.dump() << "\n";
      }
    }
  }
  out.steps = step;
  return out;
}

double pick_eval_tau(const ExperimentConfig& cfg, const ModelState& st,
                     const ScenarioData& data, uint64_t seed) {
  if (!cfg.ablation.auto_threshold) return cfg.ablation.fixed_tau;
  if (cfg.eval_mode == InferenceMode::LastTrainThreshold) return st.last_tau;
  const auto& target = data.scenario.target_train;
  const int vb = std::min(cfg.validation_batch, target.n());
  const auto batches = batch_iter(target.n(), vb, Rng::mix(seed, 0x70), 0,
                                  false);
  const auto x = gather_samples(target.samples, batches.front());
  PseudoLabelConfig plc;
  plc.method = cfg.threshold_method;
  plc.bin_count = cfg.effective_bins();
  plc.joint_decision = cfg.ablation.joint_decision;
  return inference_threshold(st.net, st.memory, InferenceMode::ValidationBatch,
                             st.last_tau, x.data(),
                             static_cast<int>(batches.front().size()), plc);
}

}  // namespace

EvalReport evaluate_at_tau(const ExperimentConfig& cfg, const ModelState& st,
                           const ScenarioData& data, double tau) {
  EvalReport rep = evaluate(st.net, st.memory, data.scenario.target_test, tau,
                            cfg.ablation.joint_decision);
  rep.mode = cfg.eval_mode;
  return rep;
}

RunResult run_experiment(const ExperimentConfig& cfg, uint64_t seed,
                         const std::string& out_dir) {
  const ScenarioData data = prepare_scenario(cfg.scenario);

  RunResult res;
  std::optional<std::ofstream> log_file;
  fs::path run_dir;
  if (!out_dir.empty()) {
    run_dir = fs::path(out_dir) / config_hash(cfg, seed);
    fs::create_directories(run_dir);
    res.run_dir = run_dir.string();
    std::ofstream cf(run_dir / "config.json");
    cf << dump_experiment_config(cfg) << "\n";
    log_file.emplace(run_dir / "train_log.jsonl");
  }

  auto out = train_state(cfg, seed, data,
                         log_file ? &*log_file : nullptr);
  res.last_tau = out.state.last_tau;
  res.first_loss = out.first_loss;
  res.final_loss = out.final_loss;
  res.steps = out.steps;

  const double tau = pick_eval_tau(cfg, out.state, data, seed);
  res.report = evaluate_at_tau(cfg, out.state, data, tau);

  if (!out_dir.empty()) {
    save_model_state((run_dir / "checkpoint.bin").string(), out.state);
    write_report_json((run_dir / "report.json").string(), res.report);
    write_report_csv((run_dir / "report.csv").string(), res.report);
  }
  return res;
}

// ---------------------------------------------------------------------------
// threshold sweep and ablation
// ---------------------------------------------------------------------------

SweepResult sweep_threshold(const ExperimentConfig& cfg,
                            const std::vector<double>& grid, uint64_t seed,
                            const std::string& out_dir) {
  if (grid.empty()) throw ConfigError("sweep: empty threshold grid");
  const ScenarioData data = prepare_scenario(cfg.scenario);
  auto out = train_state(cfg, seed, data, nullptr);

  SweepResult sweep;
  sweep.auto_tau = pick_eval_tau(cfg, out.state, data, seed);
  sweep.auto_h_score =
      evaluate_at_tau(cfg, out.state, data, sweep.auto_tau).h_score;

  sweep.best_h = -1;
  for (double tau : grid) {
    const double h = evaluate_at_tau(cfg, out.state, data, tau).h_score;
    sweep.points.push_back({tau, h});
    if (h > sweep.best_h) {
      sweep.best_h = h;
      sweep.best_tau = tau;
    }
  }
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_sweep_csv((fs::path(out_dir) / "sweep.csv").string(), sweep);
    save_model_state((fs::path(out_dir) / "checkpoint.bin").string(),
                     out.state);
  }
  return sweep;
}

void write_sweep_csv(const std::string& path, const SweepResult& sweep) {
  std::ofstream f(path);
  f << "tau,h_score,is_auto\n";
  for (const auto& p : sweep.points)
    f << p.tau << "," << p.h_score << ",0\n";
  f << sweep.auto_tau << "," << sweep.auto_h_score << ",1\n";
}

AblationResult run_ablation(const ExperimentConfig& cfg,
                            const std::string& out_dir) {
  // oracle fixed threshold for the no-auto rows, from a sweep on the full
  // method
  std::vector<double> grid;
  for (int i = 1; i < 20; ++i) grid.push_back(i * 0.05);
  ExperimentConfig full = cfg;
  full.ablation = AblationToggles{};
  const auto sweep = sweep_threshold(full, grid, cfg.seeds.front(), "");

  AblationResult res;
  res.oracle_fixed_tau = sweep.best_tau;

  const bool flags[8][3] = {{true, true, true},   {true, true, false},
                            {true, false, true},  {true, false, false},
                            {false, true, true},  {false, true, false},
                            {false, false, true}, {false, false, false}};
  for (const auto& f : flags) {
    AblationRow row;
    row.toggles.auto_threshold = f[0];
    row.toggles.joint_decision = f[1];
    row.toggles.fourier = f[2];
    row.toggles.fixed_tau = res.oracle_fixed_tau;
    row.full_method = f[0] && f[1] && f[2];

    ExperimentConfig ec = cfg;
    ec.ablation = row.toggles;
    double sum = 0;
    for (uint64_t seed : cfg.seeds) {
      const auto run = run_experiment(ec, seed, out_dir);
      row.per_seed_h.push_back(run.report.h_score);
      sum += run.report.h_score;
    }
    row.mean_h = sum / static_cast<double>(cfg.seeds.size());
    res.rows.push_back(std::move(row));
  }

  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_ablation_csv((fs::path(out_dir) / "ablation.csv").string(), res);
    write_ablation_markdown((fs::path(out_dir) / "ablation.md").string(), res);
  }
  return res;
}

void write_ablation_csv(const std::string& path, const AblationResult& res) {
  std::ofstream f(path);
  f << "auto_threshold,joint_decision,fourier,mean_h,label\n";
  for (const auto& row : res.rows)
    f << row.toggles.auto_threshold << "," << row.toggles.joint_decision << ","
      << row.toggles.fourier << "," << row.mean_h << ","
      << (row.full_method ? "full method" : "") << "\n";
}

void write_ablation_markdown(const std::string& path,
                             const AblationResult& res) {
  std::ofstream f(path);
  f << "| Auto-Thresh. | Joint Decision | Fourier | Mean H |\n";
  f << "|---|---|---|---|\n";
  for (const auto& row : res.rows) {
    auto mark = [](bool b) { return b ? "yes" : "no"; };
    f << "| " << mark(row.toggles.auto_threshold) << " | "
      << mark(row.toggles.joint_decision) << " | "
      << mark(row.toggles.fourier) << " | " << row.mean_h
      << (row.full_method ? " (full method)" : "") << " |\n";
  }
  f << "\nFixed threshold for no-auto rows: " << res.oracle_fixed_tau << "\n";
}

}  // namespace unijdot
