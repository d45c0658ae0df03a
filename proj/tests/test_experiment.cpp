#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "unijdot/errors.hpp"
#include "unijdot/experiment.hpp"
#include "unijdot/rng.hpp"

using namespace unijdot;
namespace fs = std::filesystem;

namespace {

// small fast configuration shared by the integration tests
ExperimentConfig tiny_config() {
  ExperimentConfig cfg;
  cfg.scenario.synth.per_class = 30;
  cfg.scenario.synth.t = 32;
  cfg.scenario.synth.channels = 2;
  cfg.scenario.synth.seed = 5;
  cfg.model.conv_channels = {8, 16};
  cfg.model.conv_kernels = {5, 3};
  cfg.model.fourier_modes = 6;
  cfg.model.fourier_out = 2;
  cfg.train.source_batch = 16;
  cfg.train.target_batch = 16;
  cfg.train.pretrain_epochs = 3;
  cfg.train.epochs = 2;
  cfg.train.learning_rate = 0.02;
  cfg.memory_per_class = 16;
  cfg.validation_batch = 64;
  return cfg;
}

}  // namespace

TEST_CASE("config parsing applies defaults and validates strictly") {
  const auto cfg = parse_experiment_config("{}");
  CHECK(cfg.train.lambda == 0.5);
  CHECK(cfg.ot.epsilon == 0.01);
  CHECK(cfg.threshold_method == ThresholdMethod::Yen);
  CHECK(cfg.scenario.synthetic);

  CHECK_THROWS_AS(parse_experiment_config("{ \"bogus\": 1 }"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config("{ \"train\": { \"lambda\": 2 } }"),
                  ConfigError);
  CHECK_THROWS_AS(parse_experiment_config("{ \"train\": { \"lambda\": \"x\" } }"),
                  ConfigError);
  CHECK_THROWS_AS(parse_experiment_config("not json"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config("{ \"seeds\": [] }"), ConfigError);
  CHECK_THROWS_AS(
      parse_experiment_config("{ \"threshold\": { \"method\": \"bogus\" } }"),
      ConfigError);

  // unknown-key errors carry the offending path
  try {
    parse_experiment_config("{ \"ot\": { \"epsilonn\": 0.5 } }");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("ot.epsilonn") != std::string::npos);
  }

  // fixed tau is mandatory once auto-thresholding is disabled
  CHECK_THROWS_AS(parse_experiment_config(
                      "{ \"ablation\": { \"auto_threshold\": false } }"),
                  ConfigError);
  const auto ok = parse_experiment_config(
      "{ \"ablation\": { \"auto_threshold\": false, \"fixed_tau\": 0.6 } }");
  CHECK(ok.ablation.fixed_tau == 0.6);
}

TEST_CASE("config dump parses back to the same hash") {
  auto cfg = tiny_config();
  cfg.seeds = {3, 4};
  const auto text = dump_experiment_config(cfg);
  const auto back = parse_experiment_config(text);
  CHECK(config_hash(cfg, 1) == config_hash(back, 1));
  CHECK(config_hash(cfg, 1) != config_hash(cfg, 2));
}

TEST_CASE("synthetic scenario feeds a coherent model shape") {
  const auto data = prepare_scenario(tiny_config().scenario);
  CHECK(data.num_classes == 5);
  CHECK(data.in_channels == 2);
  CHECK(data.seq_len == 32);
  // label-set partition: common plus one private on each side
  CHECK(data.scenario.common_labels.size() == 4);
  CHECK(data.scenario.source_private_labels.size() == 1);
  CHECK(data.scenario.target_private_labels.size() == 1);
}

TEST_CASE("runs replay bit-identically per seed") {
  auto cfg = tiny_config();
  const auto r1 = run_experiment(cfg, 11, "");
  const auto r2 = run_experiment(cfg, 11, "");
  CHECK(r1.final_loss == r2.final_loss);
  CHECK(r1.first_loss == r2.first_loss);
  CHECK(r1.last_tau == r2.last_tau);
  CHECK(r1.report.h_score == r2.report.h_score);
}

TEST_CASE("run artifacts land in a content-addressed directory") {
  auto cfg = tiny_config();
  const std::string out = "/tmp/unijdot_exp_test";
  fs::remove_all(out);
  const auto res = run_experiment(cfg, 1, out);
  CHECK(res.run_dir.find(config_hash(cfg, 1)) != std::string::npos);
  CHECK(fs::exists(fs::path(res.run_dir) / "config.json"));
  CHECK(fs::exists(fs::path(res.run_dir) / "checkpoint.bin"));
  CHECK(fs::exists(fs::path(res.run_dir) / "train_log.jsonl"));
  CHECK(fs::exists(fs::path(res.run_dir) / "report.json"));
  CHECK(fs::exists(fs::path(res.run_dir) / "report.csv"));

  // checkpoint state round trip: reloading reproduces the evaluation
  const auto state =
      load_model_state((fs::path(res.run_dir) / "checkpoint.bin").string());
  const auto data = prepare_scenario(cfg.scenario);
  const auto rep =
      evaluate_at_tau(cfg, state, data, res.report.tau_used);
  CHECK(rep.h_score == doctest::Approx(res.report.h_score).epsilon(1e-9));
  // the threshold ships as a 32-bit float
  CHECK(state.last_tau == doctest::Approx(res.last_tau).epsilon(1e-6));
  fs::remove_all(out);
}

TEST_CASE("model state survives the checkpoint container") {
  auto cfg = tiny_config();
  const auto data = prepare_scenario(cfg.scenario);
  // train nothing: just build a state and round-trip it
  ModelConfig mc = cfg.model;
  mc.in_channels = data.in_channels;
  mc.seq_len = data.seq_len;
  mc.num_classes = data.num_classes;
  ModelState st{Net::init(mc, 3), {}, {}, 0.625};
  Rng rng(5);
  const int d = mc.feature_dim();
  std::vector<float> feats(static_cast<size_t>(10) * d);
  for (auto& v : feats) v = static_cast<float>(rng.uniform(-1, 1));
  std::vector<int> labels(10);
  for (int i = 0; i < 10; ++i) labels[i] = i % mc.num_classes;
  st.memory = memory_init(feats, 10, d, labels, mc.num_classes, 4, 0);
  st.anchors = init_anchors(feats, 10, d, 3, mc.num_classes, 0.1f, 0);

  const std::string path = "/tmp/unijdot_state_test.bin";
  save_model_state(path, st);
  const auto back = load_model_state(path);
  CHECK(back.net.cfg.num_classes == mc.num_classes);
  CHECK(back.net.blocks[0].w == st.net.blocks[0].w);
  CHECK(back.net.classifier.w == st.net.classifier.w);
  REQUIRE(back.net.spectral.has_value());
  CHECK(back.net.spectral->w_re == st.net.spectral->w_re);
  CHECK(back.memory.store == st.memory.store);
  CHECK(back.memory.cursor == st.memory.cursor);
  CHECK(back.anchors.centroids == st.anchors.centroids);
  CHECK(back.last_tau == doctest::Approx(0.625));
  fs::remove(path);
}

TEST_CASE("lambda one reduces the step to pure cross entropy") {
  auto cfg = tiny_config();
  const auto data = prepare_scenario(cfg.scenario);
  ModelConfig mc = cfg.model;
  mc.in_channels = data.in_channels;
  mc.seq_len = data.seq_len;
  mc.num_classes = data.num_classes;

  const auto& sc = data.scenario;
  const int ns = 16, nt = 16;
  std::vector<int> sidx(ns), tidx(nt);
  for (int i = 0; i < ns; ++i) sidx[i] = i;
  for (int i = 0; i < nt; ++i) tidx[i] = i;
  const auto xs = gather_samples(sc.source_train.samples, sidx);
  const auto xt = gather_samples(sc.target_train.samples, tidx);
  std::vector<int> ys(ns);
  for (int i = 0; i < ns; ++i) ys[i] = sc.source_train.labels[i];

  auto prime = [&](Net& net, ClassMemory& mem, AnchorSet& anchors) {
    net = Net::init(mc, 21);
    const int d = mc.feature_dim();
    ForwardCache cache;
    feature_forward(net, xs.data(), ns, cache);
    mem = memory_init(cache.features, ns, d, ys, mc.num_classes, 8, 0);
    feature_forward(net, xt.data(), nt, cache);
    anchors = init_anchors(cache.features, nt, d, 3, mc.num_classes, 0.1f, 0);
  };

  Net net_a;
  ClassMemory mem_a;
  AnchorSet anch_a;
  prime(net_a, mem_a, anch_a);
  TrainConfig tc = cfg.train;
  tc.lambda = 1.0;
  PseudoLabelConfig plc;
  plc.bin_count = 32;
  const auto rep = training_step(net_a, xs.data(), ys, ns, xt.data(), nt,
                                 mem_a, anch_a, tc, cfg.ot, cfg.align, plc);
  CHECK(rep.ot_loss == 0.0);

  // reference: a manual pure-CE step on an identically primed model
  Net net_b;
  ClassMemory mem_b;
  AnchorSet anch_b;
  prime(net_b, mem_b, anch_b);
  ForwardCache cache;
  feature_forward(net_b, xs.data(), ns, cache);
  classifier_forward(net_b, cache);
  std::vector<float> grad;
  cross_entropy(cache.logits, ys, mc.num_classes, &grad);
  zero_grads(net_b);
  net_backward(net_b, xs.data(), cache, {}, grad);
  optimizer_step(net_b, tc.learning_rate, tc.momentum);

  for (size_t i = 0; i < net_a.blocks.size(); ++i) {
    CHECK(net_a.blocks[i].w == net_b.blocks[i].w);
    CHECK(net_a.blocks[i].b == net_b.blocks[i].b);
  }
  CHECK(net_a.classifier.w == net_b.classifier.w);
}

TEST_CASE("an all-common batch runs the degenerate block path") {
  auto cfg = tiny_config();
  const auto data = prepare_scenario(cfg.scenario);
  ModelConfig mc = cfg.model;
  mc.in_channels = data.in_channels;
  mc.seq_len = data.seq_len;
  mc.num_classes = data.num_classes;
  auto net = Net::init(mc, 31);

  const auto& sc = data.scenario;
  const int ns = 8;
  std::vector<int> sidx(ns);
  for (int i = 0; i < ns; ++i) sidx[i] = i;
  const auto xs = gather_samples(sc.source_train.samples, sidx);
  std::vector<int> ys(ns);
  for (int i = 0; i < ns; ++i) ys[i] = sc.source_train.labels[i];

  const int d = mc.feature_dim();
  ForwardCache cache;
  feature_forward(net, xs.data(), ns, cache);
  auto mem = memory_init(cache.features, ns, d, ys, mc.num_classes, 8, 0);
  auto anchors = init_anchors(cache.features, ns, d, 2, mc.num_classes, 0.1f, 0);

  // an all-identical target batch degenerates the threshold -> all common
  std::vector<float> xt;
  for (int i = 0; i < 8; ++i)
    xt.insert(xt.end(), xs.begin(), xs.begin() + mc.in_channels * mc.seq_len);
  PseudoLabelConfig plc;
  plc.bin_count = 16;
  const auto rep = training_step(net, xs.data(), ys, ns, xt.data(), 8, mem,
                                 anchors, cfg.train, cfg.ot, cfg.align, plc);
  CHECK(rep.degenerate_threshold);
  CHECK(rep.n_unknown == 0);
  CHECK(rep.n_common == 8);
  CHECK(std::isfinite(rep.combined_loss));
}

TEST_CASE("adaptation steps cut the combined loss on the synthetic scenario") {
  auto cfg = tiny_config();
  cfg.scenario.synth.per_class = 60;
  cfg.train.pretrain_epochs = 4;
  cfg.train.epochs = 14;  // ~14 steps/epoch at batch 16: ~200 steps
  const auto res = run_experiment(cfg, 2, "");
  CHECK(res.steps >= 150);
  CHECK(res.final_loss < 0.5 * res.first_loss);
}

TEST_CASE("a source-only model transfers when there is no shift") {
  auto cfg = tiny_config();
  cfg.scenario.synth.per_class = 100;
  cfg.scenario.synth.amp_lo = cfg.scenario.synth.amp_hi = 1.0;
  cfg.scenario.synth.phase_jitter = 0.0;
  cfg.scenario.synth.target_noise = cfg.scenario.synth.source_noise;
  cfg.train.pretrain_epochs = 15;
  cfg.train.epochs = 0;
  cfg.train.learning_rate = 0.1;

  const auto data = prepare_scenario(cfg.scenario);
  const auto st = [&] {
    // train via the runner, reusing its pretraining path
    const auto res = run_experiment(cfg, 7, "/tmp/unijdot_noshift");
    return load_model_state(
        (fs::path(res.run_dir) / "checkpoint.bin").string());
  }();

  // plain argmax accuracy on the common target test samples at tau 0
  const auto rep = evaluate_at_tau(cfg, st, data, 0.0);
  REQUIRE(rep.a_common.has_value());
  CHECK(*rep.a_common > 0.95);
  fs::remove_all("/tmp/unijdot_noshift");
}
