#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "rose/error.hpp"
#include "rose/trainer.hpp"

using namespace rose;
namespace fs = std::filesystem;

namespace {

TrainConfig tiny_config() {
  TrainConfig c;
  c.batch_size = 2;
  c.steps = 6;
  c.seed = 3;
  c.clip_seconds = 0.25;
  c.model.depth = 2;
  c.model.hidden = 4;
  c.lr = 1e-3;
  return c;
}

std::vector<TrainingPair> tiny_pairs(std::size_t n, double seconds = 0.25) {
  std::vector<TrainingPair> out;
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(100 + i);
    TrainingPair p;
    p.name = "pair" + std::to_string(i);
    p.clean = synth_voiced_clip(seconds, 16000, rng);
    EchoParams ep;
    p.noisy = simulate_echo(p.clean, ep, rng).noisy;
    out.push_back(std::move(p));
  }
  return out;
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("rose_trainer_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

ModelWeights<float> scalar_param(float v) {
  ModelWeights<float> w;
  w.add("w", Tensor<float>(Shape{1}, {v}));
  return w;
}

}  // namespace

TEST_CASE("adam: zero gradient leaves parameters and decays moments") {
  auto w = scalar_param(1.5f);
  AdamState st;
  st.m["w"] = {0.2f};
  st.v["w"] = {0.04f};
  st.step = 3;
  adam_step(w, {{"w", {0.0f}}}, st, 0.0);
  CHECK(w.at("w").data()[0] == 1.5f);
  CHECK(st.m["w"][0] == doctest::Approx(0.18));
  CHECK(st.v["w"][0] == doctest::Approx(0.04 * 0.999));
  CHECK(st.step == 4);
}

TEST_CASE("adam: first step moves by lr in the gradient sign") {
  for (float g : {0.5f, -2.0f, 1e-3f}) {
    auto w = scalar_param(0.0f);
    AdamState st;
    adam_step(w, {{"w", {g}}}, st, 0.01);
    CHECK(w.at("w").data()[0] == doctest::Approx(-0.01 * g / (std::abs(g) + 1e-8)));
    CHECK(st.step == 1);
  }
}

TEST_CASE("adam: quadratic converges in 100 steps") {
  auto w = scalar_param(0.0f);
  AdamState st;
  for (int i = 0; i < 100; ++i) {
    const float x = w.at("w").data()[0];
    adam_step(w, {{"w", {2.0f * (x - 3.0f)}}}, st, 0.1);
  }
  CHECK(std::abs(w.at("w").data()[0] - 3.0f) < 0.1f);
}

TEST_CASE("adam: non-finite gradient aborts without touching anything") {
  ModelWeights<float> w;
  w.add("a", Tensor<float>(Shape{2}, {1.0f, 2.0f}));
  w.add("b", Tensor<float>(Shape{1}, {3.0f}));
  AdamState st;
  try {
    adam_step(w, {{"a", {0.1f, 0.1f}}, {"b", {NAN}}}, st, 0.1);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("b") != std::string::npos);
  }
  CHECK(w.at("a").data()[0] == 1.0f);
  CHECK(st.step == 0);
  CHECK_THROWS_AS(adam_step(w, {{"a", {0.1f}}, {"b", {0.0f}}}, st, 0.1), DimensionError);
}

TEST_CASE("config parsing") {
  const auto c = parse_config("# comment\nlr = 0.001\n\nbatch_size=4  # trailing\nhidden = 16\ndepth = 3\n");
  CHECK(c.lr == 0.001);
  CHECK(c.batch_size == 4);
  CHECK(c.model.hidden == 16);
  CHECK(c.model.depth == 3);
  CHECK(c.lr_decay == 0.999);
  CHECK_THROWS_WITH_AS(parse_config("lr = 1\nbogus = 2\n"), doctest::Contains("line 2"), ConfigError);
  CHECK_THROWS_AS(parse_config("lr = abc\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("lr 0.1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("lr = 1\nlr = 2\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("lr = -1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("batch_size = 0\n"), ConfigError);
}

TEST_CASE("config text round trip") {
  TrainConfig c = tiny_config();
  c.lr = 1.0 / 3.0;
  c.loss.lambda_asr = 0.0;
  c.loss.stft.log_floor = 1e-9;
  const auto text = config_to_text(c);
  CHECK(config_to_text(parse_config(text)) == text);
  CHECK(parse_config(text).lr == c.lr);
  std::size_t lines = 0;
  for (char ch : text) lines += ch == '\n';
  CHECK(lines == config_keys().size());
}

TEST_CASE("learning rate schedule is geometric per epoch") {
  TrainConfig c;
  for (std::size_t e : {0u, 1u, 10u, 750u}) CHECK(c.lr_at_epoch(e) == doctest::Approx(3e-4 * std::pow(0.999, e)));
  auto t = tiny_config();
  t.steps = 6;  // 3 pairs, batch 2 => 2 steps per epoch
  const auto r = train(t, tiny_pairs(3));
  REQUIRE(r.history.size() == 6);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(r.history[i].epoch == i / 2);
    CHECK(r.history[i].lr == doctest::Approx(t.lr_at_epoch(i / 2)));
  }
}

TEST_CASE("checkpoint round trip is exact") {
  const auto cfg = tiny_config();
  const auto pairs = tiny_pairs(2);
  const auto r = train(cfg, pairs);
  const auto bytes = encode_checkpoint(r.checkpoint);
  const auto back = decode_checkpoint(bytes);
  CHECK(encode_checkpoint(back) == bytes);
  CHECK(back.step == cfg.steps);
  CHECK(config_to_text(back.config) == config_to_text(cfg));
  CHECK(back.adam.m.size() == back.weights.size());

  const auto dir = scratch("roundtrip");
  save_checkpoint(r.checkpoint, dir / "a.ckpt");
  const auto loaded = load_checkpoint(dir / "a.ckpt");
  for (const auto& p : pairs) {
    CHECK(enhance(p.noisy.samples, cfg.model, loaded.weights) ==
          enhance(p.noisy.samples, cfg.model, r.checkpoint.weights));
  }
  CHECK_FALSE(fs::exists(dir / "a.ckpt.tmp"));
}

TEST_CASE("corrupt checkpoints are rejected with a reason") {
  const auto bytes = encode_checkpoint(initial_checkpoint(tiny_config()));
  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_WITH_AS(decode_checkpoint(bad), doctest::Contains("magic"), FormatError);
  bad = bytes;
  bad[4] = 9;
  CHECK_THROWS_WITH_AS(decode_checkpoint(bad), doctest::Contains("version"), FormatError);
  for (std::size_t cut : {std::size_t{3}, std::size_t{10}, bytes.size() / 2, bytes.size() - 1}) {
    std::vector<unsigned char> t(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(cut));
    CHECK_THROWS_WITH_AS(decode_checkpoint(t), doctest::Contains("truncated"), FormatError);
  }
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/x.ckpt"), IoError);
}

TEST_CASE("default model checkpoint carries the full parameter count") {
  TrainConfig c;
  const auto ck = initial_checkpoint(c);
  CHECK(ck.weights.parameter_count() == 37354974);
  std::size_t moments = 0;
  for (const auto& [_, m] : ck.adam.m) moments += m.size();
  CHECK(moments == 37354974);
}

TEST_CASE("training is deterministic, also across thread counts") {
  auto cfg = tiny_config();
  const auto pairs = tiny_pairs(3);
  const auto a = train(cfg, pairs);
  const auto b = train(cfg, pairs);
  cfg.threads = 2;
  auto c = train(cfg, pairs);
  CHECK(encode_checkpoint(a.checkpoint) == encode_checkpoint(b.checkpoint));
  c.checkpoint.config.threads = 1;  // the only recorded difference
  CHECK(encode_checkpoint(a.checkpoint) == encode_checkpoint(c.checkpoint));
  for (std::size_t i = 0; i < a.history.size(); ++i) CHECK(a.history[i].loss.total == b.history[i].loss.total);
}

TEST_CASE("log rows") {
  auto cfg = tiny_config();
  cfg.steps = 3;
  std::ostringstream log;
  TrainOptions opts;
  opts.log = &log;
  train(cfg, tiny_pairs(2), opts);
  std::istringstream in(log.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == kTrainLogHeader);
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    CHECK(std::count(line.begin(), line.end(), ',') == 7);
    // 2 pairs in batches of 2: one step per epoch.
    CHECK(line.rfind(std::to_string(rows) + "," + std::to_string(rows - 1) + ",", 0) == 0);
  }
  CHECK(rows == 3);
}

TEST_CASE("checkpoint file written during training") {
  const auto dir = scratch("files");
  auto cfg = tiny_config();
  TrainOptions opts;
  opts.checkpoint_path = dir / "model.ckpt";
  const auto r = train(cfg, tiny_pairs(2), opts);
  CHECK(encode_checkpoint(load_checkpoint(opts.checkpoint_path)) == encode_checkpoint(r.checkpoint));
}

TEST_CASE("non-finite training data aborts naming step and clip") {
  auto pairs = tiny_pairs(2);
  pairs[1].noisy.samples[100] = INFINITY;
  auto cfg = tiny_config();
  cfg.batch_size = 1;
  try {
    train(cfg, pairs);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("step") != std::string::npos);
    CHECK(msg.find("pair1") != std::string::npos);
  }
}

TEST_CASE("one pair overfits: loss falls over every 50-step window") {
  auto cfg = tiny_config();
  cfg.batch_size = 1;
  cfg.lr = 3e-4;
  cfg.steps = 500;
  cfg.clip_seconds = 0.125;
  const auto r = train(cfg, tiny_pairs(1, 0.125));
  for (std::size_t t = 0; t + 50 < r.history.size(); ++t) {
    CAPTURE(t);
    CHECK(r.history[t + 50].loss.total < r.history[t].loss.total);
  }
}

TEST_CASE("evaluate clean against clean") {
  auto pairs = tiny_pairs(2, 1.0);
  for (auto& p : pairs) p.noisy = p.clean;
  auto cfg = tiny_config();
  // A checkpoint whose model output is irrelevant: scoring uses enhance(noisy);
  // clean-vs-clean is checked through the metrics themselves.
  for (const auto& p : pairs) {
    const auto m = metrics::evaluate_pair(p.name, p.clean.samples, p.noisy.samples, 16000, cfg.loss.stft);
    CHECK(m.stoi == doctest::Approx(1.0));
    CHECK(m.si_sdr_db == metrics::kSiSdrCapDb);
  }
  const auto rep = evaluate(initial_checkpoint(cfg), pairs);
  CHECK(rep.clips.size() == 2);
  std::ostringstream os;
  rep.write_csv(os);
  const auto text = os.str();
  CHECK(std::count(text.begin(), text.end(), '\n') == 4);
}

TEST_CASE("train from a manifest on disk") {
  const auto dir = scratch("manifest");
  SynthOptions so;
  so.clip_seconds = 1.0;
  so.seed = 5;
  std::vector<AudioClip> sources;
  for (int i = 0; i < 2; ++i) {
    Rng rng(i);
    sources.push_back(synth_voiced_clip(1.0, 16000, rng));
  }
  synth_corpus(sources, dir, so);
  auto cfg = tiny_config();
  cfg.steps = 2;
  cfg.clip_seconds = 1.0;
  const auto r = train(cfg, dir / "manifest.csv");
  CHECK(r.history.size() == 2);
  CHECK(evaluate(r.checkpoint, dir / "manifest.csv").clips.size() == 2);
  CHECK_THROWS_AS(train(cfg, dir / "missing.csv"), IoError);
}
