#include "rose/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "rose/audio_io.hpp"
#include "rose/dsp.hpp"
#include "rose/echo_sim.hpp"
#include "rose/error.hpp"
#include "rose/trainer.hpp"

namespace rose {
namespace {

namespace fs = std::filesystem;

std::vector<double> parse_snr_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("--snr: cannot parse '" + item + "'");
    }
  }
  if (out.empty()) throw ConfigError("--snr: empty list");
  return out;
}

std::pair<double, double> parse_delay(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw ConfigError("--delay-ms: expected LO:HI, got '" + text + "'");
  try {
    return {std::stod(text.substr(0, colon)), std::stod(text.substr(colon + 1))};
  } catch (const std::exception&) {
    throw ConfigError("--delay-ms: cannot parse '" + text + "'");
  }
}

std::vector<AudioClip> read_wav_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".wav") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<AudioClip> clips;
  for (const auto& f : files) clips.push_back(read_wav(f));
  return clips;
}

struct SynthArgs {
  std::string mode = "echo";
  std::string in_dir;
  std::size_t generate = 0;
  std::string out_dir;
  std::string noise_dir;
  std::uint64_t seed = 0;
  std::string snr = "-3,0,3,6";
  std::string delay = "10:200";
  double seconds = 4.0;
  int sample_rate = 16000;
};

int do_synth(const SynthArgs& a, const CLI::App& cmd, std::ostream& out) {
  SynthOptions opts;
  opts.seed = a.seed;
  opts.sample_rate = a.sample_rate;
  opts.clip_seconds = a.seconds;
  if (a.mode == "echo") {
    opts.mode = SynthMode::kEcho;
    if (cmd.count("--snr")) throw ConfigError("--snr applies to additive mode only");
    if (cmd.count("--noise")) throw ConfigError("--noise applies to additive mode only");
    const auto [lo, hi] = parse_delay(a.delay);
    opts.echo.delay_min_ms = lo;
    opts.echo.delay_max_ms = hi;
    opts.echo.validate();
  } else {
    opts.mode = SynthMode::kAdditive;
    if (cmd.count("--delay-ms")) throw ConfigError("--delay-ms applies to echo mode only");
    opts.mix.snr_db = parse_snr_list(a.snr);
    if (!a.noise_dir.empty()) opts.noise_sources = read_wav_dir(a.noise_dir);
  }
  std::vector<AudioClip> sources;
  if (a.generate > 0) {
    Rng rng(a.seed ^ 0x243f6a8885a308d3ULL);
    for (std::size_t i = 0; i < a.generate; ++i) sources.push_back(synth_voiced_clip(a.seconds, a.sample_rate, rng));
  } else {
    sources = read_wav_dir(a.in_dir);
    if (sources.empty()) throw ConfigError("no .wav files in " + a.in_dir);
  }
  const auto manifest = synth_corpus(sources, a.out_dir, opts);
  out << manifest.rows.size() << '\n';
  return kExitOk;
}

int do_train(const std::string& config, const std::string& manifest, const std::string& ckpt_out,
             const std::string& log_path, const CLI::App& cmd, std::uint64_t seed, std::size_t steps,
             std::ostream& out) {
  auto cfg = load_config(config);
  if (cmd.count("--seed")) cfg.seed = seed;
  if (cmd.count("--steps")) cfg.steps = steps;
  cfg.validate();
  const auto pairs = load_pairs(read_manifest(manifest), cfg);
  std::ofstream log_file;
  TrainOptions opts;
  opts.checkpoint_path = ckpt_out;
  if (!log_path.empty()) {
    log_file.open(log_path);
    if (!log_file) throw IoError("cannot open " + log_path + " for writing");
    opts.log = &log_file;
  } else {
    opts.log = &out;
  }
  train(cfg, pairs, opts);
  return kExitOk;
}

int do_enhance(const std::string& ckpt_path, const std::string& in, const std::string& out_path) {
  const auto ckpt = load_checkpoint(ckpt_path);
  const auto clip = read_wav(in);
  if (clip.samples.empty()) throw ConfigError(in + ": no samples");
  const int rate = ckpt.config.sample_rate;
  const auto work = resample_linear(clip, rate);
  AudioClip enhanced;
  enhanced.sample_rate = rate;
  enhanced.samples = enhance(work.samples, ckpt.config.model, ckpt.weights);
  for (float v : enhanced.samples) {
    if (!std::isfinite(v)) throw NumericError("enhanced waveform contains non-finite samples");
  }
  auto result = resample_linear(enhanced, clip.sample_rate);
  result.samples.resize(clip.samples.size(), 0.0f);
  write_wav(result, out_path);
  return kExitOk;
}

int do_eval(const std::string& ckpt_path, const std::string& manifest, const std::string& report_path,
            std::ostream& out) {
  const auto ckpt = load_checkpoint(ckpt_path);
  const auto report = evaluate(ckpt, manifest);
  std::ofstream f(report_path);
  if (!f) throw IoError("cannot open " + report_path + " for writing");
  report.write_csv(f);
  if (!f) throw IoError("failed writing " + report_path);
  const auto m = report.mean();
  out << "MEAN," << m.si_sdr_db << ',' << m.seg_snr_db << ',' << m.lsd << ',' << m.stoi << '\n';
  return kExitOk;
}

int do_spectrogram(const std::string& in, const std::string& out_path) {
  const auto clip = read_wav(in);
  dsp::StftConfig cfg;
  cfg.sample_rate = clip.sample_rate;
  dsp::write_spectrogram_pgm(clip.samples, cfg, out_path);
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Speech enhancement toolkit: corpus synthesis, training, enhancement, evaluation", "rose"};
  app.require_subcommand(1);

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Synthesize a paired clean/noisy corpus with manifest.csv");
  synth->add_option("--mode", sa.mode, "echo | additive")->check(CLI::IsMember({"echo", "additive"}))->capture_default_str();
  auto* in_opt = synth->add_option("--in", sa.in_dir, "Directory of clean source WAVs");
  auto* gen_opt = synth->add_option("--generate", sa.generate, "Use N synthetic voiced sources instead of --in");
  in_opt->excludes(gen_opt);
  synth->add_option("--out", sa.out_dir, "Output directory")->required();
  synth->add_option("--noise", sa.noise_dir, "Directory of noise WAVs (additive mode; white noise if absent)");
  synth->add_option("--seed", sa.seed, "Random seed")->capture_default_str();
  synth->add_option("--snr", sa.snr, "Comma-separated SNR list in dB (additive mode)")->capture_default_str();
  synth->add_option("--delay-ms", sa.delay, "Echo delay range LO:HI in ms (echo mode)")->capture_default_str();
  synth->add_option("--seconds", sa.seconds, "Clip length in seconds")->capture_default_str();
  synth->add_option("--sample-rate", sa.sample_rate, "Output sample rate")->capture_default_str();

  std::string config, manifest, ckpt, log_path;
  std::uint64_t train_seed = 0;
  std::size_t train_steps = 0;
  auto* train_cmd = app.add_subcommand("train", "Train a model from a config file and manifest");
  train_cmd->add_option("--config", config, "Config file (key = value)")->required();
  train_cmd->add_option("--manifest", manifest, "Corpus manifest.csv")->required();
  train_cmd->add_option("--out", ckpt, "Checkpoint output path")->required();
  train_cmd->add_option("--log", log_path, "Training log CSV (default: stdout)");
  train_cmd->add_option("--seed", train_seed, "Override the config seed");
  train_cmd->add_option("--steps", train_steps, "Override the config step count");

  std::string in_wav, out_wav;
  auto* enhance_cmd = app.add_subcommand("enhance", "Enhance one WAV file");
  enhance_cmd->add_option("--ckpt", ckpt, "Checkpoint")->required();
  enhance_cmd->add_option("--in", in_wav, "Noisy input WAV")->required();
  enhance_cmd->add_option("--out", out_wav, "Enhanced output WAV")->required();

  std::string report;
  auto* eval_cmd = app.add_subcommand("eval", "Score enhanced manifest pairs against clean references");
  eval_cmd->add_option("--ckpt", ckpt, "Checkpoint")->required();
  eval_cmd->add_option("--manifest", manifest, "Corpus manifest.csv")->required();
  eval_cmd->add_option("--report", report, "Report CSV path")->required();

  std::string pgm;
  auto* spec_cmd = app.add_subcommand("spectrogram", "Write a log-magnitude spectrogram as binary PGM");
  spec_cmd->add_option("--in", in_wav, "Input WAV")->required();
  spec_cmd->add_option("--out", pgm, "Output PGM")->required();

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  try {
    app.parse(argv_rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*synth) {
      if (!synth->count("--in") && !synth->count("--generate")) throw ConfigError("synth needs --in or --generate");
      return do_synth(sa, *synth, out);
    }
    if (*train_cmd) return do_train(config, manifest, ckpt, log_path, *train_cmd, train_seed, train_steps, out);
    if (*enhance_cmd) return do_enhance(ckpt, in_wav, out_wav);
    if (*eval_cmd) return do_eval(ckpt, manifest, report, out);
    if (*spec_cmd) return do_spectrogram(in_wav, pgm);
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const DegenerateInputError& e) {
    err << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << '\n';
    return kExitIo;
  } catch (const FormatError& e) {
    err << "I/O error: " << e.what() << '\n';
    return kExitIo;
  } catch (const Error& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "I/O error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace rose
