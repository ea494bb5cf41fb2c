#include "rose/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include "rose/error.hpp"

namespace rose {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename U>
U parse_number(const std::string& key, const std::string& v) {
  U out{};
  const auto* end = v.data() + v.size();
  const auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end) throw ConfigError("key '" + key + "': cannot parse '" + v + "'");
  return out;
}

std::string format_double(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

struct Field {
  const char* key;
  std::function<void(TrainConfig&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

template <typename U>
Field field(const char* key, U TrainConfig::*member) {
  return {key, [key, member](TrainConfig& c, const std::string& v) { c.*member = parse_number<U>(key, v); },
          [member](const TrainConfig& c) {
            if constexpr (std::is_floating_point_v<U>) return format_double(c.*member);
            else return std::to_string(c.*member);
          }};
}

template <typename Owner, typename U>
Field nested(const char* key, Owner TrainConfig::*owner, U Owner::*member) {
  return {key,
          [key, owner, member](TrainConfig& c, const std::string& v) { (c.*owner).*member = parse_number<U>(key, v); },
          [owner, member](const TrainConfig& c) {
            if constexpr (std::is_floating_point_v<U>) return format_double((c.*owner).*member);
            else return std::to_string((c.*owner).*member);
          }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> f = {
      field("lr", &TrainConfig::lr),
      field("lr_decay", &TrainConfig::lr_decay),
      field("batch_size", &TrainConfig::batch_size),
      field("epochs", &TrainConfig::epochs),
      field("steps", &TrainConfig::steps),
      field("seed", &TrainConfig::seed),
      field("clip_seconds", &TrainConfig::clip_seconds),
      field("sample_rate", &TrainConfig::sample_rate),
      field("threads", &TrainConfig::threads),
      field("checkpoint_every", &TrainConfig::checkpoint_every),
      nested("lambda_se", &TrainConfig::loss, &LossConfig::lambda_se),
      nested("lambda_asr", &TrainConfig::loss, &LossConfig::lambda_asr),
      nested("eps_denominator", &TrainConfig::loss, &LossConfig::eps_denominator),
      {"fft_bins", [](TrainConfig& c, const std::string& v) { c.loss.stft.fft_bins = parse_number<std::size_t>("fft_bins", v); },
       [](const TrainConfig& c) { return std::to_string(c.loss.stft.fft_bins); }},
      {"hop", [](TrainConfig& c, const std::string& v) { c.loss.stft.hop = parse_number<std::size_t>("hop", v); },
       [](const TrainConfig& c) { return std::to_string(c.loss.stft.hop); }},
      {"window_len", [](TrainConfig& c, const std::string& v) { c.loss.stft.window_len = parse_number<std::size_t>("window_len", v); },
       [](const TrainConfig& c) { return std::to_string(c.loss.stft.window_len); }},
      {"mel_bands", [](TrainConfig& c, const std::string& v) { c.loss.stft.mel_bands = parse_number<std::size_t>("mel_bands", v); },
       [](const TrainConfig& c) { return std::to_string(c.loss.stft.mel_bands); }},
      {"mfcc_dim", [](TrainConfig& c, const std::string& v) { c.loss.stft.mfcc_dim = parse_number<std::size_t>("mfcc_dim", v); },
       [](const TrainConfig& c) { return std::to_string(c.loss.stft.mfcc_dim); }},
      {"log_floor", [](TrainConfig& c, const std::string& v) { c.loss.stft.log_floor = parse_number<double>("log_floor", v); },
       [](const TrainConfig& c) { return format_double(c.loss.stft.log_floor); }},
      nested("depth", &TrainConfig::model, &ModelConfig::depth),
      nested("hidden", &TrainConfig::model, &ModelConfig::hidden),
      nested("kernel", &TrainConfig::model, &ModelConfig::kernel),
      nested("stride", &TrainConfig::model, &ModelConfig::stride),
      nested("growth", &TrainConfig::model, &ModelConfig::growth),
      nested("squeeze", &TrainConfig::model, &ModelConfig::squeeze),
      nested("lstm_layers", &TrainConfig::model, &ModelConfig::lstm_layers),
      nested("lstm_hidden", &TrainConfig::model, &ModelConfig::lstm_hidden),
  };
  return f;
}

bool all_finite(std::span<const float> v) {
  return std::all_of(v.begin(), v.end(), [](float x) { return std::isfinite(x); });
}

struct ClipGrad {
  LossBreakdown loss;
  std::vector<std::vector<float>> grads;  // parameter order
};

ClipGrad clip_gradient(const ModelWeights<float>& w, const TrainConfig& cfg, const TrainingPair& pair) {
  const Tensor<float> noisy(Shape{pair.noisy.samples.size()}, pair.noisy.samples);
  const Tensor<float> clean(Shape{pair.clean.samples.size()}, pair.clean.samples);
  const auto est = rose_forward(noisy, cfg.model, w);
  auto terms = total_loss(clean, est, cfg.loss);
  ClipGrad out;
  out.loss = terms.breakdown(cfg.loss);
  if (!std::isfinite(out.loss.total)) return out;
  terms.total.backward();
  for (const auto& [name, t] : w.all()) {
    if (t.has_grad()) out.grads.emplace_back(t.grad().begin(), t.grad().end());
    else out.grads.emplace_back(t.numel(), 0.0f);
  }
  return out;
}

void for_each_parallel(std::size_t n, std::size_t threads, const std::function<void(std::size_t, std::size_t)>& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(0, i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < n; i += threads) fn(t, i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be positive");
  if (!(lr_decay > 0.0) || lr_decay > 1.0) throw ConfigError("lr_decay must be in (0, 1]");
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (steps == 0 && epochs == 0) throw ConfigError("either steps or epochs must be positive");
  if (sample_rate <= 0) throw ConfigError("sample_rate must be positive");
  if (threads == 0) throw ConfigError("threads must be >= 1");
  if (loss.stft.sample_rate != sample_rate) throw ConfigError("feature sample rate differs from sample_rate");
  loss.validate();
  model.validate();
}

double TrainConfig::lr_at_epoch(std::size_t epoch) const {
  return lr * std::pow(lr_decay, static_cast<double>(epoch));
}

TrainConfig parse_config(const std::string& text) {
  TrainConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const auto key = trim(std::string_view(body).substr(0, eq));
    const auto value = trim(std::string_view(body).substr(eq + 1));
    const auto& f = fields();
    auto it = std::find_if(f.begin(), f.end(), [&](const Field& x) { return key == x.key; });
    if (it == f.end()) throw ConfigError("line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    if (!seen.insert(key).second) throw ConfigError("line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    try {
      it->set(cfg, value);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  cfg.loss.stft.sample_rate = cfg.sample_rate;
  cfg.validate();
  return cfg;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string config_to_text(const TrainConfig& cfg) {
  std::string out;
  for (const auto& f : fields()) out += std::string(f.key) + " = " + f.get(cfg) + "\n";
  return out;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : fields()) keys.emplace_back(f.key);
  return keys;
}

void adam_step(ModelWeights<float>& params, const std::map<std::string, std::vector<float>>& grads,
               AdamState& state, double lr, const AdamParams& hp) {
  for (const auto& [name, t] : params.all()) {
    auto it = grads.find(name);
    if (it == grads.end()) throw NumericError("adam_step: no gradient for '" + name + "'");
    if (it->second.size() != t.numel()) {
      throw DimensionError("adam_step: gradient for '" + name + "' has " + std::to_string(it->second.size()) +
                           " entries, parameter has " + std::to_string(t.numel()));
    }
    if (!all_finite(it->second)) throw NumericError("adam_step: non-finite gradient in '" + name + "'");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(hp.beta1, t);
  const double c2 = 1.0 - std::pow(hp.beta2, t);
  for (const auto& [name, tensor] : params.all()) {
    const auto& g = grads.at(name);
    auto& m = state.m[name];
    auto& v = state.v[name];
    m.resize(g.size(), 0.0f);
    v.resize(g.size(), 0.0f);
    Tensor<float> handle = tensor;
    auto p = handle.mutable_data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double gi = g[i];
      const double mi = hp.beta1 * m[i] + (1.0 - hp.beta1) * gi;
      const double vi = hp.beta2 * v[i] + (1.0 - hp.beta2) * gi * gi;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      const double update = lr * (mi / c1) / (std::sqrt(vi / c2) + hp.eps);
      p[i] = static_cast<float>(p[i] - update);
    }
  }
}

std::vector<TrainingPair> load_pairs(const Manifest& manifest, const TrainConfig& cfg) {
  std::vector<TrainingPair> pairs;
  for (std::size_t i = 0; i < manifest.rows.size(); ++i) {
    TrainingPair p;
    p.name = std::filesystem::path(manifest.rows[i].noisy_path).stem().string();
    p.clean = resample_linear(read_wav(manifest.clean_file(i)), cfg.sample_rate);
    p.noisy = resample_linear(read_wav(manifest.noisy_file(i)), cfg.sample_rate);
    if (cfg.clip_seconds > 0.0) {
      p.clean = fit_length(p.clean, cfg.clip_seconds);
      p.noisy = fit_length(p.noisy, cfg.clip_seconds);
    }
    if (p.clean.samples.size() != p.noisy.samples.size()) {
      throw DimensionError("pair " + p.name + ": clean and noisy lengths differ");
    }
    pairs.push_back(std::move(p));
  }
  return pairs;
}

void write_log_row(std::ostream& out, const StepLog& row) {
  out << row.step << ',' << row.epoch << ',' << format_double(row.lr) << ',' << format_double(row.loss.mae) << ','
      << format_double(row.loss.mag) << ',' << format_double(row.loss.spec) << ',' << format_double(row.loss.mfcc)
      << ',' << format_double(row.loss.total) << '\n';
}

Checkpoint initial_checkpoint(const TrainConfig& cfg) {
  cfg.validate();
  Checkpoint ckpt;
  ckpt.config = cfg;
  ckpt.weights = init_weights(cfg.model, cfg.seed);
  for (const auto& [name, t] : ckpt.weights.all()) {
    ckpt.adam.m[name].assign(t.numel(), 0.0f);
    ckpt.adam.v[name].assign(t.numel(), 0.0f);
  }
  return ckpt;
}

TrainResult train(const TrainConfig& cfg, const std::vector<TrainingPair>& pairs, const TrainOptions& opts) {
  cfg.validate();
  if (pairs.empty()) throw ConfigError("train: no training pairs");
  TrainResult result;
  Checkpoint& ckpt = result.checkpoint;
  ckpt = initial_checkpoint(cfg);

  const std::size_t batch = std::min(cfg.batch_size, pairs.size());
  const std::size_t per_epoch = (pairs.size() + batch - 1) / batch;
  const std::size_t total = cfg.steps > 0 ? cfg.steps : cfg.epochs * per_epoch;
  Rng shuffle_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(pairs.size());

  std::vector<ModelWeights<float>> replicas;
  if (cfg.threads > 1) {
    for (std::size_t t = 0; t < std::min(cfg.threads, batch); ++t) replicas.push_back(ckpt.weights.clone(true));
  }
  std::vector<std::string> names;
  for (const auto& [name, _] : ckpt.weights.all()) names.push_back(name);

  if (opts.log) *opts.log << kTrainLogHeader << '\n';
  for (std::size_t step = 0; step < total; ++step) {
    const std::size_t epoch = step / per_epoch;
    const std::size_t slot = step % per_epoch;
    if (slot == 0) {
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      std::shuffle(order.begin(), order.end(), shuffle_rng);
    }
    const std::size_t begin = slot * batch;
    const std::size_t end = std::min(begin + batch, pairs.size());
    const std::size_t count = end - begin;

    std::vector<ClipGrad> clips(count);
    if (replicas.empty()) {
      for (std::size_t i = 0; i < count; ++i) {
        ckpt.weights.zero_grad();
        clips[i] = clip_gradient(ckpt.weights, cfg, pairs[order[begin + i]]);
      }
    } else {
      for (auto& r : replicas) r = ckpt.weights.clone(true);
      for_each_parallel(count, replicas.size(), [&](std::size_t t, std::size_t i) {
        replicas[t].zero_grad();
        clips[i] = clip_gradient(replicas[t], cfg, pairs[order[begin + i]]);
      });
    }

    StepLog row;
    row.step = step + 1;
    row.epoch = epoch;
    row.lr = cfg.lr_at_epoch(epoch);
    std::map<std::string, std::vector<float>> grads;
    for (std::size_t p = 0; p < names.size(); ++p) grads[names[p]].assign(ckpt.weights.at(names[p]).numel(), 0.0f);
    for (std::size_t i = 0; i < count; ++i) {
      const auto& c = clips[i];
      if (!std::isfinite(c.loss.total)) {
        throw NumericError("non-finite loss at step " + std::to_string(step + 1) + ", clip " +
                           pairs[order[begin + i]].name);
      }
      row.loss.mae += c.loss.mae;
      row.loss.mag += c.loss.mag;
      row.loss.spec += c.loss.spec;
      row.loss.mfcc += c.loss.mfcc;
      row.loss.total += c.loss.total;
      for (std::size_t p = 0; p < names.size(); ++p) {
        auto& g = grads[names[p]];
        const auto& src = c.grads[p];
        for (std::size_t k = 0; k < g.size(); ++k) g[k] += src[k];
      }
    }
    const float inv = 1.0f / static_cast<float>(count);
    for (auto& [_, g] : grads) {
      for (auto& x : g) x *= inv;
    }
    const double n = static_cast<double>(count);
    row.loss.mae /= n;
    row.loss.mag /= n;
    row.loss.spec /= n;
    row.loss.mfcc /= n;
    row.loss.total /= n;
    row.loss.se_total = row.loss.mae + row.loss.mag;
    row.loss.asr_total = row.loss.spec + row.loss.mfcc;

    try {
      adam_step(ckpt.weights, grads, ckpt.adam, row.lr);
    } catch (const NumericError& e) {
      throw NumericError("step " + std::to_string(step + 1) + ": " + e.what());
    }
    ckpt.step = ckpt.adam.step;

    if (opts.log) write_log_row(*opts.log, row);
    if (opts.on_step) opts.on_step(row);
    result.history.push_back(row);

    const bool epoch_end = slot + 1 == per_epoch;
    if (!opts.checkpoint_path.empty() && epoch_end && cfg.checkpoint_every > 0 &&
        (epoch + 1) % cfg.checkpoint_every == 0 && step + 1 < total) {
      save_checkpoint(ckpt, opts.checkpoint_path);
    }
  }
  if (!opts.checkpoint_path.empty()) save_checkpoint(ckpt, opts.checkpoint_path);
  return result;
}

TrainResult train(const TrainConfig& cfg, const std::filesystem::path& manifest_path, const TrainOptions& opts) {
  return train(cfg, load_pairs(read_manifest(manifest_path), cfg), opts);
}

LossBreakdown pair_loss(const Checkpoint& ckpt, const TrainingPair& pair) {
  const auto est = enhance(pair.noisy.samples, ckpt.config.model, ckpt.weights);
  const Tensor<float> clean(Shape{pair.clean.samples.size()}, pair.clean.samples);
  const Tensor<float> estimate(Shape{est.size()}, est);
  return total_loss(clean, estimate, ckpt.config.loss).breakdown(ckpt.config.loss);
}

metrics::MetricReport evaluate(const Checkpoint& ckpt, const std::vector<TrainingPair>& pairs) {
  metrics::MetricReport report;
  report.clips.resize(pairs.size());
  const auto frozen = ckpt.weights.clone(false);
  for_each_parallel(pairs.size(), ckpt.config.threads, [&](std::size_t, std::size_t i) {
    const auto& p = pairs[i];
    const auto est = enhance(p.noisy.samples, ckpt.config.model, frozen);
    report.clips[i] = metrics::evaluate_pair(p.name, p.clean.samples, est, p.clean.sample_rate, ckpt.config.loss.stft);
  });
  return report;
}

metrics::MetricReport evaluate(const Checkpoint& ckpt, const std::filesystem::path& manifest_path) {
  return evaluate(ckpt, load_pairs(read_manifest(manifest_path), ckpt.config));
}

}  // namespace rose
