#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "rose/audio_io.hpp"
#include "rose/dsp.hpp"
#include "rose/echo_sim.hpp"
#include "rose/error.hpp"
#include "rose/losses.hpp"
#include "rose/metrics.hpp"
#include "rose/model.hpp"
#include "rose/trainer.hpp"

namespace py = pybind11;
using namespace rose;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

std::vector<float> to_vector(const FloatArray& a) {
  if (a.ndim() != 1) throw DimensionError("expected a 1-D array");
  return {a.data(), a.data() + a.size()};
}

FloatArray to_array(const std::vector<float>& v) {
  FloatArray out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

py::array_t<double> features_array(const dsp::SpectralFeatures& f) {
  py::array_t<double> out({static_cast<py::ssize_t>(f.frames), static_cast<py::ssize_t>(f.cols)});
  std::copy(f.values.begin(), f.values.end(), out.mutable_data());
  return out;
}

Tensor<double> to_tensor(const FloatArray& a) {
  const auto v = to_vector(a);
  return Tensor<double>(Shape{v.size()}, std::vector<double>(v.begin(), v.end()));
}

py::dict breakdown_dict(const LossBreakdown& b) {
  py::dict d;
  d["mae"] = b.mae;
  d["mag"] = b.mag;
  d["spec"] = b.spec;
  d["mfcc"] = b.mfcc;
  d["se_total"] = b.se_total;
  d["asr_total"] = b.asr_total;
  d["total"] = b.total;
  d["degenerate_reference"] = b.degenerate_reference;
  return d;
}

std::vector<TrainingPair> make_pairs(const std::vector<FloatArray>& clean, const std::vector<FloatArray>& noisy,
                                     int sample_rate) {
  if (clean.size() != noisy.size()) throw DimensionError("clean and noisy lists differ in length");
  std::vector<TrainingPair> pairs;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    pairs.push_back({"pair" + std::to_string(i), {to_vector(clean[i]), sample_rate}, {to_vector(noisy[i]), sample_rate}});
  }
  return pairs;
}

}  // namespace

PYBIND11_MODULE(_rose, m) {
  m.doc() = "Time-domain speech enhancement: synthesis, features, losses, metrics, training and inference.";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<LengthError>(m, "LengthError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<DegenerateInputError>(m, "DegenerateInputError", PyExc_ArithmeticError);

  m.def("read_wav", [](const std::filesystem::path& p) {
    const auto clip = read_wav(p);
    return py::make_tuple(to_array(clip.samples), clip.sample_rate);
  }, py::arg("path"), "Returns (samples, sample_rate).");
  m.def("write_wav", [](const std::filesystem::path& p, const FloatArray& x, int sample_rate) {
    write_wav({to_vector(x), sample_rate}, p);
  }, py::arg("path"), py::arg("samples"), py::arg("sample_rate") = 16000);

  m.def("synth_voiced_clip", [](double seconds, int sample_rate, std::uint64_t seed) {
    Rng rng(seed);
    return to_array(synth_voiced_clip(seconds, sample_rate, rng).samples);
  }, py::arg("seconds") = 1.0, py::arg("sample_rate") = 16000, py::arg("seed") = 0);
  m.def("simulate_echo", [](const FloatArray& clean, std::uint64_t seed, int sample_rate, double delay_min_ms,
                            double delay_max_ms, double sent_snr_db, double received_snr_db) {
    EchoParams p;
    p.delay_min_ms = delay_min_ms;
    p.delay_max_ms = delay_max_ms;
    p.sent_snr_db = sent_snr_db;
    p.received_snr_db = received_snr_db;
    Rng rng(seed);
    const auto r = simulate_echo({to_vector(clean), sample_rate}, p, rng);
    return py::make_tuple(to_array(r.noisy.samples), r.delay_samples);
  }, py::arg("clean"), py::arg("seed") = 0, py::arg("sample_rate") = 16000, py::arg("delay_min_ms") = 10.0,
     py::arg("delay_max_ms") = 200.0, py::arg("sent_snr_db") = 30.0, py::arg("received_snr_db") = 10.0,
     "Returns (noisy, delay_samples).");

  m.def("stft_magnitude", [](const FloatArray& x) { return features_array(dsp::stft_magnitude(to_vector(x), {})); },
        py::arg("x"), "frames x bins magnitude with the default analysis settings.");
  m.def("mfcc", [](const FloatArray& x) { return features_array(dsp::mfcc(to_vector(x), {})); }, py::arg("x"));

  m.def("total_loss", [](const FloatArray& clean, const FloatArray& estimate, double lambda_se, double lambda_asr) {
    LossConfig cfg;
    cfg.lambda_se = lambda_se;
    cfg.lambda_asr = lambda_asr;
    return breakdown_dict(total_loss(to_tensor(clean), to_tensor(estimate), cfg).breakdown(cfg));
  }, py::arg("clean"), py::arg("estimate"), py::arg("lambda_se") = 1.0, py::arg("lambda_asr") = 1.0);

  m.def("si_sdr", [](const FloatArray& r, const FloatArray& e) { return metrics::si_sdr(to_vector(r), to_vector(e)); },
        py::arg("reference"), py::arg("estimate"));
  m.def("segmental_snr", [](const FloatArray& r, const FloatArray& e) {
    return metrics::segmental_snr(to_vector(r), to_vector(e));
  }, py::arg("reference"), py::arg("estimate"));
  m.def("stoi", [](const FloatArray& r, const FloatArray& e, int sample_rate) {
    return metrics::stoi(to_vector(r), to_vector(e), sample_rate);
  }, py::arg("reference"), py::arg("estimate"), py::arg("sample_rate") = 16000);

  py::class_<Checkpoint>(m, "Checkpoint")
      .def_property_readonly("step", [](const Checkpoint& c) { return c.step; })
      .def_property_readonly("parameter_count", [](const Checkpoint& c) { return c.weights.parameter_count(); })
      .def_property_readonly("config", [](const Checkpoint& c) { return config_to_text(c.config); })
      .def("save", [](const Checkpoint& c, const std::filesystem::path& p) { save_checkpoint(c, p); }, py::arg("path"))
      .def("enhance", [](const Checkpoint& c, const FloatArray& x) {
        const auto v = to_vector(x);
        py::gil_scoped_release release;
        auto out = enhance(v, c.config.model, c.weights);
        py::gil_scoped_acquire acquire;
        return to_array(out);
      }, py::arg("noisy"));

  m.def("load_checkpoint", [](const std::filesystem::path& p) { return load_checkpoint(p); }, py::arg("path"));
  m.def("initial_checkpoint", [](const std::string& config_text) {
    return initial_checkpoint(parse_config(config_text));
  }, py::arg("config") = "", "Freshly initialized model for a `key = value` config text.");
  m.def("train", [](const std::string& config_text, const std::vector<FloatArray>& clean,
                    const std::vector<FloatArray>& noisy) {
    const auto cfg = parse_config(config_text);
    const auto pairs = make_pairs(clean, noisy, cfg.sample_rate);
    TrainResult r;
    {
      py::gil_scoped_release release;
      r = train(cfg, pairs);
    }
    py::list history;
    for (const auto& row : r.history) history.append(breakdown_dict(row.loss));
    return py::make_tuple(r.checkpoint, history);
  }, py::arg("config"), py::arg("clean"), py::arg("noisy"),
     "Trains on in-memory pairs; returns (checkpoint, per-step loss breakdowns).");
}
