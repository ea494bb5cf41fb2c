#include "rose/audio_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "rose/error.hpp"

namespace rose {
namespace {

void put_u16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xff));
  out.push_back(static_cast<unsigned char>(v >> 8));
}

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

void put_tag(std::vector<unsigned char>& out, const char* tag) { out.insert(out.end(), tag, tag + 4); }

std::uint16_t get_u16(const std::vector<unsigned char>& b, std::size_t at) {
  return static_cast<std::uint16_t>(b[at] | (b[at + 1] << 8));
}

std::uint32_t get_u32(const std::vector<unsigned char>& b, std::size_t at) {
  return static_cast<std::uint32_t>(b[at]) | (static_cast<std::uint32_t>(b[at + 1]) << 8) |
         (static_cast<std::uint32_t>(b[at + 2]) << 16) | (static_cast<std::uint32_t>(b[at + 3]) << 24);
}

bool tag_is(const std::vector<unsigned char>& b, std::size_t at, const char* tag) {
  return std::memcmp(b.data() + at, tag, 4) == 0;
}

std::int16_t quantize(float s) {
  const double v = std::clamp(static_cast<double>(s), -1.0, 1.0) * 32768.0;
  const double r = v < 0 ? -std::floor(-v + 0.5) : std::floor(v + 0.5);
  return static_cast<std::int16_t>(std::clamp(r, -32768.0, 32767.0));
}

}  // namespace

std::vector<unsigned char> encode_wav(const AudioClip& clip) {
  if (clip.sample_rate <= 0) throw FormatError("sample_rate must be positive");
  const auto data_bytes = static_cast<std::uint32_t>(clip.samples.size() * 2);
  std::vector<unsigned char> out;
  out.reserve(44 + data_bytes);
  put_tag(out, "RIFF");
  put_u32(out, 36 + data_bytes);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put_u32(out, 16);
  put_u16(out, 1);  // PCM
  put_u16(out, 1);  // mono
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  put_tag(out, "data");
  put_u32(out, data_bytes);
  for (float s : clip.samples) put_u16(out, static_cast<std::uint16_t>(quantize(s)));
  return out;
}

AudioClip decode_wav(const std::vector<unsigned char>& b) {
  if (b.size() < 12) throw FormatError("RIFF header: file shorter than 12 bytes");
  if (!tag_is(b, 0, "RIFF")) throw FormatError("RIFF header: missing 'RIFF' tag");
  if (!tag_is(b, 8, "WAVE")) throw FormatError("RIFF header: form type is not 'WAVE'");

  bool have_fmt = false;
  AudioClip clip;
  std::size_t at = 12;
  while (at + 8 <= b.size()) {
    const std::uint32_t size = get_u32(b, at + 4);
    const std::size_t body = at + 8;
    if (body + size > b.size()) {
      throw FormatError("chunk '" + std::string(b.begin() + at, b.begin() + at + 4) +
                        "': size field exceeds file length");
    }
    if (tag_is(b, at, "fmt ")) {
      if (size < 16) throw FormatError("fmt chunk: size " + std::to_string(size) + " < 16");
      const auto format = get_u16(b, body);
      const auto channels = get_u16(b, body + 2);
      const auto rate = get_u32(b, body + 4);
      const auto bits = get_u16(b, body + 14);
      if (format != 1) throw FormatError("fmt chunk: audio_format " + std::to_string(format) + " is not PCM (1)");
      if (channels != 1) throw FormatError("fmt chunk: num_channels " + std::to_string(channels) + " is not mono");
      if (bits != 16) throw FormatError("fmt chunk: bits_per_sample " + std::to_string(bits) + " is not 16");
      if (rate == 0) throw FormatError("fmt chunk: sample_rate is zero");
      clip.sample_rate = static_cast<int>(rate);
      have_fmt = true;
    } else if (tag_is(b, at, "data")) {
      if (!have_fmt) throw FormatError("data chunk: appears before fmt chunk");
      if (size % 2 != 0) throw FormatError("data chunk: odd byte count for 16-bit samples");
      clip.samples.resize(size / 2);
      for (std::size_t i = 0; i < clip.samples.size(); ++i) {
        const auto word = static_cast<std::int16_t>(get_u16(b, body + 2 * i));
        clip.samples[i] = static_cast<float>(word) / 32768.0f;
      }
      return clip;
    }
    at = body + size + (size & 1);
  }
  throw FormatError(have_fmt ? "data chunk: missing" : "fmt chunk: missing");
}

AudioClip read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_wav(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_wav(const AudioClip& clip, const std::filesystem::path& path) {
  const auto bytes = encode_wav(clip);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

AudioClip resample_linear(const AudioClip& clip, int target_rate) {
  if (target_rate <= 0) throw ConfigError("target_rate must be positive");
  if (clip.sample_rate <= 0) throw ConfigError("source sample_rate must be positive");
  AudioClip out;
  out.sample_rate = target_rate;
  const std::size_t n = clip.samples.size();
  if (target_rate == clip.sample_rate || n == 0) {
    out.samples = clip.samples;
    return out;
  }
  const double ratio = static_cast<double>(clip.sample_rate) / target_rate;
  const auto m = static_cast<std::size_t>(std::llround(static_cast<double>(n) * target_rate / clip.sample_rate));
  out.samples.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double pos = static_cast<double>(i) * ratio;
    const auto j = static_cast<std::size_t>(pos);
    if (j + 1 >= n) {
      out.samples[i] = clip.samples[n - 1];
      continue;
    }
    const double frac = pos - static_cast<double>(j);
    out.samples[i] = static_cast<float>((1.0 - frac) * clip.samples[j] + frac * clip.samples[j + 1]);
  }
  return out;
}

AudioClip fit_length(const AudioClip& clip, double seconds) {
  if (!(seconds > 0.0)) throw ConfigError("fit_length: seconds must be positive");
  AudioClip out;
  out.sample_rate = clip.sample_rate;
  const auto n = static_cast<std::size_t>(std::llround(seconds * clip.sample_rate));
  out.samples.assign(n, 0.0f);
  std::copy_n(clip.samples.begin(), std::min(n, clip.samples.size()), out.samples.begin());
  return out;
}

}  // namespace rose
