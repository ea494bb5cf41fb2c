#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>
#include <string>

#include "rose/error.hpp"
#include "rose/trainer.hpp"

namespace rose {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[4] = {'R', 'O', 'S', 'E'};

template <typename U>
void put(std::vector<unsigned char>& out, U v) {
  unsigned char buf[sizeof(U)];
  std::memcpy(buf, &v, sizeof(U));
  out.insert(out.end(), buf, buf + sizeof(U));
}

void put_record(std::vector<unsigned char>& out, const std::string& name, const Shape& shape,
                std::span<const float> data) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
  out.insert(out.end(), name.begin(), name.end());
  put<std::uint8_t>(out, static_cast<std::uint8_t>(shape.size()));
  for (auto d : shape) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
  const auto* p = reinterpret_cast<const unsigned char*>(data.data());
  out.insert(out.end(), p, p + data.size() * sizeof(float));
}

class Reader {
 public:
  explicit Reader(const std::vector<unsigned char>& b) : b_(b) {}

  bool done() const { return at_ == b_.size(); }
  std::size_t offset() const { return at_; }

  template <typename U>
  U get(const char* what) {
    need(sizeof(U), what);
    U v;
    std::memcpy(&v, b_.data() + at_, sizeof(U));
    at_ += sizeof(U);
    return v;
  }

  std::string bytes(std::size_t n, const char* what) {
    need(n, what);
    std::string s(b_.begin() + static_cast<std::ptrdiff_t>(at_), b_.begin() + static_cast<std::ptrdiff_t>(at_ + n));
    at_ += n;
    return s;
  }

  std::vector<float> floats(std::size_t n, const char* what) {
    need(n * sizeof(float), what);
    std::vector<float> v(n);
    std::memcpy(v.data(), b_.data() + at_, n * sizeof(float));
    at_ += n * sizeof(float);
    return v;
  }

 private:
  void need(std::size_t n, const char* what) {
    if (b_.size() - at_ < n) {
      throw FormatError(std::string("truncated checkpoint: ") + what + " at byte " + std::to_string(at_) +
                        " needs " + std::to_string(n) + " bytes, " + std::to_string(b_.size() - at_) + " left");
    }
  }

  const std::vector<unsigned char>& b_;
  std::size_t at_ = 0;
};

}  // namespace

std::vector<unsigned char> encode_checkpoint(const Checkpoint& ckpt) {
  std::vector<unsigned char> out(kMagic, kMagic + 4);
  put<std::uint32_t>(out, Checkpoint::kVersion);
  put<std::uint64_t>(out, ckpt.step);
  const std::string text = config_to_text(ckpt.config);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& [name, t] : ckpt.weights.all()) put_record(out, name, t.shape(), t.data());
  for (const auto& [prefix, moments] : {std::pair{"m:", &ckpt.adam.m}, std::pair{"v:", &ckpt.adam.v}}) {
    for (const auto& [name, t] : ckpt.weights.all()) {
      auto it = moments->find(name);
      if (it != moments->end()) {
        put_record(out, prefix + name, t.shape(), it->second);
      } else {
        put_record(out, prefix + name, t.shape(), std::vector<float>(t.numel(), 0.0f));
      }
    }
  }
  return out;
}

Checkpoint decode_checkpoint(const std::vector<unsigned char>& bytes) {
  Reader r(bytes);
  if (r.bytes(4, "magic") != std::string(kMagic, 4)) throw FormatError("bad magic: not a ROSE checkpoint");
  const auto version = r.get<std::uint32_t>("version");
  if (version != Checkpoint::kVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                      std::to_string(Checkpoint::kVersion) + ")");
  }
  Checkpoint ckpt;
  ckpt.step = r.get<std::uint64_t>("step counter");
  const auto text_len = r.get<std::uint32_t>("config length");
  try {
    ckpt.config = parse_config(r.bytes(text_len, "config text"));
  } catch (const ConfigError& e) {
    throw FormatError(std::string("embedded config: ") + e.what());
  }
  ckpt.adam.step = ckpt.step;

  std::map<std::string, Shape> expected;
  for (auto& [name, shape] : parameter_layout(ckpt.config.model)) {
    expected["m:" + name] = shape;
    expected["v:" + name] = shape;
    expected[name] = std::move(shape);
  }
  std::set<std::string> seen;
  while (!r.done()) {
    const auto name_len = r.get<std::uint32_t>("record name length");
    const auto name = r.bytes(name_len, "record name");
    auto it = expected.find(name);
    if (it == expected.end()) throw FormatError("unexpected record '" + name + "'");
    if (!seen.insert(name).second) throw FormatError("duplicate record '" + name + "'");
    const auto rank = r.get<std::uint8_t>("record rank");
    Shape shape(rank);
    for (auto& d : shape) d = r.get<std::uint32_t>("record dims");
    if (shape != it->second) {
      throw FormatError("record '" + name + "' has shape " + shape_str(shape) + ", expected " +
                        shape_str(it->second));
    }
    auto data = r.floats(shape_numel(shape), "record payload");
    if (name.rfind("m:", 0) == 0) ckpt.adam.m[name.substr(2)] = std::move(data);
    else if (name.rfind("v:", 0) == 0) ckpt.adam.v[name.substr(2)] = std::move(data);
    else ckpt.weights.add(name, Tensor<float>(shape, std::move(data), true));
  }
  for (const auto& [name, _] : expected) {
    if (!seen.count(name)) throw FormatError("truncated checkpoint: missing record '" + name + "'");
  }
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(ckpt);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_checkpoint(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace rose
