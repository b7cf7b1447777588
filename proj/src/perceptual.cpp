#include "t2v/perceptual.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

namespace t2v {

namespace {

constexpr char kMagic[4] = {'T', '2', 'V', 'W'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "weights files are little-endian");

class Reader {
 public:
  explicit Reader(std::ifstream& in) : in_(in) {}

  bool read(void* dst, std::size_t size) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(size));
    return static_cast<std::size_t>(in_.gcount()) == size;
  }
  bool u32(std::uint32_t& v) { return read(&v, sizeof v); }

 private:
  std::ifstream& in_;
};

template <typename V>
void write_raw(std::ofstream& out, const V& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

}  // namespace

PerceptualNet<float> load_pretrained(const std::filesystem::path& path,
                                     const std::string& expected_sha256) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("perceptual: cannot open weights file " + path.string());
  Reader r(in);
  char magic[4] = {};
  std::uint32_t version = 0;
  std::uint32_t count = 0;
  if (!r.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw LoadError("perceptual: " + path.string() + " is not a weights file");
  }
  if (!r.u32(version) || version != kVersion) {
    throw LoadError("perceptual: unsupported weights file version");
  }
  if (!r.u32(count)) throw LoadError("perceptual: truncated header");

  const auto layout = vgg19_parameter_layout();
  if (count > layout.size()) throw LoadError("perceptual: too many tensors in weights file");
  std::vector<Parameter<float>> params;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto& [expected_name, expected_shape] = layout[i];
    std::uint32_t name_len = 0;
    if (!r.u32(name_len) || name_len > 256) {
      throw LoadError("perceptual: mismatching parameter " + expected_name + " (bad header)");
    }
    std::string name(name_len, '\0');
    std::uint32_t rank = 0;
    if (!r.read(name.data(), name_len) || !r.u32(rank) || rank > 8) {
      throw LoadError("perceptual: mismatching parameter " + expected_name + " (bad header)");
    }
    std::vector<std::int32_t> dims(rank);
    if (!r.read(dims.data(), rank * sizeof(std::int32_t))) {
      throw LoadError("perceptual: mismatching parameter " + expected_name + " (bad header)");
    }
    const std::vector<int> shape(dims.begin(), dims.end());
    if (name != expected_name || shape != expected_shape) {
      throw LoadError("perceptual: mismatching parameter " + expected_name + " (found " + name + ")");
    }
    Parameter<float> p(name, shape);
    if (!r.read(p.value.data(), p.size() * sizeof(float))) {
      throw LoadError("perceptual: mismatching parameter " + expected_name + " (truncated data)");
    }
    for (float v : p.value) {
      if (!std::isfinite(v)) throw LoadError("perceptual: non-finite value in " + expected_name);
    }
    params.push_back(std::move(p));
  }
  char extra = 0;
  if (r.read(&extra, 1)) throw LoadError("perceptual: trailing bytes after last tensor");

  const std::string digest = sha256_file(path);
  if (!expected_sha256.empty() && digest != expected_sha256) {
    throw LoadError("perceptual: weights digest " + digest + " does not match configured " +
                    expected_sha256);
  }
  return PerceptualNet<float>(std::move(params), digest);
}

void save_weights(const std::filesystem::path& path, const std::vector<Parameter<float>>& params) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(kMagic, 4);
  write_raw(out, kVersion);
  write_raw(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    write_raw(out, static_cast<std::uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    write_raw(out, static_cast<std::uint32_t>(p.shape.size()));
    for (int d : p.shape) write_raw(out, static_cast<std::int32_t>(d));
    out.write(reinterpret_cast<const char*>(p.value.data()),
              static_cast<std::streamsize>(p.size() * sizeof(float)));
  }
  if (!out) throw Error("short write to " + path.string());
}

std::vector<Parameter<float>> random_vgg19_parameters(std::uint64_t seed,
                                                      const std::string& last_layer) {
  std::mt19937_64 rng(seed);
  std::vector<Parameter<float>> params;
  bool found = false;
  for (const auto& [name, shape] : vgg19_parameter_layout()) {
    Parameter<float> p(name, shape);
    if (shape.size() == 4) {
      const int fan_in = shape[1] * shape[2] * shape[3];
      std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
      for (float& v : p.value) v = static_cast<float>(dist(rng));
    }
    params.push_back(std::move(p));
    if (name == last_layer + ".bias") {
      found = true;
      break;
    }
  }
  if (!found) throw LookupError("perceptual: unknown layer " + last_layer);
  return params;
}

}  // namespace t2v
