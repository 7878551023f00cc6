#include "sarl/policy.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <random>

#include "sarl/rng.hpp"

namespace sarl {

namespace {

void validate(const Architecture& arch) {
  if (arch.channels <= 0 || arch.height <= 0 || arch.width <= 0) {
    throw ShapeMismatch("architecture input shape must be positive");
  }
  if (arch.hidden.empty()) throw ShapeMismatch("architecture needs at least one hidden layer");
  for (int h : arch.hidden) {
    if (h <= 0) throw ShapeMismatch("hidden layer sizes must be positive");
  }
  if (arch.actions != kNumActions) throw ShapeMismatch("action count must be 9");
}

// Offsets into the flat vector.
struct Layout {
  struct Layer {
    std::size_t w = 0, b = 0;
    int in = 0, out = 0;
  };
  std::vector<Layer> layers;  // hidden layers
  Layer policy;
  Layer value;
  std::size_t total = 0;

  explicit Layout(const Architecture& arch) {
    std::size_t off = 0;
    int in = arch.input_size();
    auto take = [&](int out) {
      Layer l{off, off + static_cast<std::size_t>(in) * out, in, out};
      off = l.b + out;
      return l;
    };
    for (int h : arch.hidden) {
      layers.push_back(take(h));
      in = h;
    }
    policy = take(arch.actions);
    value = take(1);
    total = off;
  }
};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, sizeof bits);
  put_u64(out, bits);
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}
  std::uint64_t u(int width) {
    if (pos_ + width > bytes_.size()) throw CheckpointError("truncated checkpoint");
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += width;
    return v;
  }
  std::uint32_t u32() { return static_cast<std::uint32_t>(u(4)); }
  std::uint64_t u64() { return u(8); }
  double f64() {
    const std::uint64_t bits = u64();
    double d;
    std::memcpy(&d, &bits, sizeof d);
    return d;
  }
  std::size_t pos() const { return pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

constexpr char kMagic[8] = {'S', 'A', 'R', 'L', 'C', 'K', 'P', 'T'};
constexpr std::size_t kDigestSize = 32;

void encode_arch(std::vector<std::uint8_t>& out, const Architecture& arch) {
  put_u32(out, static_cast<std::uint32_t>(arch.channels));
  put_u32(out, static_cast<std::uint32_t>(arch.height));
  put_u32(out, static_cast<std::uint32_t>(arch.width));
  put_u32(out, static_cast<std::uint32_t>(arch.hidden.size()));
  for (int h : arch.hidden) put_u32(out, static_cast<std::uint32_t>(h));
  put_u32(out, static_cast<std::uint32_t>(arch.actions));
  out.push_back(arch.egocentric ? 1 : 0);
}

std::array<std::uint8_t, kDigestSize> sha256(std::span<const std::uint8_t> bytes) {
  std::array<std::uint8_t, kDigestSize> digest{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1 ||
      len != kDigestSize) {
    throw std::runtime_error("SHA-256 computation failed");
  }
  return digest;
}

}  // namespace

std::size_t Architecture::param_count() const {
  validate(*this);
  return Layout(*this).total;
}

ActionDistribution softmax(std::span<const double> logits) {
  ActionDistribution d;
  const double m = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (int i = 0; i < kNumActions; ++i) {
    d.probs[i] = std::exp(logits[i] - m);
    sum += d.probs[i];
  }
  for (double& p : d.probs) p /= sum;
  return d;
}

ActionProbs log_softmax(std::span<const double> logits) {
  ActionProbs out{};
  const double m = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (int i = 0; i < kNumActions; ++i) sum += std::exp(logits[i] - m);
  const double lse = m + std::log(sum);
  for (int i = 0; i < kNumActions; ++i) out[i] = logits[i] - lse;
  return out;
}

PolicyParams zero_params(const Architecture& arch) {
  validate(arch);
  PolicyParams p;
  p.arch = arch;
  p.flat.assign(Layout(arch).total, 0.0);
  return p;
}

PolicyParams init_params(const Architecture& arch, std::uint64_t seed) {
  PolicyParams p = zero_params(arch);
  const Layout layout(arch);
  std::mt19937_64 eng(seed);
  // Uniform(-a, a) with a = gain * sqrt(3 / fan_in), i.e. variance gain^2 / fan_in.
  auto fill = [&](const Layout::Layer& l, double gain) {
    const double a = gain * std::sqrt(3.0 / l.in);
    for (std::size_t i = l.w; i < l.b; ++i) p.flat[i] = (2.0 * uniform01(eng) - 1.0) * a;
  };
  for (const auto& l : layout.layers) fill(l, std::sqrt(2.0));
  fill(layout.policy, 0.01);
  fill(layout.value, 1.0);
  return p;
}

ForwardOutput forward(const PolicyParams& params, std::span<const double> observation) {
  const Architecture& arch = params.arch;
  if (static_cast<int>(observation.size()) != arch.input_size()) {
    throw ShapeMismatch("observation has " + std::to_string(observation.size()) +
                        " values, architecture expects " + std::to_string(arch.input_size()));
  }
  const Layout layout(arch);
  if (params.flat.size() != layout.total) throw ShapeMismatch("parameter vector length mismatch");
  const double* w = params.flat.data();
  const int plane = arch.height * arch.width;

  ForwardOutput out;
  int shift_r = 0, shift_c = 0;
  if (arch.egocentric && arch.channels > kAgentChannel) {
    const double* agent = observation.data() + kAgentChannel * plane;
    for (int i = 0; i < plane; ++i) {
      if (agent[i] != 0.0) {
        shift_r = arch.height / 2 - i / arch.width;
        shift_c = arch.width / 2 - i % arch.width;
        break;
      }
    }
  }
  for (int i = 0; i < arch.input_size(); ++i) {
    if (observation[i] == 0.0) continue;
    int idx = i;
    if (shift_r != 0 || shift_c != 0) {
      const int ch = i / plane;
      const int r = ((i % plane) / arch.width + shift_r + arch.height) % arch.height;
      const int c = (i % arch.width + shift_c + arch.width) % arch.width;
      idx = ch * plane + r * arch.width + c;
    }
    out.active.push_back(idx);
    out.active_values.push_back(observation[i]);
  }

  std::size_t hidden_total = 0;
  for (int h : arch.hidden) hidden_total += h;
  out.hidden.assign(hidden_total, 0.0);

  // Layer 0: sparse input, weights stored input-major.
  const auto& l0 = layout.layers[0];
  double* h = out.hidden.data();
  std::copy(w + l0.b, w + l0.b + l0.out, h);
  for (std::size_t k = 0; k < out.active.size(); ++k) {
    const double* row = w + l0.w + static_cast<std::size_t>(out.active[k]) * l0.out;
    const double v = out.active_values[k];
    for (int j = 0; j < l0.out; ++j) h[j] += v * row[j];
  }
  for (int j = 0; j < l0.out; ++j) h[j] = std::tanh(h[j]);

  const double* prev = h;
  double* cur = h + l0.out;
  for (std::size_t li = 1; li < layout.layers.size(); ++li) {
    const auto& l = layout.layers[li];
    for (int j = 0; j < l.out; ++j) {
      const double* row = w + l.w + static_cast<std::size_t>(j) * l.in;
      double s = w[l.b + j];
      for (int i = 0; i < l.in; ++i) s += row[i] * prev[i];
      cur[j] = std::tanh(s);
    }
    prev = cur;
    cur += l.out;
  }

  const auto& pl = layout.policy;
  for (int a = 0; a < pl.out; ++a) {
    const double* row = w + pl.w + static_cast<std::size_t>(a) * pl.in;
    double s = w[pl.b + a];
    for (int i = 0; i < pl.in; ++i) s += row[i] * prev[i];
    out.logits[a] = s;
  }
  const auto& vl = layout.value;
  double v = w[vl.b];
  for (int i = 0; i < vl.in; ++i) v += w[vl.w + i] * prev[i];
  out.value = v;
  return out;
}

void accumulate_gradient(const PolicyParams& params, const ForwardOutput& out,
                         std::span<const double> d_logits, double d_value, std::span<double> grad) {
  const Architecture& arch = params.arch;
  const Layout layout(arch);
  const double* w = params.flat.data();
  const std::size_t n_layers = layout.layers.size();

  std::vector<std::size_t> act_off(n_layers, 0);
  for (std::size_t li = 1; li < n_layers; ++li) act_off[li] = act_off[li - 1] + layout.layers[li - 1].out;
  const double* last = out.hidden.data() + act_off.back();
  const int last_n = layout.layers.back().out;

  std::vector<double> dh(last_n, 0.0);
  const auto& pl = layout.policy;
  for (int a = 0; a < pl.out; ++a) {
    const double g = d_logits[a];
    if (g == 0.0) continue;
    grad[pl.b + a] += g;
    double* gw = grad.data() + pl.w + static_cast<std::size_t>(a) * pl.in;
    const double* row = w + pl.w + static_cast<std::size_t>(a) * pl.in;
    for (int i = 0; i < pl.in; ++i) {
      gw[i] += g * last[i];
      dh[i] += g * row[i];
    }
  }
  const auto& vl = layout.value;
  if (d_value != 0.0) {
    grad[vl.b] += d_value;
    for (int i = 0; i < vl.in; ++i) {
      grad[vl.w + i] += d_value * last[i];
      dh[i] += d_value * w[vl.w + i];
    }
  }

  std::vector<double> da;
  for (std::size_t li = n_layers; li-- > 0;) {
    const auto& l = layout.layers[li];
    const double* act = out.hidden.data() + act_off[li];
    da.assign(l.out, 0.0);
    for (int j = 0; j < l.out; ++j) da[j] = dh[j] * (1.0 - act[j] * act[j]);
    for (int j = 0; j < l.out; ++j) grad[l.b + j] += da[j];
    if (li == 0) {
      for (std::size_t k = 0; k < out.active.size(); ++k) {
        double* gw = grad.data() + l.w + static_cast<std::size_t>(out.active[k]) * l.out;
        const double v = out.active_values[k];
        for (int j = 0; j < l.out; ++j) gw[j] += v * da[j];
      }
      break;
    }
    const double* prev = out.hidden.data() + act_off[li - 1];
    std::vector<double> dprev(l.in, 0.0);
    for (int j = 0; j < l.out; ++j) {
      const double g = da[j];
      double* gw = grad.data() + l.w + static_cast<std::size_t>(j) * l.in;
      const double* row = w + l.w + static_cast<std::size_t>(j) * l.in;
      for (int i = 0; i < l.in; ++i) {
        gw[i] += g * prev[i];
        dprev[i] += g * row[i];
      }
    }
    dh = std::move(dprev);
  }
}

LossAndGradient gradient(const PolicyParams& params, std::span<const std::span<const double>> observations,
                         const HeadLossFn& loss_fn) {
  std::vector<ForwardOutput> outs;
  outs.reserve(observations.size());
  for (auto obs : observations) outs.push_back(forward(params, obs));
  HeadLoss head = loss_fn(outs);
  if (!std::isfinite(head.loss)) throw NonFiniteLoss("loss is not finite");
  if (head.d_logits.size() != outs.size() || head.d_value.size() != outs.size()) {
    throw ShapeMismatch("head loss derivative count does not match batch size");
  }
  LossAndGradient res;
  res.loss = head.loss;
  res.grad.assign(params.flat.size(), 0.0);
  for (std::size_t i = 0; i < outs.size(); ++i) {
    for (double g : head.d_logits[i]) {
      if (!std::isfinite(g)) throw NonFiniteLoss("logit derivative is not finite");
    }
    if (!std::isfinite(head.d_value[i])) throw NonFiniteLoss("value derivative is not finite");
    accumulate_gradient(params, outs[i], head.d_logits[i], head.d_value[i], res.grad);
  }
  return res;
}

std::vector<std::uint8_t> encode_checkpoint(const PolicyParams& params) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_u32(out, kCheckpointFormatVersion);
  encode_arch(out, params.arch);
  put_u32(out, params.version);
  put_u64(out, params.flat.size());
  for (double d : params.flat) put_f64(out, d);
  const auto digest = sha256(out);
  out.insert(out.end(), digest.begin(), digest.end());
  return out;
}

PolicyParams decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < sizeof kMagic + 4 + kDigestSize ||
      !std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin())) {
    throw CheckpointError("not a checkpoint file (bad magic)");
  }
  const auto body = bytes.first(bytes.size() - kDigestSize);
  const auto digest = sha256(body);
  if (!std::equal(digest.begin(), digest.end(), bytes.end() - kDigestSize)) {
    throw CheckpointError("checkpoint checksum mismatch");
  }
  Reader r(body.subspan(sizeof kMagic));
  const std::uint32_t format = r.u32();
  if (format != kCheckpointFormatVersion) {
    throw CheckpointError("checkpoint format version " + std::to_string(format) + ", expected " +
                          std::to_string(kCheckpointFormatVersion));
  }
  PolicyParams p;
  p.arch.channels = static_cast<int>(r.u32());
  p.arch.height = static_cast<int>(r.u32());
  p.arch.width = static_cast<int>(r.u32());
  const std::uint32_t n_hidden = r.u32();
  if (n_hidden > 64) throw CheckpointError("implausible hidden layer count");
  p.arch.hidden.clear();
  for (std::uint32_t i = 0; i < n_hidden; ++i) p.arch.hidden.push_back(static_cast<int>(r.u32()));
  p.arch.actions = static_cast<int>(r.u32());
  p.arch.egocentric = r.u(1) != 0;
  p.version = r.u32();
  const std::uint64_t count = r.u64();
  try {
    validate(p.arch);
  } catch (const ShapeMismatch& e) {
    throw CheckpointError(std::string("bad architecture: ") + e.what());
  }
  if (count != p.arch.param_count()) throw CheckpointError("parameter count does not match architecture");
  p.flat.resize(count);
  for (auto& d : p.flat) d = r.f64();
  if (r.pos() != body.size() - sizeof kMagic) throw CheckpointError("trailing bytes in checkpoint");
  return p;
}

void save_checkpoint(const std::filesystem::path& path, const PolicyParams& params) {
  const auto bytes = encode_checkpoint(params);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("write failed: " + path.string());
}

PolicyParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string s;
  for (std::uint8_t b : sha256(bytes)) {
    s.push_back(kHex[b >> 4]);
    s.push_back(kHex[b & 15]);
  }
  return s;
}

std::string param_hash(const PolicyParams& params) {
  std::vector<std::uint8_t> buf;
  encode_arch(buf, params.arch);
  put_u64(buf, params.flat.size());
  for (double d : params.flat) put_f64(buf, d);
  return sha256_hex(buf);
}

}  // namespace sarl
