#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sarl/grid.hpp"

namespace sarl {

// Shape of the policy/value network: an MLP over the flattened one-hot
// observation with tanh hidden layers, a linear policy head and a linear
// value head sharing the trunk.
struct Architecture {
  int channels = kObsChannels;
  int height = 10;
  int width = 10;
  std::vector<int> hidden{64, 64};
  int actions = kNumActions;
  // Toroidally shift the input so the agent sits at (height/2, width/2)
  // before the first layer. A fixed permutation of the input; it only changes
  // which weight each cell meets.
  bool egocentric = true;

  int input_size() const { return channels * height * width; }
  std::size_t param_count() const;
  bool operator==(const Architecture&) const = default;
};

// Flat parameter vector. Layout, in order:
//   layer 0 weights stored input-major [input][hidden0], then bias[hidden0];
//   layer l>0 weights [hidden_l][hidden_{l-1}], then bias[hidden_l];
//   policy head [actions][hidden_last], bias[actions];
//   value head [hidden_last], bias (1).
struct PolicyParams {
  Architecture arch;
  std::vector<double> flat;
  std::uint32_t version = 0;  // incremented by each optimizer step
};

using ActionProbs = std::array<double, kNumActions>;

// Probability vector over the action set.
struct ActionDistribution {
  ActionProbs probs{};
};

ActionDistribution softmax(std::span<const double> logits);
// log softmax, computed with the max-shift.
ActionProbs log_softmax(std::span<const double> logits);

struct ForwardOutput {
  ActionProbs logits{};
  double value = 0.0;
  // Cached for the backward pass.
  std::vector<int> active;            // nonzero input indices after recentering
  std::vector<double> active_values;  // their values
  std::vector<double> hidden;         // concatenated post-tanh activations

  ActionDistribution distribution() const { return softmax(logits); }
};

class ShapeMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NonFiniteLoss : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

PolicyParams init_params(const Architecture& arch, std::uint64_t seed);
PolicyParams zero_params(const Architecture& arch);

ForwardOutput forward(const PolicyParams& params, std::span<const double> observation);
inline ForwardOutput forward(const PolicyParams& params, const Observation& obs) {
  return forward(params, std::span<const double>(obs.data));
}

// Loss evaluated on a batch of forward outputs, with its derivative with
// respect to each output's logits and value.
struct HeadLoss {
  double loss = 0.0;
  std::vector<ActionProbs> d_logits;
  std::vector<double> d_value;
};

using HeadLossFn = std::function<HeadLoss(std::span<const ForwardOutput>)>;

// Adds d(loss)/d(params) for one sample into `grad`.
void accumulate_gradient(const PolicyParams& params, const ForwardOutput& out,
                         std::span<const double> d_logits, double d_value, std::span<double> grad);

struct LossAndGradient {
  double loss = 0.0;
  std::vector<double> grad;
};

// Forward every observation, evaluate the head loss, backpropagate. Throws
// NonFiniteLoss if the loss or any head derivative is not finite.
LossAndGradient gradient(const PolicyParams& params, std::span<const std::span<const double>> observations,
                         const HeadLossFn& loss_fn);

// Checkpoint file: "SARLCKPT" magic, u32 format version, architecture
// descriptor, u32 parameter version, u64 count, float64 values (all little
// endian), trailing SHA-256 of everything before it.
inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void save_checkpoint(const std::filesystem::path& path, const PolicyParams& params);
PolicyParams load_checkpoint(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_checkpoint(const PolicyParams& params);
PolicyParams decode_checkpoint(std::span<const std::uint8_t> bytes);

// Hex SHA-256 over the canonical encoding of the architecture descriptor and
// the flat vector (version tag excluded).
std::string param_hash(const PolicyParams& params);

std::string sha256_hex(std::span<const std::uint8_t> bytes);

}  // namespace sarl
