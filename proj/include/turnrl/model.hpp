#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "turnrl/random.hpp"
#include "turnrl/vocab.hpp"

namespace turnrl::model {

struct Architecture {
  std::size_t vocab = 0;
  std::size_t embed_dim = 32;
  std::size_t window = 32;  // context tokens seen; shorter contexts are left-padded
  std::size_t hidden = 64;
  bool value_head = false;

  std::size_t parameter_count() const;
  friend bool operator==(const Architecture&, const Architecture&) = default;
};

Architecture default_architecture(bool value_head = false);

// Flat parameters with gradient accumulator and Adam moments.
struct ParamStore {
  std::vector<double> values;
  std::vector<double> grads;
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::uint64_t step_count = 0;

  explicit ParamStore(std::size_t n = 0)
      : values(n, 0.0), grads(n, 0.0), first_moment(n, 0.0), second_moment(n, 0.0) {}
  std::size_t size() const { return values.size(); }
};

struct AdamOptions {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

void zero_grads(ParamStore& store);
// Bias-corrected Adam update. Throws std::runtime_error on non-finite
// gradients (parameters are left untouched in that case).
void adam_step(ParamStore& store, const AdamOptions& options);
double grad_norm(const ParamStore& store);

// Everything the backward pass needs from one forward evaluation.
struct Activation {
  std::vector<TokenId> window;
  std::vector<double> hidden;
  std::vector<double> feature;
  std::vector<double> logits;     // empty when the policy head was skipped
  std::vector<double> log_probs;  // log-softmax of logits
  double value = 0.0;
};

// A scalar loss plus the tape of forward evaluations it was built from. Each
// entry carries the loss adjoint with respect to log pi(token | context) and
// to the value-head output at that context.
class LossNode {
 public:
  struct Entry {
    Activation activation;
    TokenId token = 0;
    double logprob_adjoint = 0.0;
    double value_adjoint = 0.0;
  };

  double value = 0.0;

  std::size_t record(Activation activation, TokenId token = 0);
  void seed_logprob(std::size_t entry, double adjoint) { entries_[entry].logprob_adjoint += adjoint; }
  void seed_value(std::size_t entry, double adjoint) { entries_[entry].value_adjoint += adjoint; }
  const Activation& activation(std::size_t entry) const { return entries_[entry].activation; }
  std::span<const Entry> entries() const { return entries_; }
  void append(LossNode&& other);

 private:
  std::vector<Entry> entries_;
};

enum class Execution { serial, parallel };

struct Sample {
  std::vector<TokenId> tokens;
  std::vector<double> logprobs;  // log pi(token | prefix) at sampling time
};

class PolicyModel {
 public:
  // Embeddings Uniform(-init_scale, init_scale); dense weights Glorot-uniform;
  // biases and the value head zero.
  PolicyModel(const Architecture& arch, std::uint64_t seed, double init_scale = 1.0);
  static PolicyModel zeros(const Architecture& arch);

  const Architecture& arch() const { return arch_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  // Throws std::invalid_argument on an empty context or out-of-vocabulary id.
  Activation forward(std::span<const TokenId> context, bool with_logits = true) const;
  std::vector<double> forward_logits(std::span<const TokenId> context) const;
  double logprob(std::span<const TokenId> context, TokenId token) const;
  double value(std::span<const TokenId> context) const;  // std::logic_error without a value head

  // Samples until the end marker or max_len tokens. temperature == 0 is
  // greedy argmax. Recorded logprobs are always under the model itself
  // (temperature 1), which is what importance ratios compare against.
  Sample sample_response(std::span<const TokenId> context, std::size_t max_len,
                         double temperature, Rng& rng) const;

  // Adds d(loss)/d(params) for one tape entry into `grads`.
  void accumulate(const Activation& act, std::span<const double> dlogits, double dvalue,
                  std::span<double> grads) const;

  // Reverse pass over the whole tape into params().grads. Both execution
  // modes use the same fixed block partition, so they agree bit-for-bit.
  // Throws std::runtime_error when the loss is not finite.
  void backward(const LossNode& loss, Execution exec = Execution::parallel);
  // Straight entry-by-entry accumulation; reference for the blocked pass.
  void backward_reference(const LossNode& loss);

  void save(const std::filesystem::path& path) const;
  // Loads parameter values. Throws std::runtime_error if the stored
  // architecture differs from this model's.
  void load(const std::filesystem::path& path);
  static PolicyModel from_checkpoint(const std::filesystem::path& path);

 private:
  struct Layout {
    std::size_t embed, w1, b1, w2, b2, policy_w, policy_b, value_w, value_b, total;
  };
  static Layout layout_for(const Architecture& arch);

  explicit PolicyModel(const Architecture& arch);
  void entry_adjoints(const LossNode::Entry& entry, std::vector<double>& dlogits) const;

  Architecture arch_;
  Layout layout_;
  ParamStore params_;
};

}  // namespace turnrl::model
