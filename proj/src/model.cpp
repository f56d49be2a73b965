#include "turnrl/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "turnrl/parallel.hpp"

namespace turnrl::model {

namespace {

constexpr char kMagic[8] = {'T', 'R', 'L', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kCheckpointVersion = 1;

// Upper bound on gradient buffers used by the blocked backward pass.
constexpr std::size_t kBackwardBlocks = 8;

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("truncated checkpoint");
  return v;
}

double log_sum_exp(std::span<const double> xs) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : xs) m = std::max(m, x);
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

}  // namespace

std::size_t Architecture::parameter_count() const {
  const std::size_t d = embed_dim;
  std::size_t n = vocab * d                 // embeddings
                  + hidden * window * d + hidden  // encoder layer 1
                  + d * hidden + d                // encoder layer 2
                  + vocab * d + vocab;            // policy head
  if (value_head) n += d + 1;
  return n;
}

Architecture default_architecture(bool value_head) {
  Architecture a;
  a.vocab = Vocabulary::get().size();
  a.value_head = value_head;
  return a;
}

// ---------------------------------------------------------------------------

void zero_grads(ParamStore& store) { std::fill(store.grads.begin(), store.grads.end(), 0.0); }

double grad_norm(const ParamStore& store) {
  double s = 0.0;
  for (double g : store.grads) s += g * g;
  return std::sqrt(s);
}

void adam_step(ParamStore& store, const AdamOptions& o) {
  for (double g : store.grads)
    if (!std::isfinite(g)) throw std::runtime_error("adam_step: non-finite gradient");
  store.step_count += 1;
  const double t = static_cast<double>(store.step_count);
  const double c1 = 1.0 - std::pow(o.beta1, t);
  const double c2 = 1.0 - std::pow(o.beta2, t);
  for (std::size_t i = 0; i < store.size(); ++i) {
    const double g = store.grads[i];
    double& m = store.first_moment[i];
    double& v = store.second_moment[i];
    m = o.beta1 * m + (1.0 - o.beta1) * g;
    v = o.beta2 * v + (1.0 - o.beta2) * g * g;
    store.values[i] -= o.lr * (m / c1) / (std::sqrt(v / c2) + o.eps);
  }
}

// ---------------------------------------------------------------------------

std::size_t LossNode::record(Activation activation, TokenId token) {
  entries_.push_back(Entry{std::move(activation), token, 0.0, 0.0});
  return entries_.size() - 1;
}

void LossNode::append(LossNode&& other) {
  value += other.value;
  entries_.insert(entries_.end(), std::make_move_iterator(other.entries_.begin()),
                  std::make_move_iterator(other.entries_.end()));
  other.entries_.clear();
}

// ---------------------------------------------------------------------------

PolicyModel::Layout PolicyModel::layout_for(const Architecture& a) {
  Layout l{};
  const std::size_t d = a.embed_dim;
  std::size_t at = 0;
  l.embed = at; at += a.vocab * d;
  l.w1 = at; at += a.hidden * a.window * d;
  l.b1 = at; at += a.hidden;
  l.w2 = at; at += d * a.hidden;
  l.b2 = at; at += d;
  l.policy_w = at; at += a.vocab * d;
  l.policy_b = at; at += a.vocab;
  l.value_w = at; if (a.value_head) at += d;
  l.value_b = at; if (a.value_head) at += 1;
  l.total = at;
  return l;
}

PolicyModel::PolicyModel(const Architecture& arch)
    : arch_(arch), layout_(layout_for(arch)), params_(layout_.total) {
  if (arch.vocab == 0 || arch.embed_dim == 0 || arch.window == 0 || arch.hidden == 0)
    throw std::invalid_argument("architecture dimensions must be positive");
}

PolicyModel::PolicyModel(const Architecture& arch, std::uint64_t seed, double init_scale)
    : PolicyModel(arch) {
  Rng rng(seed);
  auto fill = [&](std::size_t begin, std::size_t count, double limit) {
    for (std::size_t i = 0; i < count; ++i) params_.values[begin + i] = rng.uniform(-limit, limit);
  };
  auto glorot = [](std::size_t fan_in, std::size_t fan_out) {
    return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  };
  const std::size_t d = arch.embed_dim, W = arch.window, H = arch.hidden, V = arch.vocab;
  fill(layout_.embed, V * d, init_scale);
  fill(layout_.w1, H * W * d, glorot(W * d, H));
  fill(layout_.w2, d * H, glorot(H, d));
  fill(layout_.policy_w, V * d, glorot(d, V));
  // biases and the value head start at zero
}

PolicyModel PolicyModel::zeros(const Architecture& arch) { return PolicyModel(arch); }

Activation PolicyModel::forward(std::span<const TokenId> context, bool with_logits) const {
  if (context.empty()) throw std::invalid_argument("forward: empty context");
  const std::size_t d = arch_.embed_dim, W = arch_.window, H = arch_.hidden;
  const double* p = params_.values.data();

  Activation act;
  act.window.assign(W, tok::kPad);
  const std::size_t take = std::min(W, context.size());
  for (std::size_t i = 0; i < take; ++i) {
    const TokenId t = context[context.size() - take + i];
    if (t >= arch_.vocab)
      throw std::invalid_argument("forward: token id " + std::to_string(t) + " out of vocabulary");
    act.window[W - take + i] = t;
  }

  std::vector<double> x(W * d);
  for (std::size_t w = 0; w < W; ++w)
    std::memcpy(&x[w * d], p + layout_.embed + act.window[w] * d, d * sizeof(double));

  act.hidden.resize(H);
  for (std::size_t j = 0; j < H; ++j) {
    const double* row = p + layout_.w1 + j * W * d;
    double s = p[layout_.b1 + j];
    for (std::size_t k = 0; k < W * d; ++k) s += row[k] * x[k];
    act.hidden[j] = std::tanh(s);
  }

  act.feature.resize(d);
  for (std::size_t i = 0; i < d; ++i) {
    const double* row = p + layout_.w2 + i * H;
    double s = p[layout_.b2 + i];
    for (std::size_t j = 0; j < H; ++j) s += row[j] * act.hidden[j];
    act.feature[i] = std::tanh(s);
  }

  if (with_logits) {
    act.logits.resize(arch_.vocab);
    for (std::size_t v = 0; v < arch_.vocab; ++v) {
      const double* row = p + layout_.policy_w + v * d;
      double s = p[layout_.policy_b + v];
      for (std::size_t i = 0; i < d; ++i) s += row[i] * act.feature[i];
      act.logits[v] = s;
    }
    const double lse = log_sum_exp(act.logits);
    act.log_probs.resize(arch_.vocab);
    for (std::size_t v = 0; v < arch_.vocab; ++v) act.log_probs[v] = act.logits[v] - lse;
  }

  if (arch_.value_head) {
    double s = p[layout_.value_b];
    for (std::size_t i = 0; i < d; ++i) s += p[layout_.value_w + i] * act.feature[i];
    act.value = s;
  }
  return act;
}

std::vector<double> PolicyModel::forward_logits(std::span<const TokenId> context) const {
  return forward(context).logits;
}

double PolicyModel::logprob(std::span<const TokenId> context, TokenId token) const {
  if (token >= arch_.vocab)
    throw std::invalid_argument("logprob: token id " + std::to_string(token) + " out of vocabulary");
  return forward(context).log_probs[token];
}

double PolicyModel::value(std::span<const TokenId> context) const {
  if (!arch_.value_head) throw std::logic_error("value: model has no value head");
  return forward(context, false).value;
}

Sample PolicyModel::sample_response(std::span<const TokenId> context, std::size_t max_len,
                                    double temperature, Rng& rng) const {
  if (max_len == 0) throw std::invalid_argument("sample_response: max_len must be >= 1");
  if (temperature < 0.0) throw std::invalid_argument("sample_response: negative temperature");
  std::vector<TokenId> ctx(context.begin(), context.end());
  Sample out;
  std::vector<double> probs(arch_.vocab);
  while (out.tokens.size() < max_len) {
    const Activation act = forward(ctx);
    TokenId chosen = 0;
    if (temperature == 0.0) {
      chosen = static_cast<TokenId>(
          std::max_element(act.logits.begin(), act.logits.end()) - act.logits.begin());
    } else {
      if (temperature == 1.0) {
        for (std::size_t v = 0; v < arch_.vocab; ++v) probs[v] = std::exp(act.log_probs[v]);
      } else {
        std::vector<double> scaled(act.logits);
        for (double& s : scaled) s /= temperature;
        const double lse = log_sum_exp(scaled);
        for (std::size_t v = 0; v < arch_.vocab; ++v) probs[v] = std::exp(scaled[v] - lse);
      }
      const double u = rng.uniform();
      double cum = 0.0;
      chosen = static_cast<TokenId>(arch_.vocab - 1);
      for (std::size_t v = 0; v < arch_.vocab; ++v) {
        cum += probs[v];
        if (u < cum) {
          chosen = static_cast<TokenId>(v);
          break;
        }
      }
    }
    out.tokens.push_back(chosen);
    out.logprobs.push_back(act.log_probs[chosen]);
    ctx.push_back(chosen);
    if (chosen == tok::kEnd) break;
  }
  return out;
}

// ---------------------------------------------------------------------------

void PolicyModel::accumulate(const Activation& act, std::span<const double> dlogits, double dvalue,
                             std::span<double> grads) const {
  const std::size_t d = arch_.embed_dim, W = arch_.window, H = arch_.hidden;
  const double* p = params_.values.data();
  double* g = grads.data();

  std::vector<double> dfeature(d, 0.0);
  if (!dlogits.empty()) {
    for (std::size_t v = 0; v < arch_.vocab; ++v) {
      const double dl = dlogits[v];
      if (dl == 0.0) continue;
      g[layout_.policy_b + v] += dl;
      double* grow = g + layout_.policy_w + v * d;
      const double* prow = p + layout_.policy_w + v * d;
      for (std::size_t i = 0; i < d; ++i) {
        grow[i] += dl * act.feature[i];
        dfeature[i] += dl * prow[i];
      }
    }
  }
  if (arch_.value_head && dvalue != 0.0) {
    g[layout_.value_b] += dvalue;
    for (std::size_t i = 0; i < d; ++i) {
      g[layout_.value_w + i] += dvalue * act.feature[i];
      dfeature[i] += dvalue * p[layout_.value_w + i];
    }
  }

  std::vector<double> dz2(d);
  for (std::size_t i = 0; i < d; ++i)
    dz2[i] = dfeature[i] * (1.0 - act.feature[i] * act.feature[i]);

  std::vector<double> dhidden(H, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    if (dz2[i] == 0.0) continue;
    g[layout_.b2 + i] += dz2[i];
    double* grow = g + layout_.w2 + i * H;
    const double* prow = p + layout_.w2 + i * H;
    for (std::size_t j = 0; j < H; ++j) {
      grow[j] += dz2[i] * act.hidden[j];
      dhidden[j] += dz2[i] * prow[j];
    }
  }

  std::vector<double> dx(W * d, 0.0);
  for (std::size_t j = 0; j < H; ++j) {
    const double dz1 = dhidden[j] * (1.0 - act.hidden[j] * act.hidden[j]);
    if (dz1 == 0.0) continue;
    g[layout_.b1 + j] += dz1;
    double* grow = g + layout_.w1 + j * W * d;
    const double* prow = p + layout_.w1 + j * W * d;
    for (std::size_t w = 0; w < W; ++w) {
      const double* e = p + layout_.embed + act.window[w] * d;
      for (std::size_t i = 0; i < d; ++i) {
        grow[w * d + i] += dz1 * e[i];
        dx[w * d + i] += dz1 * prow[w * d + i];
      }
    }
  }

  for (std::size_t w = 0; w < W; ++w) {
    double* ge = g + layout_.embed + act.window[w] * d;
    for (std::size_t i = 0; i < d; ++i) ge[i] += dx[w * d + i];
  }
}

void PolicyModel::entry_adjoints(const LossNode::Entry& e, std::vector<double>& dlogits) const {
  dlogits.clear();
  if (e.logprob_adjoint == 0.0 || e.activation.log_probs.empty()) return;
  // d log softmax(z)_t / dz = onehot(t) - softmax(z)
  dlogits.resize(arch_.vocab);
  for (std::size_t v = 0; v < arch_.vocab; ++v)
    dlogits[v] = -e.logprob_adjoint * std::exp(e.activation.log_probs[v]);
  dlogits[e.token] += e.logprob_adjoint;
}

void PolicyModel::backward(const LossNode& loss, Execution exec) {
  if (!std::isfinite(loss.value)) throw std::runtime_error("backward: non-finite loss");
  const auto entries = loss.entries();
  if (entries.empty()) return;
  const std::size_t n = params_.size();
  const std::size_t blocks = std::min(kBackwardBlocks, entries.size());
  std::vector<std::vector<double>> partial(blocks, std::vector<double>(n, 0.0));

  auto run_block = [&](std::size_t b) {
    const std::size_t begin = b * entries.size() / blocks;
    const std::size_t end = (b + 1) * entries.size() / blocks;
    std::vector<double> dlogits;
    for (std::size_t i = begin; i < end; ++i) {
      entry_adjoints(entries[i], dlogits);
      accumulate(entries[i].activation, dlogits, entries[i].value_adjoint, partial[b]);
    }
  };
  parallel_for(blocks, exec == Execution::parallel, run_block);

  for (std::size_t b = 0; b < blocks; ++b)
    for (std::size_t k = 0; k < n; ++k) params_.grads[k] += partial[b][k];
}

void PolicyModel::backward_reference(const LossNode& loss) {
  if (!std::isfinite(loss.value)) throw std::runtime_error("backward: non-finite loss");
  std::vector<double> dlogits;
  for (const auto& e : loss.entries()) {
    entry_adjoints(e, dlogits);
    accumulate(e.activation, dlogits, e.value_adjoint, params_.grads);
  }
}

// ---------------------------------------------------------------------------

void PolicyModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof(kMagic));
  write_pod(out, kCheckpointVersion);
  write_pod<std::uint64_t>(out, arch_.vocab);
  write_pod<std::uint64_t>(out, arch_.embed_dim);
  write_pod<std::uint64_t>(out, arch_.window);
  write_pod<std::uint64_t>(out, arch_.hidden);
  write_pod<std::uint8_t>(out, arch_.value_head ? 1 : 0);
  write_pod<std::uint64_t>(out, params_.size());
  out.write(reinterpret_cast<const char*>(params_.values.data()),
            static_cast<std::streamsize>(params_.size() * sizeof(double)));
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

namespace {

struct CheckpointHeader {
  Architecture arch;
  std::uint64_t count = 0;
};

CheckpointHeader read_header(std::istream& in, const std::filesystem::path& path) {
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error(path.string() + " is not a turnrl checkpoint");
  const auto version = read_pod<std::uint32_t>(in);
  if (version != kCheckpointVersion)
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  CheckpointHeader h;
  h.arch.vocab = read_pod<std::uint64_t>(in);
  h.arch.embed_dim = read_pod<std::uint64_t>(in);
  h.arch.window = read_pod<std::uint64_t>(in);
  h.arch.hidden = read_pod<std::uint64_t>(in);
  h.arch.value_head = read_pod<std::uint8_t>(in) != 0;
  h.count = read_pod<std::uint64_t>(in);
  if (h.count != h.arch.parameter_count())
    throw std::runtime_error("checkpoint parameter count does not match its architecture");
  return h;
}

}  // namespace

void PolicyModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  const CheckpointHeader h = read_header(in, path);
  if (!(h.arch == arch_))
    throw std::runtime_error("checkpoint architecture mismatch in " + path.string());
  in.read(reinterpret_cast<char*>(params_.values.data()),
          static_cast<std::streamsize>(h.count * sizeof(double)));
  if (!in) throw std::runtime_error("truncated checkpoint " + path.string());
}

PolicyModel PolicyModel::from_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  const CheckpointHeader h = read_header(in, path);
  PolicyModel m(h.arch);
  in.read(reinterpret_cast<char*>(m.params_.values.data()),
          static_cast<std::streamsize>(h.count * sizeof(double)));
  if (!in) throw std::runtime_error("truncated checkpoint " + path.string());
  return m;
}

}  // namespace turnrl::model
