#include "calopt/nn.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "calopt/rng.hpp"

namespace calopt {

void MlpSpec::validate() const {
  if (widths.size() < 2)
    throw std::invalid_argument("MlpSpec: need at least input and output width");
  for (auto w : widths)
    if (w < 1) throw std::invalid_argument("MlpSpec: widths must be >= 1");
}

std::size_t MlpSpec::param_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l)
    n += widths[l] * widths[l + 1] + widths[l + 1];
  return n;
}

ParamSet mlp_init(const MlpSpec& spec) {
  spec.validate();
  Rng rng(derive_seed(spec.seed, {0x6d6c70u}));
  ParamSet ps;
  for (std::size_t l = 0; l + 1 < spec.widths.size(); ++l) {
    const std::size_t fan_in = spec.widths[l], fan_out = spec.widths[l + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor w = Tensor::zeros({fan_in, fan_out});
    for (double& v : w.values) v = rng.uniform(-limit, limit);
    ps.add("w" + std::to_string(l), std::move(w));
    ps.add("b" + std::to_string(l), Tensor::zeros({1, fan_out}));
  }
  return ps;
}

NodeId mlp_apply(Tape& tape, const std::map<std::string, NodeId>& bound,
                 NodeId x, std::size_t n_layers) {
  NodeId h = x;
  for (std::size_t l = 0; l < n_layers; ++l) {
    h = tape.matmul(h, bound.at("w" + std::to_string(l)));
    h = tape.add(h, bound.at("b" + std::to_string(l)));
    if (l + 1 < n_layers) h = tape.elu(h);
  }
  return h;
}

LrSchedule LrSchedule::staged(std::vector<std::pair<double, std::size_t>> s) {
  LrSchedule sched;
  sched.kind = Kind::Staged;
  sched.stages = std::move(s);
  for (const auto& [rate, n] : sched.stages) {
    if (rate <= 0.0) throw std::invalid_argument("LrSchedule: rate must be > 0");
    sched.epochs += n;
  }
  return sched;
}

LrSchedule LrSchedule::exp_decay(double init, std::size_t epochs, double decay,
                                 double floor_fraction) {
  if (init <= 0.0) throw std::invalid_argument("LrSchedule: rate must be > 0");
  LrSchedule sched;
  sched.kind = Kind::ExpDecay;
  sched.init = init;
  sched.decay = decay;
  sched.floor_fraction = floor_fraction;
  sched.epochs = epochs;
  return sched;
}

double LrSchedule::rate_at(std::size_t epoch) const {
  if (kind == Kind::Staged) {
    std::size_t acc = 0;
    for (const auto& [rate, n] : stages) {
      acc += n;
      if (epoch < acc) return rate;
    }
    return stages.back().first;
  }
  const double r = init * std::pow(decay, static_cast<double>(epoch));
  return std::max(r, init * floor_fraction);
}

std::size_t LrSchedule::total_epochs() const { return epochs; }

AdamState::AdamState(const ParamSet& ps) {
  for (const auto& [name, t] : ps.params) {
    m[name] = Tensor::zeros(t.shape);
    v[name] = Tensor::zeros(t.shape);
  }
}

void AdamState::step(ParamSet& ps, double rate) {
  ++step_count;
  const double t = static_cast<double>(step_count);
  const double bc1 = 1.0 - std::pow(beta1, t);
  const double bc2 = 1.0 - std::pow(beta2, t);
  lr = rate;
  for (auto& [name, p] : ps.params) {
    const Tensor& g = ps.grads.at(name);
    Tensor &mm = m.at(name), &vv = v.at(name);
    for (std::size_t i = 0; i < p.values.size(); ++i) {
      const double gi = g.values[i];
      mm.values[i] = beta1 * mm.values[i] + (1.0 - beta1) * gi;
      vv.values[i] = beta2 * vv.values[i] + (1.0 - beta2) * gi * gi;
      const double mhat = mm.values[i] / bc1;
      const double vhat = vv.values[i] / bc2;
      p.values[i] -= rate * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

TrainResult train(ParamSet& params, const BatchLossBuilder& loss,
                  std::size_t n_rows, const LrSchedule& schedule,
                  std::size_t batch_size, std::uint64_t seed) {
  if (n_rows == 0) throw std::invalid_argument("train: empty dataset");
  const std::size_t epochs = schedule.total_epochs();
  TrainResult result;
  result.epoch_loss.reserve(epochs);
  AdamState adam(params);

  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(seed, {0x73687566ULL, epoch}));
    auto perm = shuffle_rng.permutation(n_rows);
    const double rate = schedule.rate_at(epoch);
    double epoch_sum = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t start = 0; start < n_rows; start += batch_size) {
      const std::size_t end = std::min(start + batch_size, n_rows);
      std::span<const std::size_t> rows(perm.data() + start, end - start);
      Tape tape;
      auto bound = tape.bind(params);
      NodeId root = loss(tape, bound, rows);
      const double batch_loss = tape.value(root).values[0];
      if (!std::isfinite(batch_loss))
        throw NumericError("train: non-finite loss at epoch " +
                           std::to_string(epoch));
      tape.backward(root);
      params.zero_grads();
      tape.accumulate_grads(params, bound);
      adam.step(params, rate);
      epoch_sum += batch_loss;
      ++n_batches;
    }
    result.epoch_loss.push_back(epoch_sum / static_cast<double>(n_batches));
  }
  return result;
}

namespace {

constexpr char kMagic[8] = {'C', 'A', 'L', 'O', 'P', 'T', '0', '1'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ofstream& f, std::uint32_t v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof v);
}
void write_u64(std::ofstream& f, std::uint64_t v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof v);
}
std::uint32_t read_u32(std::ifstream& f) {
  std::uint32_t v = 0;
  f.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!f) throw std::runtime_error("checkpoint: truncated file");
  return v;
}
std::uint64_t read_u64(std::ifstream& f) {
  std::uint64_t v = 0;
  f.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!f) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

}  // namespace

void checkpoint_save(const ParamSet& ps, const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
  f.write(kMagic, sizeof kMagic);
  write_u32(f, kVersion);
  write_u64(f, ps.params.size());
  for (const auto& [name, t] : ps.params) {
    write_u32(f, static_cast<std::uint32_t>(name.size()));
    f.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u64(f, t.shape.size());
    for (auto e : t.shape) write_u64(f, e);
    f.write(reinterpret_cast<const char*>(t.values.data()),
            static_cast<std::streamsize>(t.values.size() * sizeof(double)));
  }
  if (!f) throw std::runtime_error("checkpoint: write failed for " + path);
}

ParamSet checkpoint_load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[8];
  f.read(magic, sizeof magic);
  if (!f || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw std::runtime_error("checkpoint: bad magic / unsupported version in " +
                             path);
  const std::uint32_t version = read_u32(f);
  if (version != kVersion)
    throw std::runtime_error("checkpoint: version mismatch in " + path);
  const std::uint64_t n = read_u64(f);
  ParamSet ps;
  for (std::uint64_t i = 0; i < n; ++i) {
    const std::uint32_t name_len = read_u32(f);
    std::string name(name_len, '\0');
    f.read(name.data(), name_len);
    const std::uint64_t rank = read_u64(f);
    std::vector<std::size_t> shape(rank);
    for (auto& e : shape) e = static_cast<std::size_t>(read_u64(f));
    Tensor t = Tensor::zeros(shape);
    f.read(reinterpret_cast<char*>(t.values.data()),
           static_cast<std::streamsize>(t.values.size() * sizeof(double)));
    if (!f) throw std::runtime_error("checkpoint: truncated file " + path);
    ps.add(name, std::move(t));
  }
  return ps;
}

}  // namespace calopt
