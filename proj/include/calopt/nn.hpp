// MLP construction, ADAM, learning-rate schedules and checkpoint files.
#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "calopt/autodiff.hpp"

namespace calopt {

struct MlpSpec {
  std::vector<std::size_t> widths;  // input, hidden..., output
  std::uint64_t seed = 0;

  void validate() const;
  std::size_t param_count() const;
};

// Glorot-uniform weights, zero biases. Parameter names: w0,b0,w1,b1,...
ParamSet mlp_init(const MlpSpec& spec);

// Applies the MLP on tape: ELU on hidden layers, identity output.
NodeId mlp_apply(Tape& tape, const std::map<std::string, NodeId>& bound,
                 NodeId x, std::size_t n_layers);

struct LrSchedule {
  enum class Kind { Staged, ExpDecay };
  Kind kind = Kind::ExpDecay;
  // Staged: (rate, epochs) stages.
  std::vector<std::pair<double, std::size_t>> stages;
  // ExpDecay: rate(init) * decay^epoch, floored.
  double init = 1e-2;
  double decay = 0.999;
  double floor_fraction = 1e-4;
  std::size_t epochs = 0;

  static LrSchedule staged(std::vector<std::pair<double, std::size_t>> s);
  static LrSchedule exp_decay(double init, std::size_t epochs,
                              double decay = 0.999,
                              double floor_fraction = 1e-4);
  double rate_at(std::size_t epoch) const;
  std::size_t total_epochs() const;
};

struct AdamState {
  std::map<std::string, Tensor> m, v;
  std::size_t step_count = 0;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  double lr = 1e-3;

  explicit AdamState(const ParamSet& ps);
  void step(ParamSet& ps, double rate);
};

struct TrainResult {
  std::vector<double> epoch_loss;  // mean loss per epoch
  double final_loss() const {
    return epoch_loss.empty() ? 0.0 : epoch_loss.back();
  }
};

// Builds the scalar loss for one mini-batch. `bound` maps parameter name to
// tape node; `rows` are the dataset rows of this batch.
using BatchLossBuilder = std::function<NodeId(
    Tape&, const std::map<std::string, NodeId>&, std::span<const std::size_t>)>;

// Generic mini-batch training driver. Shuffling is deterministic in seed.
TrainResult train(ParamSet& params, const BatchLossBuilder& loss,
                  std::size_t n_rows, const LrSchedule& schedule,
                  std::size_t batch_size, std::uint64_t seed);

// Checkpoint file: magic "CALOPT01", u32 version, named sections with
// name length + UTF-8 name + rank + extents (u64) + little-endian f64 data.
void checkpoint_save(const ParamSet& ps, const std::string& path);
ParamSet checkpoint_load(const std::string& path);

}  // namespace calopt
