#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "calopt/nn.hpp"
#include "calopt/rng.hpp"

using namespace calopt;

namespace {
std::size_t total_params(const ParamSet& ps) {
  std::size_t n = 0;
  for (const auto& [k, t] : ps.params) n += t.values.size();
  return n;
}
}  // namespace

TEST_CASE("parameter counts follow the layer widths") {
  MlpSpec a;
  a.widths = {1, 8, 1};
  a.seed = 7;
  CHECK(total_params(mlp_init(a)) == 25);
  CHECK(a.param_count() == 25);

  MlpSpec b;
  b.widths = {6, 64, 64, 64, 1};
  CHECK(b.param_count() == 8833);
  CHECK(total_params(mlp_init(b)) == 8833);
}

TEST_CASE("initialization is deterministic in seed, biases zero, weights bounded") {
  MlpSpec spec;
  spec.widths = {3, 16, 2};
  spec.seed = 42;
  ParamSet a = mlp_init(spec);
  ParamSet b = mlp_init(spec);
  CHECK(a == b);
  for (const auto& [name, t] : a.params) {
    if (name[0] == 'b') {
      for (double v : t.values) CHECK(v == 0.0);
    } else {
      std::size_t fan_in = t.shape[0], fan_out = t.shape[1];
      double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
      for (double v : t.values) {
        CHECK(v <= bound);
        CHECK(v >= -bound);
      }
    }
  }
  spec.seed = 43;
  CHECK_FALSE(mlp_init(spec) == a);
}

TEST_CASE("staged schedule selects the right rate per epoch") {
  auto s = LrSchedule::staged({{4e-4, 200}, {1e-5, 200}});
  CHECK(s.total_epochs() == 400);
  CHECK(s.rate_at(0) == doctest::Approx(4e-4));
  CHECK(s.rate_at(199) == doctest::Approx(4e-4));
  CHECK(s.rate_at(250) == doctest::Approx(1e-5));
}

TEST_CASE("exponential decay schedule floors out") {
  auto s = LrSchedule::exp_decay(1e-2, 20000);
  CHECK(s.rate_at(0) == doctest::Approx(1e-2));
  CHECK(s.rate_at(1) == doctest::Approx(1e-2 * 0.999));
  CHECK(s.rate_at(19999) == doctest::Approx(1e-6));  // floor = 1e-4 * init
}

TEST_CASE("adam step with zero gradients leaves parameters unchanged") {
  MlpSpec spec;
  spec.widths = {2, 4, 1};
  spec.seed = 1;
  ParamSet ps = mlp_init(spec);
  ParamSet before = ps;
  AdamState adam(ps);
  ps.zero_grads();
  adam.step(ps, 1e-2);
  CHECK(ps == before);
}

TEST_CASE("training fits y = 2x") {
  MlpSpec spec;
  spec.widths = {1, 16, 1};
  spec.seed = 3;
  ParamSet ps = mlp_init(spec);
  Rng rng(11);
  std::size_t n = 100;
  Tensor x({n, 1}), y({n, 1});
  for (std::size_t i = 0; i < n; ++i) {
    x.values[i] = rng.uniform(-1.0, 1.0);
    y.values[i] = 2.0 * x.values[i];
  }
  auto loss = [&](Tape& t, const std::map<std::string, NodeId>& bound,
                  std::span<const std::size_t> rows) {
    Tensor xb({rows.size(), 1}), yb({rows.size(), 1});
    for (std::size_t i = 0; i < rows.size(); ++i) {
      xb.values[i] = x.values[rows[i]];
      yb.values[i] = y.values[rows[i]];
    }
    NodeId pred = mlp_apply(t, bound, t.constant(xb), 2);
    NodeId neg = t.affine(t.constant(yb), -1.0, 0.0);
    return t.mean_all(t.square(t.add(pred, neg)));
  };
  TrainResult res =
      train(ps, loss, n, LrSchedule::staged({{1e-2, 200}}), 32, 7);
  CHECK(res.epoch_loss.size() == 200);
  CHECK(res.final_loss() < 1e-3);

  SUBCASE("smoothed loss is non-increasing") {
    auto window = [&](std::size_t start) {
      double s = 0.0;
      for (std::size_t i = start; i < start + 10; ++i) s += res.epoch_loss[i];
      return s / 10.0;
    };
    CHECK(window(190) <= window(0));
    CHECK(window(100) <= window(0) + 1e-9);
  }
}

TEST_CASE("zero epochs is a no-op") {
  MlpSpec spec;
  spec.widths = {1, 4, 1};
  spec.seed = 9;
  ParamSet ps = mlp_init(spec);
  ParamSet before = ps;
  auto loss = [](Tape& t, const std::map<std::string, NodeId>& bound,
                 std::span<const std::size_t>) {
    return t.mean_all(t.square(mlp_apply(
        t, bound, t.constant(Tensor::full({2, 1}, 1.0)), 2)));
  };
  train(ps, loss, 2, LrSchedule::staged({}), 32, 0);
  CHECK(ps == before);
}

TEST_CASE("checkpoint round trip is bitwise identical") {
  MlpSpec spec;
  spec.widths = {4, 32, 32, 2};
  spec.seed = 77;
  ParamSet ps = mlp_init(spec);
  std::string path =
      (std::filesystem::temp_directory_path() / "calopt_ckpt_test.bin").string();
  checkpoint_save(ps, path);
  ParamSet loaded = checkpoint_load(path);
  CHECK(loaded == ps);
  for (const auto& [name, t] : ps.params)
    CHECK(loaded.params.at(name).values == t.values);
  std::remove(path.c_str());
}

TEST_CASE("corrupted magic bytes are rejected") {
  MlpSpec spec;
  spec.widths = {1, 2, 1};
  spec.seed = 1;
  std::string path =
      (std::filesystem::temp_directory_path() / "calopt_ckpt_bad.bin").string();
  checkpoint_save(mlp_init(spec), path);
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.write("XXXXXXXX", 8);
  }
  CHECK_THROWS(checkpoint_load(path));
  std::remove(path.c_str());
}

TEST_CASE("truncated checkpoint is rejected") {
  MlpSpec spec;
  spec.widths = {2, 8, 1};
  spec.seed = 2;
  std::string path =
      (std::filesystem::temp_directory_path() / "calopt_ckpt_trunc.bin").string();
  checkpoint_save(mlp_init(spec), path);
  auto size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, size / 2);
  CHECK_THROWS(checkpoint_load(path));
  std::remove(path.c_str());
}
