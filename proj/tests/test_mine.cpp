#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "calopt/mine.hpp"
#include "calopt/rng.hpp"

using namespace calopt;

namespace {

void gaussian_pair(Rng& rng, double rho, std::size_t m, std::vector<double>& x,
                   std::vector<double>& y) {
  x.resize(m);
  y.resize(m);
  double s = std::sqrt(1.0 - rho * rho);
  for (std::size_t i = 0; i < m; ++i) {
    x[i] = rng.normal();
    y[i] = rho * x[i] + s * rng.normal();
  }
}

// Forces the statistic T to a constant by zeroing the head output layer.
void make_constant_head(MineNetwork& net, double c) {
  for (auto& [name, t] : net.head.params)
    for (auto& v : t.values) v = 0.0;
  // Last bias becomes the constant.
  std::size_t last = net.head.params.size() / 2 - 1;
  net.head.at("b" + std::to_string(last)).values[0] = c;
}

}  // namespace

TEST_CASE("constant statistic gives a zero bound") {
  MineNetwork net = MineNetwork::make(1, 1, 3, 16);
  std::vector<double> x = {0.1, -0.4, 0.9, 2.0}, y = {1.0, 0.2, -0.3, 0.5};
  for (double c : {0.0, 1.7, -2.3}) {
    make_constant_head(net, c);
    double b = dv_bound(net, x, y, x, y, 4, 4);
    CHECK(b == doctest::Approx(0.0).epsilon(1e-12));
  }
}

TEST_CASE("dv bound matches a hand-computed statistic") {
  // With the head zeroed except its bias, T is constant; adding a known
  // perturbation through the bias reproduces mean(T) - log-mean-exp(T).
  MineNetwork net = MineNetwork::make(1, 1, 5, 8);
  make_constant_head(net, 0.25);
  std::vector<double> xj = {0.0, 1.0}, yj = {1.0, 0.0};
  std::vector<double> xm = {0.0, 1.0, 2.0}, ym = {1.0, 0.0, -1.0};
  double b = dv_bound(net, xj, yj, xm, ym, 2, 3);
  CHECK(b == doctest::Approx(0.25 - std::log(std::exp(0.25))).epsilon(1e-12));
}

TEST_CASE("too few samples are rejected") {
  std::vector<double> x(10, 0.0), y(10, 0.0);
  CHECK_THROWS(estimate_mi(x, y, 10, 1, 1, 1));
}

TEST_CASE("estimate is deterministic in seed") {
  Rng rng(41);
  std::vector<double> x, y;
  gaussian_pair(rng, 0.8, 128, x, y);
  MineConfig cfg;
  cfg.epochs = 20;
  cfg.hidden = 16;
  auto a = estimate_mi(x, y, 128, 1, 1, 77, cfg);
  auto b = estimate_mi(x, y, 128, 1, 1, 77, cfg);
  CHECK(a.value_nats == b.value_nats);
  CHECK(a.trace == b.trace);
  CHECK(a.trace.size() == 20);
}

TEST_CASE("strong dependence scores well above independence") {
  Rng rng(51);
  std::vector<double> xc, yc, xi, yi;
  gaussian_pair(rng, 0.95, 1500, xc, yc);
  gaussian_pair(rng, 0.0, 1500, xi, yi);
  MineConfig cfg;
  cfg.epochs = 120;
  cfg.hidden = 32;
  cfg.batch_size = 256;
  double corr = estimate_mi(xc, yc, 1500, 1, 1, 5, cfg).value_nats;
  double indep = estimate_mi(xi, yi, 1500, 1, 1, 5, cfg).value_nats;
  CHECK(corr > 0.4);        // analytic value is 1.166 nats
  CHECK(indep < 0.15);
  CHECK(corr > indep + 0.3);
}

TEST_CASE("estimate is invariant under affine input rescaling") {
  Rng rng(61);
  std::vector<double> x, y;
  gaussian_pair(rng, 0.9, 1024, x, y);
  std::vector<double> ys = y;
  for (auto& v : ys) v = 10.0 * v + 3.0;
  MineConfig cfg;
  cfg.epochs = 80;
  cfg.hidden = 32;
  cfg.batch_size = 256;
  double a = estimate_mi(x, y, 1024, 1, 1, 9, cfg).value_nats;
  double b = estimate_mi(x, ys, 1024, 1, 1, 9, cfg).value_nats;
  CHECK(a == doctest::Approx(b).epsilon(1e-9));  // standardized inputs
}

TEST_CASE("knn estimator on analytic Gaussians") {
  Rng rng(71);
  std::vector<double> x, y;
  gaussian_pair(rng, 0.9, 2000, x, y);
  double v = knn_mi(x, y, 2000, 1, 1, 3);
  double truth = -0.5 * std::log(1.0 - 0.81);
  CHECK(std::fabs(v - truth) < 0.12 * truth + 0.05);

  std::vector<double> xi, yi;
  gaussian_pair(rng, 0.0, 2000, xi, yi);
  CHECK(std::fabs(knn_mi(xi, yi, 2000, 1, 1, 3)) < 0.06);
}

TEST_CASE("knn estimator is invariant under per-axis scaling") {
  Rng rng(81);
  std::vector<double> x, y;
  gaussian_pair(rng, 0.7, 1500, x, y);
  std::vector<double> ys = y;
  for (auto& v : ys) v *= 10.0;
  double a = knn_mi(x, y, 1500, 1, 1, 3);
  double b = knn_mi(x, ys, 1500, 1, 1, 3);
  CHECK(std::fabs(a - b) < 0.05);
}

TEST_CASE("knn estimator rejects heavily duplicated samples") {
  std::vector<double> x(200, 1.0), y(200, 2.0);
  CHECK_THROWS(knn_mi(x, y, 200, 1, 1, 3));
}

TEST_CASE("fresh networks from different seeds differ") {
  MineNetwork a = MineNetwork::make(2, 3, 1, 16);
  MineNetwork b = MineNetwork::make(2, 3, 2, 16);
  MineNetwork c = MineNetwork::make(2, 3, 1, 16);
  CHECK(a.x_encoder == c.x_encoder);
  CHECK_FALSE(a.x_encoder == b.x_encoder);
}
