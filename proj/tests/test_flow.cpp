#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include "doctest.h"
#include "pieclam/errors.hpp"
#include "pieclam/flow.hpp"
#include "pieclam/io.hpp"

using namespace pieclam;
namespace fs = std::filesystem;

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

Eigen::MatrixXd gaussian_matrix(int rows, int cols, Rng& rng, double sd = 1.0, double mean = 0.0) {
  std::normal_distribution<double> normal(mean, sd);
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

FlowModel random_flow(int dim, int blocks, double output_scale, std::uint64_t seed, int width = 16) {
  FlowArchitecture arch;
  arch.dim = dim;
  arch.num_blocks = blocks;
  arch.hidden_width = width;
  arch.output_scale = output_scale;
  Rng rng(seed);
  return FlowModel::random(arch, rng);
}

double max_abs(const Eigen::MatrixXd& m) { return m.cwiseAbs().maxCoeff(); }

double standard_normal_log_density(const Eigen::RowVectorXd& x) {
  return -0.5 * x.size() * kLog2Pi - 0.5 * x.squaredNorm();
}

// Log |det J| of the forward map at x by central differences.
double fd_log_det(const FlowModel& model, const Eigen::RowVectorXd& x, double h) {
  const int d = model.dim();
  Eigen::MatrixXd jac(d, d);
  for (int j = 0; j < d; ++j) {
    Eigen::MatrixXd plus = x;
    Eigen::MatrixXd minus = x;
    plus(0, j) += h;
    minus(0, j) -= h;
    jac.col(j) = ((flow_forward(model, plus).values - flow_forward(model, minus).values) / (2 * h)).transpose();
  }
  return std::log(std::abs(jac.determinant()));
}

}  // namespace

TEST_CASE("identity flow permutes without scaling") {
  const FlowModel id = FlowModel::identity(2);
  Eigen::MatrixXd f(2, 2);
  f << 0.3, -1.2, 4.0, 5.0;
  const FlowOutput out = flow_forward(id, f);
  CHECK(out.values == f);
  CHECK(out.log_det.isZero());

  CouplingBlock blk;
  blk.permutation = {2, 0, 1};
  blk.split = 1;
  blk.scale_net = Mlp(1, 4, 1, 2);
  blk.shift_net = Mlp(1, 4, 1, 2);
  const FlowModel permuted(3, {blk});
  Eigen::MatrixXd x(1, 3);
  x << 1, 2, 3;
  const FlowOutput px = flow_forward(permuted, x);
  Eigen::MatrixXd expected(1, 3);
  expected << 3, 1, 2;
  CHECK(px.values == expected);
  CHECK(px.log_det(0) == 0.0);
  CHECK(flow_inverse(permuted, px.values).values == x);
}

TEST_CASE("constant scale of two on one coordinate") {
  CouplingBlock blk;
  blk.permutation = {0, 1};
  blk.split = 1;
  blk.scale_net = Mlp(1, 1, 0, 1);
  blk.shift_net = Mlp(1, 1, 0, 1);
  blk.scale_net.layers()[0].bias(0) = std::log(2.0);
  const FlowModel model(2, {blk});
  Eigen::MatrixXd f(1, 2);
  f << 0.5, 1.5;
  const FlowOutput out = flow_forward(model, f);
  CHECK(out.log_det(0) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  CHECK(out.values(0, 0) == 0.5);
  CHECK(out.values(0, 1) == doctest::Approx(3.0).epsilon(1e-14));
  CHECK(log_density(model, Eigen::RowVectorXd(f.row(0))) ==
        doctest::Approx(standard_normal_log_density(out.values.row(0)) + std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("forward and inverse are mutual inverses") {
  Rng rng(3);
  const FlowModel model = random_flow(4, 4, 0.5, 7);
  const Eigen::MatrixXd f = gaussian_matrix(50, 4, rng, 2.0);
  const FlowOutput fwd = flow_forward(model, f);
  const FlowOutput back = flow_inverse(model, fwd.values);
  CHECK(max_abs(back.values - f) <= 1e-6);
  CHECK(max_abs(back.log_det + fwd.log_det) <= 1e-8);

  const Eigen::MatrixXd z = gaussian_matrix(50, 4, rng);
  CHECK(max_abs(flow_forward(model, flow_inverse(model, z).values).values - z) <= 1e-6);
  CHECK(flow_inverse(FlowModel::identity(4), Eigen::MatrixXd::Zero(3, 4)).values.isZero());
}

TEST_CASE("log-determinant matches a finite-difference Jacobian") {
  Rng rng(5);
  for (int dim : {2, 3, 4}) {
    const FlowModel model = random_flow(dim, 3, 0.5, 11 + dim);
    for (int trial = 0; trial < 5; ++trial) {
      const Eigen::RowVectorXd x = gaussian_matrix(1, dim, rng);
      const double analytic = flow_forward(model, x).log_det(0);
      CHECK(std::abs(analytic - fd_log_det(model, x, 1e-5)) <= 1e-4);
    }
  }
}

TEST_CASE("identity flow gives the standard bivariate normal") {
  const FlowModel id = FlowModel::identity(2);
  CHECK(log_density(id, Eigen::RowVectorXd(Eigen::RowVectorXd::Zero(2))) == doctest::Approx(-1.837877).epsilon(1e-6));
  Eigen::RowVectorXd e1(2);
  e1 << 1, 0;
  CHECK(log_density(id, e1) == doctest::Approx(-kLog2Pi - 0.5).epsilon(1e-12));
}

TEST_CASE("density integrates to one on a window") {
  const FlowModel model = random_flow(2, 6, 0.3, 19);
  const double step = 0.05;
  const int cells = static_cast<int>(std::round(12.0 / step));
  Eigen::MatrixXd grid(cells * cells, 2);
  for (int i = 0; i < cells; ++i)
    for (int j = 0; j < cells; ++j) {
      grid(i * cells + j, 0) = -6.0 + (i + 0.5) * step;
      grid(i * cells + j, 1) = -6.0 + (j + 0.5) * step;
    }
  const double mass = log_density(model, grid).array().exp().sum() * step * step;
  CHECK(mass == doctest::Approx(1.0).epsilon(0.02));

  // Box measure: quadrature of the density against the sampled frequency.
  Rng rng(23);
  const Eigen::MatrixXd draws = sample(model, 200000, rng);
  const double lo = -0.5;
  const double hi = 1.0;
  double quad = 0.0;
  for (Eigen::Index k = 0; k < grid.rows(); ++k) {
    if (grid(k, 0) > lo && grid(k, 0) < hi && grid(k, 1) > lo && grid(k, 1) < hi) {
      quad += std::exp(log_density(model, Eigen::RowVectorXd(grid.row(k)))) * step * step;
    }
  }
  double hits = 0.0;
  for (Eigen::Index k = 0; k < draws.rows(); ++k) {
    if (draws(k, 0) > lo && draws(k, 0) < hi && draws(k, 1) > lo && draws(k, 1) < hi) hits += 1.0;
  }
  CHECK(quad == doctest::Approx(hits / static_cast<double>(draws.rows())).epsilon(0.02));
}

TEST_CASE("sampling") {
  Rng rng(29);
  const Eigen::MatrixXd s = sample(FlowModel::identity(2), 100000, rng);
  CHECK(std::abs(s.col(0).mean()) <= 0.02);
  CHECK(std::abs(s.col(1).mean()) <= 0.02);

  const FlowModel model = random_flow(4, 2, 0.5, 31);
  const Eigen::MatrixXd cone = sample(model, 2000, rng, ModelKind::lorentz(2));
  CHECK(AffiliationMatrix(ModelKind::lorentz(2), RowMatrix(cone)).is_feasible(1e-12));
  const Eigen::MatrixXd orthant = sample(model, 500, rng, ModelKind::euclidean(3));
  CHECK(orthant.leftCols(3).minCoeff() >= 0.0);

  Rng a(99);
  Rng b(99);
  CHECK(sample(model, 100, a) == sample(model, 100, b));
}

TEST_CASE("parameter and input gradients match finite differences") {
  Rng rng(37);
  FlowModel model = random_flow(2, 2, 0.5, 41, 8);
  const Eigen::MatrixXd f = gaussian_matrix(8, 2, rng);
  const Eigen::VectorXd w = Eigen::VectorXd::Constant(8, 1.0 / 8.0);
  const DensityGradient g = log_density_gradient(model, f, w, true, true);
  CHECK(max_abs(g.log_density - log_density(model, f)) <= 1e-12);

  const Eigen::VectorXd theta = model.parameters();
  REQUIRE(theta.size() == g.parameter_grad.size());
  Eigen::VectorXd fd(theta.size());
  const double h = 1e-4;
  for (Eigen::Index k = 0; k < theta.size(); ++k) {
    Eigen::VectorXd p = theta;
    p(k) += h;
    model.set_parameters(p);
    const double up = log_density(model, f).mean();
    p(k) -= 2 * h;
    model.set_parameters(p);
    const double down = log_density(model, f).mean();
    fd(k) = (up - down) / (2 * h);
  }
  model.set_parameters(theta);
  CHECK((g.parameter_grad - fd).norm() <= 1e-3 * fd.norm());

  Eigen::MatrixXd fd_in(8, 2);
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 2; ++j) {
      Eigen::MatrixXd p = f;
      p(i, j) += h;
      const double up = w(i) * log_density(model, Eigen::RowVectorXd(p.row(i)));
      p(i, j) -= 2 * h;
      const double down = w(i) * log_density(model, Eigen::RowVectorXd(p.row(i)));
      fd_in(i, j) = (up - down) / (2 * h);
    }
  CHECK((g.input_grad - fd_in).norm() <= 1e-3 * fd_in.norm());
}

TEST_CASE("training fits a shifted Gaussian") {
  Rng rng(43);
  const Eigen::MatrixXd train = gaussian_matrix(2000, 2, rng, 0.5, 3.0);
  const Eigen::MatrixXd held_out = gaussian_matrix(1000, 2, rng, 0.5, 3.0);
  PriorTrainConfig cfg;
  cfg.steps = 500;
  cfg.learning_rate = 3e-3;
  cfg.noise_amplitude = 0.0;
  const PriorTrainResult r = train_prior(random_flow(2, 4, 0.01, 47, 32), train, cfg, rng);
  REQUIRE(r.trace.size() == 500);
  const double learned = log_density(r.model, held_out).mean();
  double baseline = 0.0;
  for (Eigen::Index i = 0; i < held_out.rows(); ++i) baseline += standard_normal_log_density(held_out.row(i));
  baseline /= static_cast<double>(held_out.rows());
  CHECK(learned >= baseline + 1.0);
  // Still a bijection after training.
  const FlowOutput fwd = flow_forward(r.model, held_out);
  CHECK(max_abs(flow_inverse(r.model, fwd.values).values - held_out) <= 1e-6);
}

TEST_CASE("zero noise trains on the exact objective") {
  Rng data_rng(53);
  const Eigen::MatrixXd x = gaussian_matrix(30, 2, data_rng, 1.0, 0.5);
  const FlowModel start = random_flow(2, 2, 0.2, 59, 8);
  PriorTrainConfig cfg;
  cfg.steps = 6;
  cfg.learning_rate = 0.05;
  cfg.noise_amplitude = 0.0;
  cfg.optimizer = PriorOptimizer::GradientAscent;
  Rng rng(1);
  const PriorTrainResult full = train_prior(start, x, cfg, rng);
  for (int k = 0; k < cfg.steps; ++k) {
    PriorTrainConfig partial = cfg;
    partial.steps = k;
    Rng r2(1);
    const FlowModel at_k = k == 0 ? start : train_prior(start, x, partial, r2).model;
    CHECK(full.trace[k] == doctest::Approx(log_density(at_k, x).mean()).epsilon(1e-12));
  }
}

TEST_CASE("training rejects bad input") {
  Rng rng(0);
  const FlowModel m = FlowModel::identity(2);
  PriorTrainConfig cfg;
  CHECK_THROWS_AS(train_prior(m, Eigen::MatrixXd::Zero(3, 3), cfg, rng), InputError);
  CHECK_THROWS_AS(train_prior(m, Eigen::MatrixXd::Zero(0, 2), cfg, rng), InputError);
  cfg.learning_rate = 0.0;
  CHECK_THROWS_AS(train_prior(m, Eigen::MatrixXd::Zero(3, 2), cfg, rng), InputError);
}

TEST_CASE("model validation") {
  CouplingBlock blk;
  blk.permutation = {0, 0};
  blk.split = 1;
  blk.scale_net = Mlp(1, 1, 0, 1);
  blk.shift_net = Mlp(1, 1, 0, 1);
  CHECK_THROWS_AS(FlowModel(2, {blk}), InputError);
  blk.permutation = {1, 0};
  blk.shift_net = Mlp(1, 1, 0, 2);
  CHECK_THROWS_AS(FlowModel(2, {blk}), InputError);
}

TEST_CASE("persistence roundtrip") {
  const fs::path dir = fs::temp_directory_path() / ("pieclam_flow_" + std::to_string(std::random_device{}()));
  fs::create_directories(dir);
  const FlowModel model = random_flow(3, 5, 0.4, 61);
  save_flow(model, dir / "prior.json", dir / "prior.bin");
  CHECK(fs::file_size(dir / "prior.bin") == model.parameter_count() * sizeof(double));
  const FlowModel back = load_flow(dir / "prior.json");
  CHECK(back.parameters() == model.parameters());
  Rng rng(2);
  const Eigen::MatrixXd x = gaussian_matrix(20, 3, rng);
  CHECK(log_density(back, x) == log_density(model, x));

  // A truncated tensor file is rejected.
  const std::string bytes = read_text_file(dir / "prior.bin");
  write_text_file(dir / "prior.bin", bytes.substr(0, bytes.size() - 8));
  CHECK_THROWS_AS(load_flow(dir / "prior.json"), InputError);
  fs::remove_all(dir);
}
