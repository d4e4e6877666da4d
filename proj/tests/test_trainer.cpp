#include <algorithm>
#include <cmath>
#include <numbers>

#include "doctest.h"
#include "pieclam/errors.hpp"
#include "pieclam/metrics.hpp"
#include "pieclam/trainer.hpp"

using namespace pieclam;

namespace {

using Pairs = std::vector<std::pair<int, int>>;

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

// Log density of the standard normal and its gradient -f, independent of the
// flow code.
class GaussianRegularizer final : public RowRegularizer {
 public:
  double value(const RowMatrix& f) const override {
    return -0.5 * static_cast<double>(f.size()) * kLog2Pi - 0.5 * f.squaredNorm();
  }
  double add_gradient(const RowMatrix& f, RowMatrix& grad) const override {
    grad -= f;
    return value(f);
  }
};

// Swap coupling block on dim 2: A is the second coordinate, B the first.
// Forward: y = x_B * exp(log_scale) + shift(x_A).
CouplingBlock swap_block(double log_scale, Mlp shift) {
  CouplingBlock blk;
  blk.permutation = {1, 0};
  blk.split = 1;
  blk.scale_net = Mlp(1, 1, 0, 1);
  blk.scale_net.layers()[0].bias(0) = log_scale;
  blk.shift_net = std::move(shift);
  return blk;
}

// Near point-mass mixture of (1, 1) and (1, -1) with spread sigma: the
// latent sign of z0 picks the component.
FlowModel two_point_prior(double sigma) {
  const double scale = std::log(1.0 / sigma);
  Mlp constant(1, 1, 0, 1);
  constant.layers()[0].bias(0) = -1.0 / sigma;
  Mlp sign(1, 1, 1, 1);
  sign.layers()[0].weight(0, 0) = 50.0;
  sign.layers()[1].weight(0, 0) = -1.0 / sigma;
  return FlowModel(2, {swap_block(scale, constant), swap_block(scale, sign)});
}

// Both coordinates scaled down by sigma around the origin.
FlowModel shrunk_prior(double sigma) {
  const double scale = std::log(1.0 / sigma);
  return FlowModel(2, {swap_block(scale, Mlp(1, 1, 0, 1)), swap_block(scale, Mlp(1, 1, 0, 1))});
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

}  // namespace

TEST_CASE("hand-built mixture prior has the intended shape") {
  Rng rng(1);
  const Eigen::MatrixXd s = sample(two_point_prior(0.01), 4000, rng);
  CHECK(std::abs(s.col(0).mean() - 1.0) <= 0.01);
  const double near_modes = ((s.col(1).cwiseAbs().array() - 1.0).abs() <= 0.1).cast<double>().mean();
  CHECK(near_modes >= 0.95);
  const double positive = (s.col(1).array() > 0).cast<double>().mean();
  CHECK(std::abs(positive - 0.5) <= 0.05);
}

TEST_CASE("schedule presets and validation") {
  const Schedule s = schedule_preset("standard");
  REQUIRE(s.phases.size() == 2);
  CHECK(s.rounds == 2);
  CHECK(s.phases[0].target == PhaseTarget::Affiliations);
  CHECK(s.phases[0].steps == 500);
  CHECK(s.phases[0].learning_rate == 2e-6);
  CHECK(s.phases[1].target == PhaseTarget::Prior);
  CHECK(s.phases[1].steps == 1300);
  CHECK(s.phases[1].learning_rate == 1e-6);
  CHECK(s.phases[1].noise_amplitude == 0.01);
  CHECK(s.expanded().size() == 4);

  const Schedule h = schedule_preset("halving");
  CHECK(h.rounds == 3);
  CHECK(h.halve_rates);
  CHECK(h.halve_noise);
  CHECK(h.phases[0].learning_rate == 3e-6);
  CHECK(h.phases[1].learning_rate == 2e-6);
  CHECK(h.phases[1].noise_amplitude == 0.05);

  CHECK_THROWS_AS(schedule_preset("nope"), InputError);
  Schedule bad = s;
  bad.phases[0].steps = 0;
  CHECK_THROWS_AS(bad.validate(), InputError);
  bad = s;
  bad.phases[1].learning_rate = 0.0;
  CHECK_THROWS_AS(bad.validate(), InputError);
}

TEST_CASE("halving rates and noise between rounds") {
  Schedule s = schedule_preset("halving");
  const std::vector<Phase> e = s.expanded();
  REQUIRE(e.size() == 6);
  for (int r = 1; r < 3; ++r)
    for (int p = 0; p < 2; ++p) {
      CHECK(e[2 * r + p].learning_rate == e[2 * (r - 1) + p].learning_rate / 2);
      CHECK(e[2 * r + p].noise_amplitude == e[2 * (r - 1) + p].noise_amplitude / 2);
    }

  // The traces record the same halving.
  for (Phase& p : s.phases) p.steps = 2;
  Rng rng(2);
  const Graph g = sample_sbm(sbm_preset("two-block"), 20, rng).graph;
  AlternatingConfig cfg;
  cfg.architecture.num_blocks = 2;
  cfg.architecture.hidden_width = 8;
  const AlternatingResult r = alternating_fit(g, ModelKind::lorentz(1), s, cfg);
  REQUIRE(r.phases.size() == 6);
  for (std::size_t i = 2; i < 6; ++i) {
    CHECK(r.phases[i].round == static_cast<int>(i / 2));
    CHECK(r.phases[i].learning_rate == r.phases[i - 2].learning_rate / 2);
    CHECK(r.phases[i].noise_amplitude == r.phases[i - 2].noise_amplitude / 2);
  }
}

TEST_CASE("joint likelihood hand example") {
  const Graph g = build_graph(2, Pairs{{0, 1}});
  RowMatrix v(2, 2);
  v << 1, 0, 1, 0;
  const AffiliationMatrix f(ModelKind::lorentz(1), v);
  const double expected = std::log(1.0 - std::exp(-1.0)) + 2 * (-kLog2Pi - 0.5);
  CHECK(joint_log_likelihood(f, FlowModel::identity(2), g) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("joint likelihood is prior plus structure") {
  Rng rng(3);
  const Graph g = sample_sbm(sbm_preset("two-block"), 30, rng).graph;
  FlowArchitecture arch;
  arch.dim = 4;
  arch.num_blocks = 3;
  arch.hidden_width = 8;
  arch.output_scale = 0.3;
  const FlowModel prior = FlowModel::random(arch, rng);
  const AffiliationMatrix f = random_affiliation(ModelKind::lorentz(2), 30, rng);
  const double structural = log_likelihood_sparse(f, g);
  const double prior_term = log_density(prior, Eigen::MatrixXd(f.values())).sum();
  CHECK(std::abs(joint_log_likelihood(f, prior, g) - (structural + prior_term)) <= 1e-10);
  // Removing the prior term leaves the plain structural likelihood.
  CHECK(std::abs(joint_log_likelihood(f, prior, g) - prior_term - log_likelihood_dense(f, g)) <= 1e-8);
  CHECK_THROWS_AS(joint_log_likelihood(f, FlowModel::identity(3), g), InputError);
}

TEST_CASE("prior inputs append node features") {
  Rng rng(4);
  Eigen::MatrixXd x(5, 3);
  x.setRandom();
  const Graph g = build_graph(5, Pairs{{0, 1}}).with_features(x);
  const RowMatrix f = random_affiliation(ModelKind::lorentz(1), 5, rng).values();
  const Eigen::MatrixXd in = prior_inputs(f, FlowModel::identity(5), g);
  CHECK(in.leftCols(2) == Eigen::MatrixXd(f));
  CHECK(in.rightCols(3) == x);
  CHECK(prior_inputs(f, FlowModel::identity(2), g) == Eigen::MatrixXd(f));
  CHECK_THROWS_AS(prior_inputs(f, FlowModel::identity(4), g), InputError);
}

TEST_CASE("flow regularizer gradient touches only affiliation columns") {
  Rng rng(5);
  Eigen::MatrixXd x(6, 2);
  x.setRandom();
  const Graph g = build_graph(6, Pairs{{0, 1}, {2, 3}}).with_features(x);
  FlowArchitecture arch;
  arch.dim = 4;
  arch.num_blocks = 3;
  arch.hidden_width = 8;
  arch.output_scale = 0.5;
  const FlowModel prior = FlowModel::random(arch, rng);
  const FlowRegularizer reg(prior, g);
  const RowMatrix f = random_affiliation(ModelKind::lorentz(1), 6, rng).values();
  RowMatrix grad = RowMatrix::Zero(6, 2);
  const double value = reg.add_gradient(f, grad);
  CHECK(value == doctest::Approx(reg.value(f)).epsilon(1e-12));
  CHECK(value == doctest::Approx(log_density(prior, prior_inputs(f, prior, g)).sum()).epsilon(1e-12));
  const double h = 1e-5;
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 2; ++j) {
      RowMatrix p = f;
      p(i, j) += h;
      RowMatrix m = f;
      m(i, j) -= h;
      CHECK(grad(i, j) == doctest::Approx((reg.value(p) - reg.value(m)) / (2 * h)).epsilon(1e-6));
    }
}

TEST_CASE("identity prior with affiliation phases only equals a Gaussian-regularized fit") {
  Rng rng(6);
  const Graph g = sample_sbm(sbm_preset("two-block"), 40, rng).graph;
  const ModelKind kind = ModelKind::lorentz(2);
  const AffiliationMatrix init = random_affiliation(kind, 40, rng);
  Schedule s;
  s.phases = {{PhaseTarget::Affiliations, 150, 1e-3, 0.0}};
  s.rounds = 2;
  AlternatingConfig cfg;
  cfg.seed = 9;
  cfg.initial_affiliation = init;
  cfg.initial_prior = FlowModel::identity(4);
  const AlternatingResult r = alternating_fit(g, kind, s, cfg);

  const GaussianRegularizer reg;
  FitConfig fc;
  fc.iterations = 300;
  fc.learning_rate = 1e-3;
  const FitResult ab = fit(g, kind, fc, init, &reg);
  CHECK((r.affiliation.values() - ab.affiliation.values()).cwiseAbs().maxCoeff() <= 1e-9);
  REQUIRE(r.phases.size() == 2);
  CHECK(r.phases[1].values.back() == doctest::Approx(ab.trace.back()).epsilon(1e-9));
  CHECK(r.phases[0].values.front() ==
        doctest::Approx(log_likelihood_sparse(init, g) + reg.value(init.values())).epsilon(1e-12));
}

TEST_CASE("affiliation update with a flat prior gradient matches the prior-free update") {
  class Flat final : public RowRegularizer {
   public:
    double value(const RowMatrix&) const override { return 0.0; }
    double add_gradient(const RowMatrix&, RowMatrix&) const override { return 0.0; }
  };
  Rng rng(7);
  const Graph g = sample_sbm(sbm_preset("two-block"), 30, rng).graph;
  FitConfig fc;
  fc.iterations = 50;
  fc.learning_rate = 1e-3;
  fc.seed = 4;
  const Flat flat;
  const FitResult a = fit(g, ModelKind::euclidean(3), fc);
  const FitResult b = fit(g, ModelKind::euclidean(3), fc, std::nullopt, &flat);
  CHECK((a.affiliation.values().array() == b.affiliation.values().array()).all());
  CHECK(a.trace == b.trace);
}

TEST_CASE("standard schedule on the nine-block sample") {
  Rng rng(8);
  const Graph g = sample_sbm(sbm_preset("nine-block"), 210, rng).graph;
  AlternatingConfig cfg;
  cfg.seed = 1;
  const AlternatingResult r = alternating_fit(g, ModelKind::lorentz(2), schedule_preset("standard"), cfg);
  REQUIRE(r.phases.size() == 4);
  CHECK(r.phases[0].values.size() == 501);
  CHECK(r.phases[1].values.size() == 1300);
  for (const PhaseTrace& p : r.phases) {
    for (std::size_t i = 1; i < p.values.size(); ++i) {
      CHECK(p.values[i] >= p.values[i - 1] - 0.01 * std::abs(p.values[i - 1]));
    }
    CHECK(p.values.back() >= p.values.front() - 0.01 * std::abs(p.values.front()));
  }
  CHECK(r.affiliation.is_feasible(1e-12));
}

TEST_CASE("alternating fit is deterministic") {
  Rng rng(9);
  const Graph g = sample_sbm(sbm_preset("two-block"), 25, rng).graph;
  Schedule s;
  s.phases = {{PhaseTarget::Affiliations, 20, 1e-3, 0.05}, {PhaseTarget::Prior, 20, 1e-3, 0.05}};
  AlternatingConfig cfg;
  cfg.seed = 3;
  cfg.architecture.num_blocks = 2;
  cfg.architecture.hidden_width = 8;
  const AlternatingResult a = alternating_fit(g, ModelKind::lorentz(1), s, cfg);
  const AlternatingResult b = alternating_fit(g, ModelKind::lorentz(1), s, cfg);
  CHECK((a.affiliation.values().array() == b.affiliation.values().array()).all());
  CHECK(a.prior.parameters() == b.prior.parameters());
}

TEST_CASE("generation from a prior concentrated at the origin is nearly empty") {
  const FlowModel prior = shrunk_prior(0.01);
  double density = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const Graph g = generate_graph(prior, ModelKind::lorentz(1), 100, rng);
    density += static_cast<double>(g.num_edges()) / (100.0 * 99.0 / 2.0);
  }
  CHECK(density / 20.0 <= 0.01);
}

TEST_CASE("generation from a two-point prior matches the bipartite closed form") {
  const FlowModel prior = two_point_prior(0.01);
  const ModelKind kind = ModelKind::lorentz(1);
  Rng rng(10);
  Rng replay = rng;
  const Graph g = generate_graph(prior, kind, 200, rng);
  const Eigen::MatrixXd rows = sample(prior, 200, replay, kind);
  double cross = 0.0;
  double cross_n = 0.0;
  double within = 0.0;
  double within_n = 0.0;
  for (int i = 0; i < 200; ++i)
    for (int j = i + 1; j < 200; ++j) {
      const bool same = (rows(i, 1) > 0) == (rows(j, 1) > 0);
      (same ? within : cross) += g.has_edge(i, j);
      (same ? within_n : cross_n) += 1.0;
    }
  CHECK(std::abs(cross / cross_n - (1.0 - std::exp(-2.0))) <= 0.05);
  CHECK(within / within_n <= 0.05);

  Rng a(11);
  Rng b(11);
  CHECK(generate_graph(prior, kind, 80, a).edges() == generate_graph(prior, kind, 80, b).edges());
}

TEST_CASE("fitting a generated graph recovers its probability matrix") {
  const FlowModel prior = two_point_prior(0.05);
  const ModelKind kind = ModelKind::lorentz(1);
  std::vector<double> distances;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    Rng rng(seed);
    Rng replay = rng;
    const Graph g = generate_graph(prior, kind, 200, rng);
    const Eigen::MatrixXd rows = sample(prior, 200, replay, kind);
    // Pairing matrices are the log-domain form; decoded entries can round to 1.
    const Eigen::MatrixXd truth = pairing_matrix(AffiliationMatrix(kind, RowMatrix(rows)));
    FitConfig fc;
    // Larger steps diverge on this dense graph: edges with near-zero pairing
    // have unbounded gradients.
    fc.iterations = 5000;
    fc.learning_rate = 2e-4;
    fc.seed = seed;
    const Eigen::MatrixXd fitted = pairing_matrix(fit(g, kind, fc).affiliation);
    CutOptions co;
    co.restarts = 20;
    co.seed = seed;
    distances.push_back(log_cut_distance_zero_log(fitted, truth, co).value);
  }
  CHECK(median(distances) < 0.1);
}
