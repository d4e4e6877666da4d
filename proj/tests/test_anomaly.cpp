#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include "doctest.h"
#include "pieclam/anomaly.hpp"
#include "pieclam/errors.hpp"
#include "pieclam/metrics.hpp"

using namespace pieclam;

namespace {

Graph two_cliques(int size) {
  std::vector<std::pair<int, int>> edges;
  for (int block = 0; block < 2; ++block)
    for (int i = 0; i < size; ++i)
      for (int j = i + 1; j < size; ++j) edges.emplace_back(block * size + i, block * size + j);
  return build_graph(2 * size, edges);
}

// Number of nodes scoring strictly higher than node n.
int rank_of(const Eigen::VectorXd& scores, int n) {
  return static_cast<int>((scores.array() > scores[n]).count());
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

}  // namespace

TEST_CASE("criterion names") {
  CHECK(parse_criterion("S") == Criterion::Star);
  CHECK(parse_criterion("P") == Criterion::Prior);
  CHECK(parse_criterion("PS") == Criterion::PriorStar);
  for (Criterion c : {Criterion::Star, Criterion::Prior, Criterion::PriorStar})
    CHECK(parse_criterion(criterion_name(c)) == c);
  CHECK_THROWS_AS(parse_criterion("SP"), InputError);
}

TEST_CASE("star score examples") {
  // Path 0-1-2 plus isolated node 3.
  const Graph g = build_graph(4, std::vector<std::pair<int, int>>{{0, 1}, {1, 2}});
  RowMatrix v(4, 1);
  v << 1.0, 1.0, 1.0, 1.0;
  const Eigen::VectorXd s = score_star(AffiliationMatrix(ModelKind::euclidean(1), v), g);
  const double single = -std::log(1.0 - std::exp(-1.0));
  CHECK(single == doctest::Approx(0.4587).epsilon(1e-4));
  CHECK(s[0] == doctest::Approx(single).epsilon(1e-14));
  CHECK(s[1] == doctest::Approx(2 * single).epsilon(1e-14));
  CHECK(s[3] == 0.0);

  RowMatrix big = RowMatrix::Constant(4, 1, 8.0);
  const Eigen::VectorXd sure = score_star(AffiliationMatrix(ModelKind::euclidean(1), big), g);
  CHECK(sure[0] == 0.0);
  CHECK(sure[1] == 0.0);

  CHECK_THROWS_AS(score_star(AffiliationMatrix(ModelKind::euclidean(1), RowMatrix::Ones(3, 1)), g), InputError);
}

TEST_CASE("planted rewiring") {
  Rng rng(1);
  const SbmSample s = sample_sbm(sbm_preset("two-block"), 200, rng);
  const PlantedGraph p = plant_rewired_anomalies(s.graph, s.classes, 10, 10, rng);
  REQUIRE(p.anomalies.size() == 10);
  CHECK(std::is_sorted(p.anomalies.begin(), p.anomalies.end()));
  REQUIRE(p.graph.labels());
  const std::vector<int>& labels = *p.graph.labels();
  CHECK(std::count(labels.begin(), labels.end(), 1) == 10);
  for (int a : p.anomalies) {
    CHECK(labels[a] == 1);
    int cross_after = 0;
    for (int m : p.graph.neighbors(a)) cross_after += s.classes[m] != s.classes[a];
    CHECK(cross_after >= 10);
  }
  CHECK_THROWS_AS(plant_rewired_anomalies(s.graph, s.classes, 201, 10, rng), InputError);
  CHECK_THROWS_AS(plant_rewired_anomalies(s.graph, std::vector<int>(5, 0), 1, 1, rng), InputError);
}

TEST_CASE("a rewired clique node ranks in the top decile") {
  const Graph base = two_cliques(20);
  std::vector<int> classes(40, 0);
  std::fill(classes.begin() + 20, classes.end(), 1);
  int hits = 0;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    Rng rng(seed);
    const PlantedGraph p = plant_rewired_anomalies(base, classes, 1, 10, rng);
    FitConfig fc;
    fc.learning_rate = 0.01;
    fc.iterations = 2000;
    fc.seed = seed;
    const FitResult r = fit(p.graph, ModelKind::euclidean(2), fc);
    const Eigen::VectorXd scores = score_star(r.affiliation, p.graph);
    hits += rank_of(scores, p.anomalies[0]) < 4;
  }
  CHECK(hits == 3);
}

TEST_CASE("prior score under the identity flow") {
  const Graph g = build_graph(3, std::vector<std::pair<int, int>>{{0, 1}});
  RowMatrix v(3, 2);
  v << 0.0, 0.0, 0.5, 0.1, 1.0, -0.3;
  const AffiliationMatrix f(ModelKind::lorentz(1), v);
  const FlowModel id = FlowModel::identity(2);
  const Eigen::VectorXd s = score_prior(f, id, g);
  CHECK(s[0] == doctest::Approx(std::log(2 * std::numbers::pi)).epsilon(1e-14));
  for (int n = 0; n < 3; ++n) {
    CHECK(s[n] == doctest::Approx(std::log(2 * std::numbers::pi) + 0.5 * v.row(n).squaredNorm()).epsilon(1e-14));
    CHECK(s[n] >= s[0]);
  }
  CHECK_THROWS(score_prior(f, FlowModel::identity(3), g));
}

TEST_CASE("a far node scores above a trained unimodal prior's data") {
  Rng rng(2);
  std::normal_distribution<double> gauss(0.0, 0.25);
  const int n = 400;
  RowMatrix v(n + 1, 2);
  for (int i = 0; i < n; ++i) v.row(i) << std::max(0.0, 3.0 + gauss(rng)), std::max(0.0, 3.0 + gauss(rng));
  v.row(n) << 3.0 + 6 * 0.25, 3.0;
  FlowArchitecture arch;
  arch.num_blocks = 4;
  arch.hidden_width = 32;
  PriorTrainConfig pc;
  pc.steps = 500;
  pc.learning_rate = 3e-3;
  pc.noise_amplitude = 0.0;
  const Eigen::MatrixXd train = v.topRows(n);
  const PriorTrainResult r = train_prior(FlowModel::random(arch, rng), train, pc, rng);
  const Graph g = build_graph(n + 1, std::vector<std::pair<int, int>>{});
  const Eigen::VectorXd s = score_prior(AffiliationMatrix(ModelKind::euclidean(2), v), r.model, g);
  CHECK(rank_of(s, n) == 0);

  // Ranking is unchanged by a constant shift.
  std::vector<int> labels(n + 1, 0);
  labels[n] = 1;
  std::vector<double> a(s.data(), s.data() + s.size());
  std::vector<double> b = a;
  for (double& x : b) x += 17.0;
  CHECK(auc_roc(a, labels) == auc_roc(b, labels));
  CHECK(auc_roc(a, labels) == 1.0);
}

TEST_CASE("prior-star score is the sum of its parts") {
  Rng rng(3);
  const Graph g = build_graph(6, std::vector<std::pair<int, int>>{{0, 1}, {1, 2}, {2, 3}, {0, 3}, {4, 1}});
  const AffiliationMatrix f = random_affiliation(ModelKind::lorentz(2), 6, rng);
  FlowArchitecture arch;
  arch.dim = 4;
  arch.num_blocks = 2;
  arch.hidden_width = 8;
  arch.output_scale = 0.5;
  const FlowModel prior = FlowModel::random(arch, rng);
  const Eigen::VectorXd star = score_star(f, g);
  const Eigen::VectorXd pr = score_prior(f, prior, g);
  const Eigen::VectorXd both = score_prior_star(f, prior, g);
  for (int n = 0; n < 6; ++n) CHECK(both[n] == star[n] + pr[n]);
  CHECK(both[5] == pr[5]);
}

TEST_CASE("detect on planted two-block graphs") {
  std::vector<double> aucs;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed);
    const SbmSample s = sample_sbm(sbm_preset("two-block"), 200, rng);
    const PlantedGraph p = plant_rewired_anomalies(s.graph, s.classes, 10, 10, rng);
    AnomalyConfig cfg;
    cfg.kind = ModelKind::lorentz(2);
    cfg.fit.iterations = 2000;
    cfg.fit.learning_rate = 3e-4;
    cfg.seed = seed;
    const AnomalyResult r = detect(p.graph, cfg);
    REQUIRE(r.auc);
    aucs.push_back(*r.auc);
    CHECK_FALSE(r.prior);
    CHECK_FALSE(r.flags);
  }
  CHECK(median(aucs) >= 0.7);
}

TEST_CASE("detect without labels, thresholding and determinism") {
  Rng rng(4);
  const SbmSample s = sample_sbm(sbm_preset("two-block"), 60, rng);
  AnomalyConfig cfg;
  cfg.kind = ModelKind::euclidean(2);
  cfg.fit.iterations = 300;
  cfg.fit.learning_rate = 3e-3;
  cfg.seed = 9;
  cfg.threshold = 0.5;
  const AnomalyResult a = detect(s.graph, cfg);
  const AnomalyResult b = detect(s.graph, cfg);
  CHECK_FALSE(a.auc);
  CHECK(a.scores == b.scores);
  REQUIRE(a.flags);
  for (int n = 0; n < 60; ++n) {
    CHECK((*a.flags)[n] == (a.scores[n] > std::log(2.0)));
    CHECK(a.isolated[n] == (s.graph.degree(n) == 0));
  }

  cfg.threshold = 0.0;
  CHECK_THROWS_AS(detect(s.graph, cfg), InputError);
}

TEST_CASE("detect with a prior") {
  Rng rng(5);
  const SbmSample s = sample_sbm(sbm_preset("two-block"), 60, rng);
  const PlantedGraph p = plant_rewired_anomalies(s.graph, s.classes, 3, 5, rng);
  AnomalyConfig cfg;
  cfg.criterion = Criterion::PriorStar;
  cfg.kind = ModelKind::lorentz(1);
  cfg.architecture.num_blocks = 2;
  cfg.architecture.hidden_width = 8;
  cfg.schedule.phases = {{PhaseTarget::Affiliations, 100, 1e-3, 0.0}, {PhaseTarget::Prior, 100, 1e-3, 0.05}};
  cfg.schedule.rounds = 1;
  cfg.seed = 1;
  const AnomalyResult r = detect(p.graph, cfg);
  REQUIRE(r.prior);
  REQUIRE(r.auc);
  const Eigen::VectorXd expected = score_prior_star(r.affiliation, *r.prior, p.graph);
  CHECK(r.scores == expected);
}
