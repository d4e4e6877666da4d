#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "pieclam/clam.hpp"
#include "pieclam/flow.hpp"
#include "pieclam/graph.hpp"
#include "pieclam/trainer.hpp"

namespace pieclam {

/// Star: product of neighbor edge probabilities. Prior: prior density.
/// PriorStar: both.
enum class Criterion { Star, Prior, PriorStar };

Criterion parse_criterion(std::string_view name);  // "S", "P" or "PS"
std::string_view criterion_name(Criterion c);

/// Higher values are more anomalous. Every score is the negated log of the
/// corresponding probability criterion.
Eigen::VectorXd score_star(const AffiliationMatrix& f, const Graph& g, double eps_log = kDefaultLogClamp);
Eigen::VectorXd score_prior(const AffiliationMatrix& f, const FlowModel& prior, const Graph& g);
Eigen::VectorXd score_prior_star(const AffiliationMatrix& f, const FlowModel& prior, const Graph& g,
                                 double eps_log = kDefaultLogClamp);

struct PlantedGraph {
  Graph graph;  // labels attached: 1 marks a planted node
  std::vector<int> anomalies;
};

/// Picks `count` nodes and, for each, replaces up to `rewire` of its edges by
/// edges to random nodes of other classes.
PlantedGraph plant_rewired_anomalies(const Graph& g, std::span<const int> classes, int count, int rewire,
                                     Rng& rng);

struct AnomalyConfig {
  Criterion criterion = Criterion::Star;
  /// Fit with the alternating prior schedule; forced on for P and PS.
  bool with_prior = false;
  bool densify = false;
  bool reduce_features = false;
  int feature_dim = 100;
  ModelKind kind = ModelKind::lorentz(2);
  FitConfig fit{};
  Schedule schedule = schedule_preset("standard");
  FlowArchitecture architecture{};
  /// Probability threshold delta; a node is flagged when its criterion
  /// falls below it.
  std::optional<double> threshold;
  std::uint64_t seed = 0;
};

struct AnomalyResult {
  Eigen::VectorXd scores;
  std::vector<char> isolated;
  std::optional<double> auc;
  std::optional<std::vector<int>> flags;
  AffiliationMatrix affiliation{ModelKind::euclidean(1), RowMatrix(0, 1)};
  std::optional<FlowModel> prior;
};

AnomalyResult detect(const Graph& g, const AnomalyConfig& config);

}  // namespace pieclam
