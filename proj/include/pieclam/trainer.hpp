#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "pieclam/clam.hpp"
#include "pieclam/flow.hpp"
#include "pieclam/graph.hpp"

namespace pieclam {

enum class PhaseTarget { Affiliations, Prior };

std::string_view phase_name(PhaseTarget target);

struct Phase {
  PhaseTarget target = PhaseTarget::Affiliations;
  int steps = 1;
  double learning_rate = 1e-6;
  /// Prior phases: amplitude of the perturbation of the training rows.
  /// Affiliation phases: jitter of the rows at which the prior gradient is
  /// taken (0 evaluates it at the current rows).
  double noise_amplitude = 0.0;
};

/// One round of phases, repeated `rounds` times. With the halving flags the
/// rates and/or noise amplitudes of round r are the round-0 values / 2^r.
struct Schedule {
  std::vector<Phase> phases;
  int rounds = 1;
  bool halve_rates = false;
  bool halve_noise = false;

  void validate() const;
  /// Flattened phase list with halving applied.
  std::vector<Phase> expanded() const;
};

/// "standard": two rounds of 500 affiliation steps at 2e-6 then 1300 prior
/// steps at 1e-6 with noise 0.01. "halving": three rounds at 3e-6 / 2e-6,
/// noise 0.05, rates and noise halved every round.
Schedule schedule_preset(std::string_view name);

/// Rows fed to the prior: affiliations, followed by the node features when
/// the prior dimension includes them.
Eigen::MatrixXd prior_inputs(const RowMatrix& affiliations, const FlowModel& prior, const Graph& g);

/// Sum of log p over nodes, exposed to the affiliation optimizer. Feature
/// coordinates are held fixed; only affiliation columns receive gradient.
class FlowRegularizer final : public RowRegularizer {
 public:
  FlowRegularizer(const FlowModel& prior, const Graph& g);
  double value(const RowMatrix& f) const override;
  double add_gradient(const RowMatrix& f, RowMatrix& grad) const override;

 private:
  const FlowModel& prior_;
  const Graph& graph_;
};

/// Prior term plus the sparse structural likelihood.
double joint_log_likelihood(const AffiliationMatrix& f, const FlowModel& prior, const Graph& g,
                            double eps_log = kDefaultLogClamp);

struct PhaseTrace {
  PhaseTarget target = PhaseTarget::Affiliations;
  int round = 0;
  double learning_rate = 0.0;
  double noise_amplitude = 0.0;
  /// Joint objective per step. During prior phases the prior term is
  /// evaluated on the perturbed training rows.
  std::vector<double> values;
};

struct AlternatingConfig {
  std::uint64_t seed = 0;
  FlowArchitecture architecture{};
  PriorOptimizer prior_optimizer = PriorOptimizer::Adam;
  double eps_log = kDefaultLogClamp;
  std::optional<AffiliationMatrix> initial_affiliation;
  std::optional<FlowModel> initial_prior;
};

struct AlternatingResult {
  AffiliationMatrix affiliation;
  FlowModel prior;
  std::vector<PhaseTrace> phases;
};

/// Runs the schedule phase by phase. The prior dimension is kind.dim() plus
/// the feature width when g carries features.
AlternatingResult alternating_fit(const Graph& g, const ModelKind& kind, const Schedule& schedule,
                                  const AlternatingConfig& config = {});

/// Samples rows from the prior (affiliation coordinates projected onto the
/// feasible set), decodes them and draws Bernoulli edges. Extra prior
/// coordinates, if any, are attached as node features.
Graph generate_graph(const FlowModel& prior, const ModelKind& kind, int num_nodes, Rng& rng);

}  // namespace pieclam
