#include "pieclam/trainer.hpp"

#include <cmath>

#include "pieclam/errors.hpp"

namespace pieclam {

std::string_view phase_name(PhaseTarget target) {
  return target == PhaseTarget::Affiliations ? "F" : "prior";
}

void Schedule::validate() const {
  if (phases.empty()) throw InputError("schedule has no phases");
  if (rounds < 1) throw InputError("schedule needs at least one round");
  for (const Phase& p : phases) {
    if (p.steps < 1) throw InputError("every phase needs at least one step");
    if (!(p.learning_rate > 0.0) || !std::isfinite(p.learning_rate)) {
      throw InputError("phase learning rates must be positive");
    }
    if (!(p.noise_amplitude >= 0.0)) throw InputError("phase noise must be nonnegative");
  }
}

std::vector<Phase> Schedule::expanded() const {
  validate();
  std::vector<Phase> out;
  for (int r = 0; r < rounds; ++r) {
    const double factor = std::ldexp(1.0, -r);
    for (Phase p : phases) {
      if (halve_rates) p.learning_rate *= factor;
      if (halve_noise) p.noise_amplitude *= factor;
      out.push_back(p);
    }
  }
  return out;
}

Schedule schedule_preset(std::string_view name) {
  Schedule s;
  if (name == "standard") {
    s.phases = {{PhaseTarget::Affiliations, 500, 2e-6, 0.0}, {PhaseTarget::Prior, 1300, 1e-6, 0.01}};
    s.rounds = 2;
  } else if (name == "halving") {
    s.phases = {{PhaseTarget::Affiliations, 500, 3e-6, 0.0}, {PhaseTarget::Prior, 1300, 2e-6, 0.05}};
    s.rounds = 3;
    s.halve_rates = true;
    s.halve_noise = true;
  } else {
    throw InputError("unknown schedule preset '" + std::string(name) + "'");
  }
  return s;
}

Eigen::MatrixXd prior_inputs(const RowMatrix& affiliations, const FlowModel& prior, const Graph& g) {
  const Eigen::Index d = affiliations.cols();
  if (prior.dim() == d) return affiliations;
  const auto& x = g.features();
  if (!x || prior.dim() != d + x->cols()) {
    throw InputError("prior dimension " + std::to_string(prior.dim()) +
                     " matches neither the affiliation dimension nor affiliations plus features");
  }
  if (x->rows() != affiliations.rows()) throw InputError("feature rows do not match the node count");
  Eigen::MatrixXd out(affiliations.rows(), prior.dim());
  out.leftCols(d) = affiliations;
  out.rightCols(x->cols()) = *x;
  return out;
}

FlowRegularizer::FlowRegularizer(const FlowModel& prior, const Graph& g) : prior_(prior), graph_(g) {}

double FlowRegularizer::value(const RowMatrix& f) const {
  return log_density(prior_, prior_inputs(f, prior_, graph_)).sum();
}

double FlowRegularizer::add_gradient(const RowMatrix& f, RowMatrix& grad) const {
  const Eigen::MatrixXd rows = prior_inputs(f, prior_, graph_);
  const DensityGradient dg =
      log_density_gradient(prior_, rows, Eigen::VectorXd::Ones(rows.rows()), false, true);
  grad += dg.input_grad.leftCols(f.cols());
  return dg.log_density.sum();
}

double joint_log_likelihood(const AffiliationMatrix& f, const FlowModel& prior, const Graph& g,
                            double eps_log) {
  return log_likelihood_sparse(f, g, eps_log) + FlowRegularizer(prior, g).value(f.values());
}

AlternatingResult alternating_fit(const Graph& g, const ModelKind& kind, const Schedule& schedule,
                                  const AlternatingConfig& config) {
  const std::vector<Phase> phases = schedule.expanded();
  Rng rng(config.seed);
  AffiliationMatrix f = config.initial_affiliation ? *config.initial_affiliation
                                                   : random_affiliation(kind, g.num_nodes(), rng);
  const int prior_dim = kind.dim() + (g.features() ? static_cast<int>(g.features()->cols()) : 0);
  FlowModel prior;
  if (config.initial_prior) {
    prior = *config.initial_prior;
  } else {
    FlowArchitecture arch = config.architecture;
    arch.dim = prior_dim;
    prior = FlowModel::random(arch, rng);
  }
  if (prior.dim() != prior_dim) throw InputError("initial prior has the wrong dimension");

  AlternatingResult out{f, prior, {}};
  const int per_round = static_cast<int>(schedule.phases.size());
  for (std::size_t i = 0; i < phases.size(); ++i) {
    const Phase& phase = phases[i];
    PhaseTrace trace{phase.target, static_cast<int>(i) / per_round, phase.learning_rate,
                     phase.noise_amplitude, {}};
    const std::string label = "phase " + std::to_string(i) + " (" + std::string(phase_name(phase.target)) + ")";
    try {
      if (phase.target == PhaseTarget::Affiliations) {
        FitConfig fc;
        fc.iterations = phase.steps;
        fc.learning_rate = phase.learning_rate;
        fc.noise_amplitude = phase.noise_amplitude;
        fc.eps_log = config.eps_log;
        fc.seed = rng();
        const FlowRegularizer reg(prior, g);
        FitResult fr = fit(g, kind, fc, f, &reg);
        f = std::move(fr.affiliation);
        trace.values = std::move(fr.trace);
      } else {
        PriorTrainConfig pc;
        pc.steps = phase.steps;
        pc.learning_rate = phase.learning_rate;
        pc.noise_amplitude = phase.noise_amplitude;
        pc.optimizer = config.prior_optimizer;
        const double structural = log_likelihood_sparse(f, g, config.eps_log);
        PriorTrainResult pr = train_prior(prior, prior_inputs(f.values(), prior, g), pc, rng);
        prior = std::move(pr.model);
        trace.values.reserve(pr.trace.size());
        for (double mean_ld : pr.trace) trace.values.push_back(structural + g.num_nodes() * mean_ld);
      }
    } catch (const NumericalError& e) {
      throw NumericalError("alternating_fit: " + label + ": " + e.what());
    }
    out.phases.push_back(std::move(trace));
  }
  out.affiliation = std::move(f);
  out.prior = std::move(prior);
  return out;
}

Graph generate_graph(const FlowModel& prior, const ModelKind& kind, int num_nodes, Rng& rng) {
  if (num_nodes < 0) throw InputError("node count must be nonnegative");
  if (prior.dim() < kind.dim()) throw InputError("prior dimension is smaller than the model dimension");
  const Eigen::MatrixXd rows = sample(prior, num_nodes, rng, kind);
  const AffiliationMatrix f(kind, RowMatrix(rows.leftCols(kind.dim())));
  Graph g = sample_bernoulli_graph(decode(f), rng);
  if (prior.dim() > kind.dim()) g = g.with_features(rows.rightCols(prior.dim() - kind.dim()));
  return g;
}

}  // namespace pieclam
