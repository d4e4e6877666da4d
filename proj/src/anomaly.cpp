#include "pieclam/anomaly.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "pieclam/errors.hpp"
#include "pieclam/metrics.hpp"

namespace pieclam {

Criterion parse_criterion(std::string_view name) {
  if (name == "S") return Criterion::Star;
  if (name == "P") return Criterion::Prior;
  if (name == "PS") return Criterion::PriorStar;
  throw InputError("unknown anomaly criterion '" + std::string(name) + "' (expected S, P or PS)");
}

std::string_view criterion_name(Criterion c) {
  switch (c) {
    case Criterion::Star: return "S";
    case Criterion::Prior: return "P";
    case Criterion::PriorStar: return "PS";
  }
  return "S";
}

Eigen::VectorXd score_star(const AffiliationMatrix& f, const Graph& g, double eps_log) {
  if (f.num_nodes() != g.num_nodes()) throw InputError("score_star: node count mismatch");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(g.num_nodes());
  for (int n = 0; n < g.num_nodes(); ++n) {
    double s = 0.0;
    for (int m : g.neighbors(n)) {
      const double x = std::max(pairing(f.row(n), f.row(m), f.kind()), eps_log);
      s += std::log(-std::expm1(-x));
    }
    out[n] = -s;
  }
  return out;
}

Eigen::VectorXd score_prior(const AffiliationMatrix& f, const FlowModel& prior, const Graph& g) {
  if (f.num_nodes() != g.num_nodes()) throw InputError("score_prior: node count mismatch");
  return -log_density(prior, prior_inputs(f.values(), prior, g));
}

Eigen::VectorXd score_prior_star(const AffiliationMatrix& f, const FlowModel& prior, const Graph& g,
                                 double eps_log) {
  return score_star(f, g, eps_log) + score_prior(f, prior, g);
}

PlantedGraph plant_rewired_anomalies(const Graph& g, std::span<const int> classes, int count, int rewire,
                                     Rng& rng) {
  const int n = g.num_nodes();
  if (classes.size() != static_cast<std::size_t>(n)) throw InputError("plant: one class per node is required");
  if (count < 0 || count > n || rewire < 0) throw InputError("plant: invalid anomaly count or rewire size");
  std::set<std::pair<int, int>> edges;
  for (const Edge& e : g.edges()) edges.emplace(e.u, e.v);
  auto key = [](int a, int b) { return std::pair{std::min(a, b), std::max(a, b)}; };

  std::vector<int> nodes(n);
  for (int i = 0; i < n; ++i) nodes[i] = i;
  std::shuffle(nodes.begin(), nodes.end(), rng);
  std::vector<int> chosen(nodes.begin(), nodes.begin() + count);
  std::sort(chosen.begin(), chosen.end());

  for (int node : chosen) {
    std::vector<int> nbrs;
    for (const auto& [u, v] : edges) {
      if (u == node) nbrs.push_back(v);
      if (v == node) nbrs.push_back(u);
    }
    std::shuffle(nbrs.begin(), nbrs.end(), rng);
    std::vector<int> candidates;
    for (int m = 0; m < n; ++m) {
      if (m != node && classes[m] != classes[node] && !edges.count(key(node, m))) candidates.push_back(m);
    }
    std::shuffle(candidates.begin(), candidates.end(), rng);
    const int k = std::min<int>(rewire, static_cast<int>(candidates.size()));
    for (int i = 0; i < std::min<int>(k, static_cast<int>(nbrs.size())); ++i) edges.erase(key(node, nbrs[i]));
    for (int i = 0; i < k; ++i) edges.insert(key(node, candidates[i]));
  }

  std::vector<std::pair<int, int>> list(edges.begin(), edges.end());
  std::vector<int> labels(n, 0);
  for (int node : chosen) labels[node] = 1;
  Graph out = build_graph(n, list);
  if (g.features()) out = out.with_features(*g.features());
  return {out.with_labels(std::move(labels)), std::move(chosen)};
}

AnomalyResult detect(const Graph& input, const AnomalyConfig& config) {
  if (config.threshold && !(*config.threshold > 0.0 && *config.threshold <= 1.0)) {
    throw InputError("anomaly threshold must lie in (0, 1]");
  }
  Graph g = config.densify ? densify_two_hop(input) : input;
  if (config.reduce_features && g.features()) {
    g = g.with_features(reduce_features(*g.features(), config.feature_dim, config.seed));
  }
  const bool use_prior = config.with_prior || config.criterion != Criterion::Star;

  AnomalyResult out;
  if (use_prior) {
    AlternatingConfig ac;
    ac.seed = config.seed;
    ac.architecture = config.architecture;
    ac.eps_log = config.fit.eps_log;
    AlternatingResult fitted = alternating_fit(g, config.kind, config.schedule, ac);
    out.affiliation = std::move(fitted.affiliation);
    out.prior = std::move(fitted.prior);
  } else {
    FitConfig fc = config.fit;
    fc.seed = config.seed;
    out.affiliation = fit(g, config.kind, fc).affiliation;
  }

  switch (config.criterion) {
    case Criterion::Star: out.scores = score_star(out.affiliation, g, config.fit.eps_log); break;
    case Criterion::Prior: out.scores = score_prior(out.affiliation, *out.prior, g); break;
    case Criterion::PriorStar:
      out.scores = score_prior_star(out.affiliation, *out.prior, g, config.fit.eps_log);
      break;
  }
  out.isolated.resize(g.num_nodes());
  for (int n = 0; n < g.num_nodes(); ++n) out.isolated[n] = g.degree(n) == 0;

  if (input.labels()) {
    const std::vector<double> s(out.scores.data(), out.scores.data() + out.scores.size());
    out.auc = auc_roc(s, *input.labels());
  }
  if (config.threshold) {
    const double limit = -std::log(*config.threshold);
    std::vector<int> flags(g.num_nodes());
    for (int n = 0; n < g.num_nodes(); ++n) flags[n] = out.scores[n] > limit;
    out.flags = std::move(flags);
  }
  return out;
}

}  // namespace pieclam
