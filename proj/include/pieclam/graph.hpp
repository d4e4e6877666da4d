#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "pieclam/prob_matrix.hpp"

namespace pieclam {

using Rng = std::mt19937_64;

/// Undirected edge stored in canonical order u < v.
struct Edge {
  int u = 0;
  int v = 0;
  friend bool operator==(const Edge&, const Edge&) = default;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

/// Undirected simple graph. Immutable once built: edges are kept both as a
/// sorted canonical edge list and as CSR neighbor lists.
class Graph {
 public:
  Graph() = default;

  int num_nodes() const noexcept { return num_nodes_; }
  std::size_t num_edges() const noexcept { return edges_.size(); }
  const std::vector<Edge>& edges() const noexcept { return edges_; }

  std::span<const int> neighbors(int n) const {
    return {neighbors_.data() + offsets_[n], offsets_[n + 1] - offsets_[n]};
  }
  int degree(int n) const { return static_cast<int>(offsets_[n + 1] - offsets_[n]); }
  bool has_edge(int u, int v) const;

  const std::optional<Eigen::MatrixXd>& features() const noexcept { return features_; }
  const std::optional<std::vector<int>>& labels() const noexcept { return labels_; }

  /// Copies with node attributes attached. Row n / entry n belongs to node n.
  Graph with_features(Eigen::MatrixXd features) const;
  Graph with_labels(std::vector<int> labels) const;

  Eigen::MatrixXd adjacency() const;

  friend Graph build_graph(int num_nodes, std::span<const std::pair<int, int>> edges);

 private:
  int num_nodes_ = 0;
  std::vector<Edge> edges_;
  std::vector<std::size_t> offsets_{0};
  std::vector<int> neighbors_;
  std::optional<Eigen::MatrixXd> features_;
  std::optional<std::vector<int>> labels_;
};

/// Drops self-loops and duplicates (in either orientation). Throws
/// InputError when an endpoint is outside [0, num_nodes).
Graph build_graph(int num_nodes, std::span<const std::pair<int, int>> edges);

struct SbmSpec {
  std::vector<double> class_probs;
  Eigen::MatrixXd block_probs;

  int num_classes() const { return static_cast<int>(class_probs.size()); }
  void validate() const;
};

/// Named block-model presets: "nine-block" (three classes, empty diagonal
/// blocks, off-diagonal blocks at 0.5) and "two-block" (assortative pair).
SbmSpec sbm_preset(std::string_view name);

struct SbmSample {
  Graph graph;
  std::vector<int> classes;
};

SbmSample sample_sbm(const SbmSpec& spec, int num_nodes, Rng& rng);

/// Expected adjacency of an SBM given a realized class assignment.
ProbMatrix sbm_prob_matrix(const SbmSpec& spec, std::span<const int> classes);

/// 2N x 2N matrix with 1 - exp(-a^2) across the two sides and 0 within.
ProbMatrix bipartite_prob_matrix(int nodes_per_side, double a);

Graph sample_bernoulli_graph(const ProbMatrix& p, Rng& rng);
/// Validating overload for raw matrices; throws InputError on entries
/// outside [0, 1] or asymmetry.
Graph sample_bernoulli_graph(const Eigen::MatrixXd& p, Rng& rng);

/// Adds an edge between every pair of distinct nodes with a common neighbor.
/// Node attributes are carried over.
Graph densify_two_hop(const Graph& g);

struct SvdResult {
  Eigen::MatrixXd U;
  Eigen::VectorXd singular_values;
  Eigen::MatrixXd V;
};

/// Randomized truncated SVD (Halko et al. range finder).
SvdResult randomized_svd(const Eigen::MatrixXd& x, int rank, Rng& rng, int oversample = 10,
                         int power_iterations = 2);

/// Projection X V_k onto the top-k right singular subspace. Small problems
/// use a dense SVD; large ones use randomized_svd.
Eigen::MatrixXd truncated_svd_project(const Eigen::MatrixXd& x, int rank, Rng& rng);

/// Zero mean, unit (population) standard deviation per column; constant
/// columns become zero.
Eigen::MatrixXd standardize_columns(const Eigen::MatrixXd& x);

/// Truncated SVD down to target_dim when D > target_dim, otherwise column
/// standardization.
Eigen::MatrixXd reduce_features(const Eigen::MatrixXd& x, int target_dim = 100,
                                std::uint64_t seed = 0);

}  // namespace pieclam
