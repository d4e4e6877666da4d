#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "pieclam/clam.hpp"
#include "pieclam/metrics.hpp"

namespace pieclam {

/// Intersecting community matrix Q diag(r) Q^T with binary memberships.
struct Icg {
  Eigen::MatrixXd memberships;  // N x K, entries 0 or 1
  Eigen::VectorXd weights;      // K

  int num_nodes() const { return static_cast<int>(memberships.rows()); }
  int num_communities() const { return static_cast<int>(memberships.cols()); }
  Eigen::MatrixXd reconstruct() const;
  void validate() const;
};

struct IcgFitConfig {
  int restarts = 4;
  int relaxed_iterations = 200;
  int repair_sweeps = 3;
  std::uint64_t seed = 0;
  CutOptions cut{};
};

struct IcgFit {
  Icg icg;
  double frobenius_residual = 0.0;
  CutNormResult cut_residual;
};

/// Heuristic best Frobenius approximation of a symmetric target (diagonal
/// included) by an ICG with k communities.
IcgFit fit_icg(const Eigen::MatrixXd& target, int k, const IcgFitConfig& config = {});

/// Lorentz(K) rows whose pairing matrix is exactly Q diag(r) Q^T. Rows need
/// not lie in the cone.
AffiliationMatrix icg_to_lorentz_features(const Icg& icg);

/// ceil(9 log(2/eps)^2 / eps^2): community count that suffices for an ICG
/// approximation of a log-transformed graph to within eps / 2.
int icg_community_bound(double eps);

struct EncodeReport {
  AffiliationMatrix features{ModelKind::lorentz(1), RowMatrix(0, 2)};
  int communities = 0;
  double transform_d = 0.0;  // d used to build the log-transformed target
  DistanceResult distance;   // log cut distance against the input adjacency
  double fit_frobenius = 0.0;
  double fit_cut = 0.0;
  bool in_cone = false;
};

/// Log-transforms A at eps / 2, fits an ICG and converts it to Lorentz
/// features. The distance is computed from the pairing matrix directly,
/// since rows outside the cone may have negative pairings.
EncodeReport icg_encode(const Eigen::MatrixXd& a, double eps, std::optional<int> communities = std::nullopt,
                        const IcgFitConfig& config = {});

/// Nonnegative symmetric block values over a node partition.
struct BlockModel {
  std::vector<int> partition;
  Eigen::MatrixXd block_values;

  int num_classes() const { return static_cast<int>(block_values.rows()); }
  void validate() const;
};

/// Lorentz(K^2) features, one channel per ordered class pair, with every row
/// in the cone and pairing equal to the block value of the two classes.
AffiliationMatrix block_model_to_cone_features(const BlockModel& bm);

/// Block means of the target over off-diagonal dyads, for a given partition.
BlockModel empirical_block_model(const Eigen::MatrixXd& target, std::span<const int> classes);

using BlockFitter = std::function<BlockModel(const Eigen::MatrixXd& log_target)>;

/// Log-transforms A at eps / 2, obtains a block model from the fitter and
/// encodes it in the cone.
EncodeReport block_encode(const Eigen::MatrixXd& a, double eps, const BlockFitter& fitter,
                          const CutOptions& cut = {});

/// a^2 / 16: lower bound on the unregularized log cut distance between any
/// Euclidean decoding and the bipartite graph with cross probability
/// 1 - exp(-a^2).
double bipartite_lower_bound(double a);

struct BipartiteSeparation {
  double bound = 0.0;
  /// Cut norm of the log-likelihood difference with self-loops included.
  CutNormResult measured;
  /// Mean absolute sum over the four side-by-side blocks.
  double four_block_average = 0.0;
  /// (2 a^2 + |mean_1 - mean_2|^2) / 16 from the side means of the rows.
  double side_mean_formula = 0.0;
};

/// Compares a Euclidean model against the bipartite target of the given
/// size. Node n < nodes_per_side is on side one.
BipartiteSeparation bipartite_separation(const AffiliationMatrix& euclidean, int nodes_per_side, double a,
                                         const CutOptions& cut = {});

/// Unregularized log cut distance between the self-loop decoding of F and
/// the bipartite target, diagonal included.
CutNormResult bipartite_log_distance(const AffiliationMatrix& f, int nodes_per_side, double a,
                                     const CutOptions& cut = {});

}  // namespace pieclam
