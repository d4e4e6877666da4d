#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pieclam/graph.hpp"
#include "pieclam/prob_matrix.hpp"

namespace pieclam {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowRef = Eigen::Ref<const Eigen::RowVectorXd>;

enum class Signature { Euclidean, Lorentz };

/// Euclidean(C) embeds in R^C; Lorentz(C) embeds in R^{2C} with the first C
/// coordinates inclusive (t) and the last C exclusive (s).
struct ModelKind {
  Signature signature = Signature::Euclidean;
  int communities = 1;

  static ModelKind euclidean(int c);
  static ModelKind lorentz(int c);

  int dim() const noexcept { return signature == Signature::Lorentz ? 2 * communities : communities; }
  bool lorentz() const noexcept { return signature == Signature::Lorentz; }
  std::string name() const { return lorentz() ? "lorentz" : "euclidean"; }

  friend bool operator==(const ModelKind&, const ModelKind&) = default;
};

/// Diagonal of L: +1 on inclusive coordinates, -1 on exclusive ones. All +1
/// for the Euclidean signature.
Eigen::RowVectorXd signature_diagonal(const ModelKind& kind);

/// N x d matrix of affiliation features. Only the shape is checked on
/// construction; some constructive encoders intentionally leave the cone.
class AffiliationMatrix {
 public:
  AffiliationMatrix(ModelKind kind, RowMatrix values);

  const ModelKind& kind() const noexcept { return kind_; }
  const RowMatrix& values() const noexcept { return values_; }
  RowMatrix& mutable_values() noexcept { return values_; }
  int num_nodes() const noexcept { return static_cast<int>(values_.rows()); }
  RowRef row(int n) const { return values_.row(n); }

  /// Euclidean: all entries >= -tol. Lorentz: every row in the pairwise cone
  /// T (|s^c| <= t^c + tol for every channel).
  bool is_feasible(double tol = 0.0) const;

 private:
  ModelKind kind_;
  RowMatrix values_;
};

double pairing(RowRef f, RowRef g, const ModelKind& kind);

/// 1 - exp(-pairing). Throws ContractError when the pairing is negative
/// beyond round-off.
double edge_probability(RowRef f, RowRef g, const ModelKind& kind);

/// Nearest point of the pairwise cone, channel by channel.
Eigen::RowVectorXd project_to_cone(RowRef f);
/// Projects a whole matrix in place: cone per row for Lorentz, nonnegative
/// orthant for Euclidean.
void project_feasible(RowMatrix& values, const ModelKind& kind);

/// Full pairing matrix F L F^T, diagonal included.
Eigen::MatrixXd pairing_matrix(const AffiliationMatrix& f);

inline constexpr double kDefaultLogClamp = 1e-10;

/// Direct O(N^2) evaluation of the structural log likelihood.
double log_likelihood_dense(const AffiliationMatrix& f, const Graph& g,
                            double eps_log = kDefaultLogClamp);
/// O(|E| d + N d) evaluation via the global-sum rearrangement.
double log_likelihood_sparse(const AffiliationMatrix& f, const Graph& g,
                             double eps_log = kDefaultLogClamp);
RowMatrix log_likelihood_grad(const AffiliationMatrix& f, const Graph& g,
                              double eps_log = kDefaultLogClamp);

/// Value and gradient in one pass (both sparse).
double log_likelihood_value_and_grad(const AffiliationMatrix& f, const Graph& g, double eps_log,
                                     RowMatrix& grad);

/// Additional per-node objective added to the structural likelihood during
/// fitting (a prior's log density, for example).
class RowRegularizer {
 public:
  virtual ~RowRegularizer() = default;
  virtual double value(const RowMatrix& f) const = 0;
  /// Adds the gradient into grad and returns the value at f.
  virtual double add_gradient(const RowMatrix& f, RowMatrix& grad) const = 0;
};

struct FitConfig {
  int iterations = 2500;
  double learning_rate = 1e-6;
  std::uint64_t seed = 0;
  /// Standard deviation of Gaussian jitter applied to the rows at which the
  /// regularizer gradient is evaluated. Ignored without a regularizer.
  double noise_amplitude = 0.0;
  double eps_log = kDefaultLogClamp;

  void validate() const;
};

/// Paper-scale defaults: IeClam 2500 iterations at 1e-6 with 15+15 channels,
/// BigClam 2200 at 1e-6 with 24 channels.
FitConfig default_fit_config(Signature signature);
ModelKind default_model_kind(Signature signature);

/// Random start strictly inside the feasible set. Euclidean entries and
/// t-entries are uniform in (0,1); s-entries are uniform in (-t/2, t/2).
AffiliationMatrix random_affiliation(const ModelKind& kind, int num_nodes, Rng& rng);

struct FitResult {
  AffiliationMatrix affiliation;
  /// Objective before the first update and after every update.
  std::vector<double> trace;
};

/// Projected gradient ascent: F <- Proj(F + lr * grad). Throws
/// NumericalError on a non-finite objective.
FitResult fit(const Graph& g, const ModelKind& kind, const FitConfig& config,
              std::optional<AffiliationMatrix> init = std::nullopt,
              const RowRegularizer* regularizer = nullptr);

/// Edge-probability matrix with zero diagonal.
ProbMatrix decode(const AffiliationMatrix& f);

/// Side one rows (a, a), side two rows (a, -a), Lorentz with C = 1.
AffiliationMatrix encode_bipartite_ieclam(int nodes_per_side, double a);

/// Euclidean encoding with C = N^2 channels: side-one node n owns channels
/// [nN, nN + N), side-two node m owns channels {jN + m}. Under the
/// no-self-loop decoder this is exactly bipartite with 1 - exp(-a^2) across.
AffiliationMatrix encode_bipartite_bigclam_noselfloop(int nodes_per_side, double a);

}  // namespace pieclam
