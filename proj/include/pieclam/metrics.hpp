#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pieclam/graph.hpp"
#include "pieclam/prob_matrix.hpp"

namespace pieclam {

/// Row set U and column set V of a cut; value = |sum over U x V| / N^2.
struct CutWitness {
  std::vector<int> rows;
  std::vector<int> cols;
  int sign = 1;
  double value = 0.0;
};

struct CutNormResult {
  double value = 0.0;
  CutWitness witness;
  bool exact = false;
};

inline constexpr int kExactCutLimit = 22;

/// Exhaustive search over row subsets (Gray-code order) with the optimal
/// column set in closed form. Square input with N <= kExactCutLimit.
CutNormResult cut_norm_exact(const Eigen::MatrixXd& x);

/// Lower bound from alternating best responses between rows and columns,
/// both signs, from `restarts` random row sets.
CutNormResult cut_norm_local_search(const Eigen::MatrixXd& x, int restarts, Rng& rng);

struct CutOptions {
  int exact_limit = kExactCutLimit;
  int restarts = 200;
  /// Restarts used while scanning regularizer grids; the reported value is
  /// re-evaluated at the minimizer with `restarts`.
  int grid_restarts = 20;
  std::uint64_t seed = 0;
};

/// Exact when N <= exact_limit, local search otherwise.
CutNormResult cut_norm(const Eigen::MatrixXd& x, const CutOptions& options = {});

/// Sum of x over the witness, divided by N^2.
double evaluate_witness(const Eigen::MatrixXd& x, const CutWitness& w);

std::string witness_json(const CutNormResult& r);

/// Entrywise -log(1 - (1 - d) m) for 0 < d <= 1 and m in [0, 1].
Eigen::MatrixXd log_transform(const Eigen::MatrixXd& m, double d);

/// -log(1 - m), the d -> 0 limit. Entries must be below 1.
Eigen::MatrixXd log_transform_zero(const Eigen::MatrixXd& m);

struct DistanceResult {
  double value = 0.0;
  double d = 0.0;  // regularizer on the second argument (0 when unused)
  double e = 0.0;  // regularizer on the first argument (0 when unused)
  CutNormResult cut;
};

/// Cut norm of the difference of unregularized log transforms, diagonal
/// excluded. Throws InputError on an entry equal to 1.
DistanceResult log_cut_distance_zero(const Eigen::MatrixXd& p, const Eigen::MatrixXd& q,
                                     const CutOptions& options = {});
/// Same with both arguments already log-transformed (pairing matrices).
DistanceResult log_cut_distance_zero_log(const Eigen::MatrixXd& p_log, const Eigen::MatrixXd& q_log,
                                         const CutOptions& options = {});

/// min over d of d + cut(-log(1 - P) - log_transform(A, d)). The d search is
/// a grid 2^-k, k = 0..30, plus any extra candidates, then golden-section
/// refinement around the best grid point.
DistanceResult log_cut_distance_pa(const Eigen::MatrixXd& p, const Eigen::MatrixXd& a,
                                   const CutOptions& options = {},
                                   std::span<const double> extra_d = {});
/// Same with P supplied as its log transform (may contain negative entries).
DistanceResult log_cut_distance_pa_log(const Eigen::MatrixXd& p_log, const Eigen::MatrixXd& a,
                                       const CutOptions& options = {},
                                       std::span<const double> extra_d = {});

/// min over (e, d) of e + d + cut(log_transform(P, e) - log_transform(Q, d)).
DistanceResult log_cut_distance_pq(const Eigen::MatrixXd& p, const Eigen::MatrixXd& q,
                                   const CutOptions& options = {});

/// Cut norm of P - Q with the diagonal excluded.
DistanceResult cut_distance(const Eigen::MatrixXd& p, const Eigen::MatrixXd& q,
                            const CutOptions& options = {});

/// Frobenius norm of P - Q, divided by N unless normalize is false.
double l2_distance(const Eigen::MatrixXd& p, const Eigen::MatrixXd& q, bool normalize = true);

/// Mann-Whitney AUC with average ranks for ties; label 1 marks positives.
double auc_roc(std::span<const double> scores, std::span<const int> labels);

}  // namespace pieclam
