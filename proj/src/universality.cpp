#include "pieclam/universality.hpp"

#include <algorithm>
#include <cmath>

#include "pieclam/errors.hpp"

namespace pieclam {

Eigen::MatrixXd Icg::reconstruct() const {
  return memberships * weights.asDiagonal() * memberships.transpose();
}

void Icg::validate() const {
  if (memberships.cols() != weights.size()) throw InputError("ICG: one weight per community is required");
  if (((memberships.array() != 0.0) && (memberships.array() != 1.0)).any()) {
    throw InputError("ICG: memberships must be 0 or 1");
  }
}

namespace {

// Least-squares weights for fixed memberships: minimize |T - Q diag(r) Q^T|_F.
Eigen::VectorXd icg_weights(const Eigen::MatrixXd& target, const Eigen::MatrixXd& q) {
  const Eigen::MatrixXd gram = q.transpose() * q;
  const Eigen::MatrixXd system = gram.cwiseProduct(gram);
  const Eigen::VectorXd rhs = (q.transpose() * target * q).diagonal();
  return system.completeOrthogonalDecomposition().solve(rhs);
}

double residual_sq(const Eigen::MatrixXd& target, const Eigen::MatrixXd& q, const Eigen::VectorXd& r) {
  return (target - q * r.asDiagonal() * q.transpose()).squaredNorm();
}

Eigen::MatrixXd greedy_init(const Eigen::MatrixXd& target, int k, Rng& rng) {
  const Eigen::Index n = target.rows();
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(n, k);
  Eigen::MatrixXd resid = target;
  std::bernoulli_distribution coin(0.5);
  for (int c = 0; c < k; ++c) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(resid);
    Eigen::Index top = 0;
    es.eigenvalues().cwiseAbs().maxCoeff(&top);
    const Eigen::VectorXd v = es.eigenvectors().col(top);
    double best_gain = 0.0;
    Eigen::VectorXd best;
    for (int sign : {1, -1}) {
      const Eigen::VectorXd cand = ((sign * v).array() > 0.0).cast<double>();
      const double size = cand.sum();
      if (size == 0.0) continue;
      const double proj = cand.dot(resid * cand);
      const double gain = proj * proj / (size * size);
      if (gain > best_gain) {
        best_gain = gain;
        best = cand;
      }
    }
    if (best.size() == 0) {
      best.resize(n);
      for (Eigen::Index i = 0; i < n; ++i) best[i] = coin(rng) ? 1.0 : 0.0;
    }
    const double size = std::max(best.sum(), 1.0);
    const double r = best.dot(resid * best) / (size * size);
    resid -= r * best * best.transpose();
    q.col(c) = best;
  }
  return q;
}

void relax(const Eigen::MatrixXd& target, Eigen::MatrixXd& q, int iterations) {
  double step = 1.0 / std::max(1.0, target.cwiseAbs().maxCoeff() * static_cast<double>(target.rows()));
  for (int it = 0; it < iterations; ++it) {
    const Eigen::VectorXd r = icg_weights(target, q);
    const Eigen::MatrixXd err = target - q * r.asDiagonal() * q.transpose();
    const double loss = err.squaredNorm();
    const Eigen::MatrixXd grad = -4.0 * err * q * r.asDiagonal();
    const double gnorm = grad.squaredNorm();
    if (gnorm < 1e-20) break;
    bool moved = false;
    for (int tries = 0; tries < 30; ++tries) {
      const Eigen::MatrixXd cand = (q - step * grad).cwiseMax(0.0).cwiseMin(1.0);
      if (residual_sq(target, cand, r) <= loss - 1e-4 * (cand - q).squaredNorm() / step) {
        q = cand;
        step *= 1.5;
        moved = true;
        break;
      }
      step *= 0.5;
    }
    if (!moved) break;
  }
}

// Single-entry flips of the rounded memberships that lower the residual.
void repair(const Eigen::MatrixXd& target, Eigen::MatrixXd& q, Eigen::VectorXd& r, int sweeps) {
  const Eigen::Index n = q.rows();
  const Eigen::Index k = q.cols();
  for (int sweep = 0; sweep < sweeps; ++sweep) {
    Eigen::MatrixXd resid = target - q * r.asDiagonal() * q.transpose();
    bool changed = false;
    for (Eigen::Index c = 0; c < k; ++c) {
      for (Eigen::Index node = 0; node < n; ++node) {
        const double delta = q(node, c) > 0.5 ? -1.0 : 1.0;
        // Change of the reconstruction is confined to row and column `node`.
        double change = 0.0;
        for (Eigen::Index j = 0; j < n; ++j) {
          if (j == node) continue;
          const double dc = r[c] * delta * q(j, c);
          change += 2.0 * (dc * dc - 2.0 * resid(node, j) * dc);
        }
        const double dd = r[c] * (2.0 * delta * q(node, c) + delta * delta);
        change += dd * dd - 2.0 * resid(node, node) * dd;
        if (change < -1e-12) {
          for (Eigen::Index j = 0; j < n; ++j) {
            if (j == node) continue;
            const double dc = r[c] * delta * q(j, c);
            resid(node, j) -= dc;
            resid(j, node) -= dc;
          }
          resid(node, node) -= dd;
          q(node, c) += delta;
          changed = true;
        }
      }
    }
    r = icg_weights(target, q);
    if (!changed) break;
  }
}

}  // namespace

IcgFit fit_icg(const Eigen::MatrixXd& target, int k, const IcgFitConfig& config) {
  if (target.rows() != target.cols()) throw InputError("fit_icg: target must be square");
  if (k < 1) throw InputError("fit_icg: at least one community is required");
  if (!target.allFinite()) throw InputError("fit_icg: target has non-finite entries");
  if ((target - target.transpose()).cwiseAbs().maxCoeff() > 1e-9 * (1.0 + target.cwiseAbs().maxCoeff())) {
    throw InputError("fit_icg: target must be symmetric");
  }
  const Eigen::MatrixXd sym = 0.5 * (target + target.transpose());
  const Eigen::Index n = target.rows();
  Rng rng(config.seed);
  std::bernoulli_distribution coin(0.5);

  IcgFit best;
  double best_loss = std::numeric_limits<double>::infinity();
  for (int restart = 0; restart < std::max(1, config.restarts); ++restart) {
    Eigen::MatrixXd q;
    if (restart == 0) {
      q = greedy_init(sym, k, rng);
    } else {
      q.resize(n, k);
      for (Eigen::Index i = 0; i < q.size(); ++i) q.data()[i] = coin(rng) ? 1.0 : 0.0;
    }
    relax(sym, q, config.relaxed_iterations);
    q = (q.array() > 0.5).cast<double>();
    Eigen::VectorXd r = icg_weights(sym, q);
    repair(sym, q, r, config.repair_sweeps);
    const double loss = residual_sq(sym, q, r);
    if (loss < best_loss) {
      best_loss = loss;
      best.icg = Icg{q, r};
    }
  }
  const Eigen::MatrixXd resid = sym - best.icg.reconstruct();
  best.frobenius_residual = resid.norm();
  best.cut_residual = cut_norm(resid, config.cut);
  return best;
}

AffiliationMatrix icg_to_lorentz_features(const Icg& icg) {
  icg.validate();
  const int k = icg.num_communities();
  const Eigen::VectorXd pos = icg.weights.cwiseMax(0.0).cwiseSqrt();
  const Eigen::VectorXd neg = (-icg.weights).cwiseMax(0.0).cwiseSqrt();
  RowMatrix f(icg.num_nodes(), 2 * k);
  f.leftCols(k) = icg.memberships * pos.asDiagonal();
  f.rightCols(k) = icg.memberships * neg.asDiagonal();
  return AffiliationMatrix(ModelKind::lorentz(k), std::move(f));
}

int icg_community_bound(double eps) {
  if (!(eps > 0.0 && eps < 1.0)) throw InputError("eps must lie in (0, 1)");
  const double l = std::log(2.0 / eps);
  return static_cast<int>(std::ceil(9.0 * l * l / (eps * eps)));
}

EncodeReport icg_encode(const Eigen::MatrixXd& a, double eps, std::optional<int> communities,
                        const IcgFitConfig& config) {
  if (!(eps > 0.0 && eps < 1.0)) throw InputError("eps must lie in (0, 1)");
  EncodeReport rep;
  rep.transform_d = eps / 2.0;
  rep.communities = communities ? *communities : icg_community_bound(eps);
  const Eigen::MatrixXd target = log_transform(a, rep.transform_d);
  const IcgFit fitted = fit_icg(target, rep.communities, config);
  rep.fit_frobenius = fitted.frobenius_residual;
  rep.fit_cut = fitted.cut_residual.value;
  rep.features = icg_to_lorentz_features(fitted.icg);
  rep.in_cone = rep.features.is_feasible(1e-12);
  const double extra[] = {rep.transform_d};
  rep.distance = log_cut_distance_pa_log(pairing_matrix(rep.features), a, config.cut, extra);
  return rep;
}

void BlockModel::validate() const {
  const Eigen::Index k = block_values.rows();
  if (block_values.cols() != k || k < 1) throw InputError("block model: values must be a nonempty square matrix");
  if (!block_values.allFinite() || block_values.minCoeff() < 0.0) {
    throw InputError("block model: block values must be nonnegative");
  }
  if ((block_values - block_values.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
    throw InputError("block model: block values must be symmetric");
  }
  for (int c : partition)
    if (c < 0 || c >= k) throw InputError("block model: class id out of range");
}

AffiliationMatrix block_model_to_cone_features(const BlockModel& bm) {
  bm.validate();
  const int k = bm.num_classes();
  const int channels = k * k;
  const int n = static_cast<int>(bm.partition.size());
  RowMatrix f = RowMatrix::Zero(n, 2 * channels);
  auto channel = [k](int i, int j) { return i * k + j; };
  for (int node = 0; node < n; ++node) {
    const int own = bm.partition[node];
    f(node, channel(own, own)) = std::sqrt(bm.block_values(own, own));
    for (int other = 0; other < k; ++other) {
      if (other == own) continue;
      const double h = std::sqrt(bm.block_values(own, other) / 4.0);
      f(node, channel(own, other)) = h;
      f(node, channel(other, own)) = h;
      f(node, channels + channel(own, other)) = h;
      f(node, channels + channel(other, own)) = -h;
    }
  }
  return AffiliationMatrix(ModelKind::lorentz(channels), std::move(f));
}

BlockModel empirical_block_model(const Eigen::MatrixXd& target, std::span<const int> classes) {
  if (target.rows() != target.cols() || static_cast<std::size_t>(target.rows()) != classes.size()) {
    throw InputError("empirical_block_model: one class per node is required");
  }
  int k = 0;
  for (int c : classes) {
    if (c < 0) throw InputError("empirical_block_model: negative class id");
    k = std::max(k, c + 1);
  }
  Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, k);
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(k, k);
  for (Eigen::Index i = 0; i < target.rows(); ++i)
    for (Eigen::Index j = 0; j < target.cols(); ++j) {
      if (i == j) continue;
      sums(classes[i], classes[j]) += target(i, j);
      counts(classes[i], classes[j]) += 1.0;
    }
  BlockModel bm;
  bm.partition.assign(classes.begin(), classes.end());
  bm.block_values = (counts.array() > 0.0).select(sums.array() / counts.array().max(1.0), 0.0).matrix();
  bm.block_values = 0.5 * (bm.block_values + bm.block_values.transpose()).eval();
  bm.block_values = bm.block_values.cwiseMax(0.0);
  return bm;
}

EncodeReport block_encode(const Eigen::MatrixXd& a, double eps, const BlockFitter& fitter, const CutOptions& cut) {
  if (!(eps > 0.0 && eps < 1.0)) throw InputError("eps must lie in (0, 1)");
  EncodeReport rep;
  rep.transform_d = eps / 2.0;
  const Eigen::MatrixXd target = log_transform(a, rep.transform_d);
  const BlockModel bm = fitter(target);
  if (bm.partition.size() != static_cast<std::size_t>(a.rows())) {
    throw InputError("block fitter returned a partition of the wrong size");
  }
  rep.features = block_model_to_cone_features(bm);
  rep.communities = rep.features.kind().communities;
  rep.in_cone = rep.features.is_feasible(0.0);
  const Eigen::MatrixXd pairings = pairing_matrix(rep.features);
  Eigen::MatrixXd resid = target - pairings;
  resid.diagonal().setZero();
  rep.fit_frobenius = resid.norm();
  const double extra[] = {rep.transform_d};
  rep.distance = log_cut_distance_pa_log(pairings, a, cut, extra);
  rep.fit_cut = rep.distance.value - rep.distance.d;
  return rep;
}

double bipartite_lower_bound(double a) {
  if (!(a >= 0.0)) throw InputError("a must be nonnegative");
  return a * a / 16.0;
}

namespace {

Eigen::MatrixXd bipartite_log_target(int nodes_per_side, double a) {
  const int n = 2 * nodes_per_side;
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(n, n);
  t.topRightCorner(nodes_per_side, nodes_per_side).setConstant(a * a);
  t.bottomLeftCorner(nodes_per_side, nodes_per_side).setConstant(a * a);
  return t;
}

}  // namespace

CutNormResult bipartite_log_distance(const AffiliationMatrix& f, int nodes_per_side, double a,
                                     const CutOptions& cut) {
  if (f.num_nodes() != 2 * nodes_per_side) throw InputError("bipartite check: node count mismatch");
  return cut_norm(pairing_matrix(f) - bipartite_log_target(nodes_per_side, a), cut);
}

BipartiteSeparation bipartite_separation(const AffiliationMatrix& euclidean, int nodes_per_side, double a,
                                         const CutOptions& cut) {
  if (euclidean.kind().lorentz()) throw InputError("bipartite separation applies to Euclidean models");
  BipartiteSeparation out;
  out.bound = bipartite_lower_bound(a);
  out.measured = bipartite_log_distance(euclidean, nodes_per_side, a, cut);

  const int n = nodes_per_side;
  const Eigen::MatrixXd diff = pairing_matrix(euclidean) - bipartite_log_target(n, a);
  const double blocks = std::abs(diff.topLeftCorner(n, n).sum()) + std::abs(diff.bottomRightCorner(n, n).sum()) +
                        std::abs(diff.topRightCorner(n, n).sum()) + std::abs(diff.bottomLeftCorner(n, n).sum());
  out.four_block_average = blocks / (16.0 * n * n);

  const Eigen::RowVectorXd m1 = euclidean.values().topRows(n).colwise().mean();
  const Eigen::RowVectorXd m2 = euclidean.values().bottomRows(n).colwise().mean();
  out.side_mean_formula = (2.0 * a * a + (m1 - m2).squaredNorm()) / 16.0;
  return out;
}

}  // namespace pieclam
