#include "pieclam/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "pieclam/errors.hpp"

namespace pieclam {

ProbMatrix::ProbMatrix(Eigen::MatrixXd values) : values_(std::move(values)) {
  if (values_.rows() != values_.cols()) {
    throw InputError("probability matrix must be square");
  }
  const Eigen::Index n = values_.rows();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (values_(i, i) != 0.0) {
      throw InputError("probability matrix must have a zero diagonal");
    }
    for (Eigen::Index j = 0; j < n; ++j) {
      const double p = values_(i, j);
      if (!(p >= 0.0 && p <= 1.0)) {
        throw InputError("probability entry (" + std::to_string(i) + "," + std::to_string(j) +
                         ") outside [0,1]");
      }
      if (std::abs(p - values_(j, i)) > 1e-12) {
        throw InputError("probability matrix is not symmetric");
      }
    }
  }
}

bool Graph::has_edge(int u, int v) const {
  if (u < 0 || v < 0 || u >= num_nodes_ || v >= num_nodes_) return false;
  auto nb = neighbors(u);
  return std::binary_search(nb.begin(), nb.end(), v);
}

Graph Graph::with_features(Eigen::MatrixXd features) const {
  if (features.rows() != num_nodes_) {
    throw InputError("feature matrix has " + std::to_string(features.rows()) + " rows, graph has " +
                     std::to_string(num_nodes_) + " nodes");
  }
  Graph g = *this;
  g.features_ = std::move(features);
  return g;
}

Graph Graph::with_labels(std::vector<int> labels) const {
  if (static_cast<int>(labels.size()) != num_nodes_) {
    throw InputError("label vector length does not match node count");
  }
  for (int l : labels) {
    if (l != 0 && l != 1) throw InputError("labels must be 0 or 1");
  }
  Graph g = *this;
  g.labels_ = std::move(labels);
  return g;
}

Eigen::MatrixXd Graph::adjacency() const {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(num_nodes_, num_nodes_);
  for (const Edge& e : edges_) {
    a(e.u, e.v) = 1.0;
    a(e.v, e.u) = 1.0;
  }
  return a;
}

Graph build_graph(int num_nodes, std::span<const std::pair<int, int>> edges) {
  if (num_nodes < 0) throw InputError("negative node count");
  Graph g;
  g.num_nodes_ = num_nodes;
  g.edges_.reserve(edges.size());
  for (auto [a, b] : edges) {
    if (a < 0 || b < 0 || a >= num_nodes || b >= num_nodes) {
      throw InputError("edge (" + std::to_string(a) + "," + std::to_string(b) +
                       ") has an endpoint outside [0," + std::to_string(num_nodes) + ")");
    }
    if (a == b) continue;
    g.edges_.push_back({std::min(a, b), std::max(a, b)});
  }
  std::sort(g.edges_.begin(), g.edges_.end());
  g.edges_.erase(std::unique(g.edges_.begin(), g.edges_.end()), g.edges_.end());

  std::vector<std::size_t> degree(num_nodes, 0);
  for (const Edge& e : g.edges_) {
    ++degree[e.u];
    ++degree[e.v];
  }
  g.offsets_.assign(num_nodes + 1, 0);
  for (int n = 0; n < num_nodes; ++n) g.offsets_[n + 1] = g.offsets_[n] + degree[n];
  g.neighbors_.resize(g.offsets_[num_nodes]);
  std::vector<std::size_t> cursor(g.offsets_.begin(), g.offsets_.end() - 1);
  for (const Edge& e : g.edges_) {
    g.neighbors_[cursor[e.u]++] = e.v;
    g.neighbors_[cursor[e.v]++] = e.u;
  }
  for (int n = 0; n < num_nodes; ++n) {
    std::sort(g.neighbors_.begin() + g.offsets_[n], g.neighbors_.begin() + g.offsets_[n + 1]);
  }
  return g;
}

void SbmSpec::validate() const {
  const int k = num_classes();
  if (k < 1) throw InputError("SBM needs at least one class");
  if (block_probs.rows() != k || block_probs.cols() != k) {
    throw InputError("SBM block matrix must be K x K");
  }
  double total = 0.0;
  for (double p : class_probs) {
    if (!(p >= 0.0)) throw InputError("SBM class probabilities must be nonnegative");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw InputError("SBM class probabilities must sum to 1");
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j) {
      const double c = block_probs(i, j);
      if (!(c >= 0.0 && c <= 1.0)) throw InputError("SBM block probability outside [0,1]");
      if (c != block_probs(j, i)) throw InputError("SBM block matrix must be symmetric");
    }
  }
}

SbmSpec sbm_preset(std::string_view name) {
  SbmSpec spec;
  if (name == "nine-block") {
    spec.class_probs = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
    spec.block_probs.resize(3, 3);
    spec.block_probs << 0.0, 0.5, 0.5,
                        0.5, 0.0, 0.5,
                        0.5, 0.5, 0.0;
  } else if (name == "two-block") {
    spec.class_probs = {0.5, 0.5};
    spec.block_probs.resize(2, 2);
    spec.block_probs << 0.3, 0.02,
                        0.02, 0.3;
  } else {
    throw InputError("unknown SBM preset '" + std::string(name) + "'");
  }
  // The literal 1/3 entries sum to 1 within rounding; renormalize so the
  // preset passes the exact check too.
  const double total = std::accumulate(spec.class_probs.begin(), spec.class_probs.end(), 0.0);
  for (double& p : spec.class_probs) p /= total;
  return spec;
}

SbmSample sample_sbm(const SbmSpec& spec, int num_nodes, Rng& rng) {
  spec.validate();
  if (num_nodes < 0) throw InputError("negative node count");
  std::discrete_distribution<int> pick_class(spec.class_probs.begin(), spec.class_probs.end());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  SbmSample out;
  out.classes.resize(num_nodes);
  for (int& c : out.classes) c = pick_class(rng);
  std::vector<std::pair<int, int>> edges;
  for (int n = 0; n < num_nodes; ++n) {
    for (int m = n + 1; m < num_nodes; ++m) {
      if (unit(rng) < spec.block_probs(out.classes[n], out.classes[m])) edges.emplace_back(n, m);
    }
  }
  out.graph = build_graph(num_nodes, edges);
  return out;
}

ProbMatrix sbm_prob_matrix(const SbmSpec& spec, std::span<const int> classes) {
  spec.validate();
  const int n = static_cast<int>(classes.size());
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    if (classes[i] < 0 || classes[i] >= spec.num_classes()) {
      throw InputError("class id out of range");
    }
    for (int j = 0; j < n; ++j) {
      if (i != j) p(i, j) = spec.block_probs(classes[i], classes[j]);
    }
  }
  return ProbMatrix(std::move(p));
}

ProbMatrix bipartite_prob_matrix(int nodes_per_side, double a) {
  if (!(a >= 0.0)) throw InputError("bipartite strength a must be nonnegative");
  if (nodes_per_side < 0) throw InputError("negative side size");
  const int n = nodes_per_side;
  const double cross = -std::expm1(-a * a);
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(2 * n, 2 * n);
  p.topRightCorner(n, n).setConstant(cross);
  p.bottomLeftCorner(n, n).setConstant(cross);
  return ProbMatrix(std::move(p));
}

Graph sample_bernoulli_graph(const ProbMatrix& p, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int n = p.size();
  std::vector<std::pair<int, int>> edges;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (unit(rng) < p(i, j)) edges.emplace_back(i, j);
    }
  }
  return build_graph(n, edges);
}

Graph sample_bernoulli_graph(const Eigen::MatrixXd& p, Rng& rng) {
  Eigen::MatrixXd q = p;
  // Self-loops are never sampled, so the diagonal is not constrained.
  for (Eigen::Index i = 0; i < std::min(q.rows(), q.cols()); ++i) {
    if (!(q(i, i) >= 0.0 && q(i, i) <= 1.0)) throw InputError("probability entry outside [0,1]");
    q(i, i) = 0.0;
  }
  return sample_bernoulli_graph(ProbMatrix(std::move(q)), rng);
}

Graph densify_two_hop(const Graph& g) {
  std::vector<std::pair<int, int>> edges;
  edges.reserve(g.num_edges());
  for (const Edge& e : g.edges()) edges.emplace_back(e.u, e.v);
  for (int k = 0; k < g.num_nodes(); ++k) {
    auto nb = g.neighbors(k);
    for (std::size_t i = 0; i < nb.size(); ++i) {
      for (std::size_t j = i + 1; j < nb.size(); ++j) edges.emplace_back(nb[i], nb[j]);
    }
  }
  Graph out = build_graph(g.num_nodes(), edges);
  if (g.features()) out = out.with_features(*g.features());
  if (g.labels()) out = out.with_labels(*g.labels());
  return out;
}

SvdResult randomized_svd(const Eigen::MatrixXd& x, int rank, Rng& rng, int oversample,
                         int power_iterations) {
  const Eigen::Index rows = x.rows();
  const Eigen::Index cols = x.cols();
  if (rank < 1) throw InputError("SVD rank must be positive");
  const Eigen::Index sketch = std::min<Eigen::Index>(rank + oversample, std::min(rows, cols));
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd omega(cols, sketch);
  for (Eigen::Index j = 0; j < sketch; ++j) {
    for (Eigen::Index i = 0; i < cols; ++i) omega(i, j) = gauss(rng);
  }
  auto orthonormal = [](const Eigen::MatrixXd& m) {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
    return Eigen::MatrixXd(qr.householderQ() * Eigen::MatrixXd::Identity(m.rows(), m.cols()));
  };
  Eigen::MatrixXd q = orthonormal(x * omega);
  for (int it = 0; it < power_iterations; ++it) {
    Eigen::MatrixXd z = orthonormal(x.transpose() * q);
    q = orthonormal(x * z);
  }
  Eigen::MatrixXd b = q.transpose() * x;
  Eigen::BDCSVD<Eigen::MatrixXd> svd(b, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::Index k = std::min<Eigen::Index>(rank, svd.singularValues().size());
  SvdResult out;
  out.U = q * svd.matrixU().leftCols(k);
  out.singular_values = svd.singularValues().head(k);
  out.V = svd.matrixV().leftCols(k);
  return out;
}

Eigen::MatrixXd truncated_svd_project(const Eigen::MatrixXd& x, int rank, Rng& rng) {
  constexpr Eigen::Index kDenseLimit = 512;
  Eigen::MatrixXd v;
  if (std::min(x.rows(), x.cols()) <= kDenseLimit) {
    Eigen::BDCSVD<Eigen::MatrixXd> svd(x, Eigen::ComputeThinV);
    const Eigen::Index k = std::min<Eigen::Index>(rank, svd.matrixV().cols());
    v = svd.matrixV().leftCols(k);
  } else {
    v = randomized_svd(x, rank, rng).V;
  }
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(x.rows(), rank);
  out.leftCols(v.cols()) = x * v;
  return out;
}

Eigen::MatrixXd standardize_columns(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd out = x;
  const double rows = static_cast<double>(x.rows());
  if (x.rows() == 0) return out;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double mean = x.col(j).mean();
    out.col(j).array() -= mean;
    const double sd = std::sqrt(out.col(j).squaredNorm() / rows);
    if (sd > 1e-12 * std::max(1.0, std::abs(mean))) {
      out.col(j) /= sd;
    } else {
      out.col(j).setZero();
    }
  }
  return out;
}

Eigen::MatrixXd reduce_features(const Eigen::MatrixXd& x, int target_dim, std::uint64_t seed) {
  if (x.cols() > target_dim) {
    Rng rng(seed);
    return truncated_svd_project(x, target_dim, rng);
  }
  return standardize_columns(x);
}

}  // namespace pieclam
