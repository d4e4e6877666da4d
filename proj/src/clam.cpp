#include "pieclam/clam.hpp"

#include <cmath>
#include <string>

#include "pieclam/errors.hpp"

namespace pieclam {

namespace {

// log(1 - e^{-x}) for x > 0 without cancellation.
inline double log1mexp(double x) { return std::log(-std::expm1(-x)); }

inline double signed_dot(const double* f, const double* g, const double* sig, Eigen::Index d) {
  double acc = 0.0;
  for (Eigen::Index c = 0; c < d; ++c) acc += sig[c] * f[c] * g[c];
  return acc;
}

void check_shape(const AffiliationMatrix& f, const Graph& g) {
  if (f.num_nodes() != g.num_nodes()) {
    throw InputError("affiliation matrix has " + std::to_string(f.num_nodes()) +
                     " rows but graph has " + std::to_string(g.num_nodes()) + " nodes");
  }
}

}  // namespace

ModelKind ModelKind::euclidean(int c) {
  if (c < 1) throw InputError("community count must be at least 1");
  return {Signature::Euclidean, c};
}

ModelKind ModelKind::lorentz(int c) {
  if (c < 1) throw InputError("community count must be at least 1");
  return {Signature::Lorentz, c};
}

Eigen::RowVectorXd signature_diagonal(const ModelKind& kind) {
  Eigen::RowVectorXd sig = Eigen::RowVectorXd::Ones(kind.dim());
  if (kind.lorentz()) sig.tail(kind.communities).setConstant(-1.0);
  return sig;
}

AffiliationMatrix::AffiliationMatrix(ModelKind kind, RowMatrix values)
    : kind_(kind), values_(std::move(values)) {
  if (kind_.communities < 1) throw InputError("community count must be at least 1");
  if (values_.cols() != kind_.dim()) {
    throw InputError("affiliation matrix has " + std::to_string(values_.cols()) +
                     " columns, model dimension is " + std::to_string(kind_.dim()));
  }
}

bool AffiliationMatrix::is_feasible(double tol) const {
  const int c = kind_.communities;
  for (Eigen::Index n = 0; n < values_.rows(); ++n) {
    if (!kind_.lorentz()) {
      if ((values_.row(n).array() < -tol).any()) return false;
      continue;
    }
    for (int k = 0; k < c; ++k) {
      const double t = values_(n, k);
      const double s = values_(n, c + k);
      if (std::abs(s) > t + tol) return false;
    }
  }
  return true;
}

double pairing(RowRef f, RowRef g, const ModelKind& kind) {
  if (f.size() != kind.dim() || g.size() != kind.dim()) {
    throw InputError("pairing: vector dimension does not match the model dimension");
  }
  if (!kind.lorentz()) return f.dot(g);
  const int c = kind.communities;
  return f.head(c).dot(g.head(c)) - f.tail(c).dot(g.tail(c));
}

double edge_probability(RowRef f, RowRef g, const ModelKind& kind) {
  double x = pairing(f, g, kind);
  if (x < 0.0) {
    if (x < -1e-12 * (1.0 + f.norm() * g.norm())) {
      throw ContractError("negative pairing " + std::to_string(x) +
                          ": inputs are outside a cone of non-negativity");
    }
    x = 0.0;
  }
  return -std::expm1(-x);
}

Eigen::RowVectorXd project_to_cone(RowRef f) {
  if (f.size() % 2 != 0) throw InputError("cone projection needs an even dimension");
  const Eigen::Index c = f.size() / 2;
  Eigen::RowVectorXd out = f;
  for (Eigen::Index k = 0; k < c; ++k) {
    const double t = f[k];
    const double s = f[c + k];
    if (std::abs(s) <= t) continue;
    if (t <= -std::abs(s)) {
      out[k] = 0.0;
      out[c + k] = 0.0;
    } else if (s > t) {
      const double h = 0.5 * (t + s);
      out[k] = h;
      out[c + k] = h;
    } else {
      const double h = 0.5 * (t - s);
      out[k] = h;
      out[c + k] = -h;
    }
  }
  return out;
}

void project_feasible(RowMatrix& values, const ModelKind& kind) {
  if (!kind.lorentz()) {
    values = values.cwiseMax(0.0);
    return;
  }
  for (Eigen::Index n = 0; n < values.rows(); ++n) values.row(n) = project_to_cone(values.row(n));
}

Eigen::MatrixXd pairing_matrix(const AffiliationMatrix& f) {
  const Eigen::RowVectorXd sig = signature_diagonal(f.kind());
  const RowMatrix& v = f.values();
  return v * sig.asDiagonal() * v.transpose();
}

double log_likelihood_dense(const AffiliationMatrix& f, const Graph& g, double eps_log) {
  check_shape(f, g);
  const Eigen::MatrixXd x = pairing_matrix(f);
  const Eigen::MatrixXd a = g.adjacency();
  const int n = g.num_nodes();
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      total += a(i, j) != 0.0 ? log1mexp(std::max(x(i, j), eps_log)) : -x(i, j);
    }
  }
  return 0.5 * total;
}

double log_likelihood_value_and_grad(const AffiliationMatrix& f, const Graph& g, double eps_log,
                                     RowMatrix& grad) {
  check_shape(f, g);
  const RowMatrix& v = f.values();
  const Eigen::Index d = v.cols();
  const Eigen::RowVectorXd sig = signature_diagonal(f.kind());
  const Eigen::RowVectorXd total = v.colwise().sum();
  const double clamp_term = log1mexp(eps_log);

  grad.setZero(v.rows(), d);
  Eigen::RowVectorXd acc(d);
  double twice = 0.0;
  for (int n = 0; n < g.num_nodes(); ++n) {
    const double* fn = v.row(n).data();
    acc.setZero();
    for (int m : g.neighbors(n)) {
      const double* fm = v.row(m).data();
      const double x = signed_dot(fn, fm, sig.data(), d);
      double w;
      if (x >= eps_log) {
        const double one_minus = -std::expm1(-x);
        twice += std::log(one_minus) + x;
        w = 1.0 / one_minus;
      } else {
        twice += clamp_term + x;
        w = 1.0;
      }
      for (Eigen::Index c = 0; c < d; ++c) acc[c] += w * fm[c];
    }
    const Eigen::RowVectorXd lf = v.row(n).cwiseProduct(sig);
    twice += -lf.dot(total) + lf.dot(v.row(n));
    grad.row(n) = (acc - total + v.row(n)).cwiseProduct(sig);
  }
  return 0.5 * twice;
}

double log_likelihood_sparse(const AffiliationMatrix& f, const Graph& g, double eps_log) {
  check_shape(f, g);
  const RowMatrix& v = f.values();
  const Eigen::Index d = v.cols();
  const Eigen::RowVectorXd sig = signature_diagonal(f.kind());
  const Eigen::RowVectorXd total = v.colwise().sum();
  const double clamp_term = log1mexp(eps_log);
  double twice = 0.0;
  for (int n = 0; n < g.num_nodes(); ++n) {
    const double* fn = v.row(n).data();
    for (int m : g.neighbors(n)) {
      const double x = signed_dot(fn, v.row(m).data(), sig.data(), d);
      twice += (x >= eps_log ? log1mexp(x) : clamp_term) + x;
    }
    const Eigen::RowVectorXd lf = v.row(n).cwiseProduct(sig);
    twice += -lf.dot(total) + lf.dot(v.row(n));
  }
  return 0.5 * twice;
}

RowMatrix log_likelihood_grad(const AffiliationMatrix& f, const Graph& g, double eps_log) {
  RowMatrix grad;
  log_likelihood_value_and_grad(f, g, eps_log, grad);
  return grad;
}

void FitConfig::validate() const {
  if (iterations < 0) throw InputError("iterations must be nonnegative");
  if (!(learning_rate > 0.0)) throw InputError("learning rate must be positive");
  if (!(eps_log > 0.0)) throw InputError("log clamp must be positive");
  if (!(noise_amplitude >= 0.0)) throw InputError("noise amplitude must be nonnegative");
}

FitConfig default_fit_config(Signature signature) {
  FitConfig cfg;
  cfg.iterations = signature == Signature::Lorentz ? 2500 : 2200;
  cfg.learning_rate = 1e-6;
  return cfg;
}

ModelKind default_model_kind(Signature signature) {
  return signature == Signature::Lorentz ? ModelKind::lorentz(15) : ModelKind::euclidean(24);
}

AffiliationMatrix random_affiliation(const ModelKind& kind, int num_nodes, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  RowMatrix v(num_nodes, kind.dim());
  const int c = kind.communities;
  for (int n = 0; n < num_nodes; ++n) {
    if (!kind.lorentz()) {
      for (int k = 0; k < c; ++k) v(n, k) = unit(rng);
      continue;
    }
    for (int k = 0; k < c; ++k) {
      const double t = unit(rng);
      v(n, k) = t;
      v(n, c + k) = t * (unit(rng) - 0.5);
    }
  }
  return {kind, std::move(v)};
}

FitResult fit(const Graph& g, const ModelKind& kind, const FitConfig& config,
              std::optional<AffiliationMatrix> init, const RowRegularizer* regularizer) {
  config.validate();
  Rng rng(config.seed);
  AffiliationMatrix f = init ? std::move(*init) : random_affiliation(kind, g.num_nodes(), rng);
  if (!(f.kind() == kind)) throw InputError("initial affiliation matrix has a different kind");
  check_shape(f, g);
  project_feasible(f.mutable_values(), kind);

  std::normal_distribution<double> gauss(0.0, 1.0);
  const bool jitter = regularizer != nullptr && config.noise_amplitude > 0.0;
  RowMatrix grad;
  RowMatrix noisy;
  FitResult out{f, {}};
  out.trace.reserve(config.iterations + 1);

  auto objective = [&](const AffiliationMatrix& cur, RowMatrix* g_out) {
    double value;
    if (g_out == nullptr) {
      value = log_likelihood_sparse(cur, g, config.eps_log);
      if (regularizer) value += regularizer->value(cur.values());
      return value;
    }
    value = log_likelihood_value_and_grad(cur, g, config.eps_log, *g_out);
    if (regularizer) {
      if (jitter) {
        noisy = cur.values();
        for (Eigen::Index i = 0; i < noisy.size(); ++i) {
          noisy.data()[i] += config.noise_amplitude * gauss(rng);
        }
        regularizer->add_gradient(noisy, *g_out);
        value += regularizer->value(cur.values());
      } else {
        value += regularizer->add_gradient(cur.values(), *g_out);
      }
    }
    return value;
  };

  for (int it = 0; it < config.iterations; ++it) {
    const double value = objective(f, &grad);
    if (!std::isfinite(value) || !grad.allFinite()) {
      throw NumericalError("fit: non-finite objective at iteration " + std::to_string(it) +
                           " (value " + std::to_string(value) + ")");
    }
    out.trace.push_back(value);
    f.mutable_values() += config.learning_rate * grad;
    project_feasible(f.mutable_values(), kind);
  }
  const double final_value = objective(f, nullptr);
  if (!std::isfinite(final_value)) {
    throw NumericalError("fit: non-finite objective after the last iteration");
  }
  out.trace.push_back(final_value);
  out.affiliation = std::move(f);
  return out;
}

ProbMatrix decode(const AffiliationMatrix& f) {
  const Eigen::MatrixXd x = pairing_matrix(f);
  const int n = f.num_nodes();
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      double xij = x(i, j);
      if (xij < 0.0) {
        if (xij < -1e-12 * (1.0 + f.row(i).norm() * f.row(j).norm())) {
          throw ContractError("decode: negative pairing between nodes " + std::to_string(i) +
                              " and " + std::to_string(j));
        }
        xij = 0.0;
      }
      const double prob = -std::expm1(-xij);
      p(i, j) = prob;
      p(j, i) = prob;
    }
  }
  return ProbMatrix(std::move(p));
}

AffiliationMatrix encode_bipartite_ieclam(int nodes_per_side, double a) {
  if (!(a >= 0.0)) throw InputError("bipartite strength a must be nonnegative");
  RowMatrix v(2 * nodes_per_side, 2);
  for (int n = 0; n < nodes_per_side; ++n) {
    v(n, 0) = a;
    v(n, 1) = a;
    v(nodes_per_side + n, 0) = a;
    v(nodes_per_side + n, 1) = -a;
  }
  return {ModelKind::lorentz(1), std::move(v)};
}

AffiliationMatrix encode_bipartite_bigclam_noselfloop(int nodes_per_side, double a) {
  if (!(a >= 0.0)) throw InputError("bipartite strength a must be nonnegative");
  const int n = nodes_per_side;
  if (n < 1) throw InputError("need at least one node per side");
  RowMatrix v = RowMatrix::Zero(2 * n, n * n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      v(i, i * n + j) = a;
      v(n + i, j * n + i) = a;
    }
  }
  return {ModelKind::euclidean(n * n), std::move(v)};
}

}  // namespace pieclam
