#include "pieclam/metrics.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>

#include "json.hpp"
#include "pieclam/clam.hpp"
#include "pieclam/errors.hpp"

namespace pieclam {

namespace {

void require_square(const Eigen::MatrixXd& x, const char* what) {
  if (x.rows() != x.cols()) throw InputError(std::string(what) + ": matrix must be square");
}

void require_same_shape(const Eigen::MatrixXd& p, const Eigen::MatrixXd& q) {
  require_square(p, "distance");
  if (p.rows() != q.rows() || p.cols() != q.cols()) throw InputError("distance: shape mismatch");
}

void require_unit_range(const Eigen::MatrixXd& m, const char* what) {
  if (!m.allFinite() || m.minCoeff() < 0.0 || m.maxCoeff() > 1.0) {
    throw InputError(std::string(what) + ": entries must lie in [0, 1]");
  }
}

void require_below_one_offdiag(const Eigen::MatrixXd& m, const char* what) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      if (i != j && m(i, j) >= 1.0) {
        throw InputError(std::string(what) + ": entries must be below 1 (found one at " +
                         std::to_string(i) + "," + std::to_string(j) + ")");
      }
}

Eigen::MatrixXd offdiag(Eigen::MatrixXd x) {
  x.diagonal().setZero();
  return x;
}

std::vector<int> indices_of(const std::vector<char>& mask) {
  std::vector<int> out;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) out.push_back(static_cast<int>(i));
  return out;
}

}  // namespace

double evaluate_witness(const Eigen::MatrixXd& x, const CutWitness& w) {
  double s = 0.0;
  for (int i : w.rows)
    for (int j : w.cols) s += x(i, j);
  const double n = static_cast<double>(x.rows());
  return n == 0 ? 0.0 : s / (n * n);
}

CutNormResult cut_norm_exact(const Eigen::MatrixXd& x) {
  require_square(x, "cut_norm_exact");
  const int n = static_cast<int>(x.rows());
  if (n > kExactCutLimit) {
    throw InputError("cut_norm_exact: N = " + std::to_string(n) + " exceeds the enumeration bound " +
                     std::to_string(kExactCutLimit));
  }
  CutNormResult out;
  out.exact = true;
  if (n == 0) return out;
  const RowMatrix rows = x;
  Eigen::VectorXd colsum = Eigen::VectorXd::Zero(n);
  std::uint32_t mask = 0;
  std::uint32_t best_mask = 0;
  int best_sign = 1;
  double best = 0.0;
  const std::uint32_t total = std::uint32_t{1} << n;
  for (std::uint32_t k = 1; k < total; ++k) {
    const int bit = std::countr_zero(k);
    mask ^= std::uint32_t{1} << bit;
    if (mask & (std::uint32_t{1} << bit)) {
      colsum += rows.row(bit).transpose();
    } else {
      colsum -= rows.row(bit).transpose();
    }
    double pos = 0.0;
    double neg = 0.0;
    for (int j = 0; j < n; ++j) {
      const double c = colsum[j];
      if (c > 0.0) pos += c; else neg -= c;
    }
    if (pos > best) {
      best = pos;
      best_mask = mask;
      best_sign = 1;
    }
    if (neg > best) {
      best = neg;
      best_mask = mask;
      best_sign = -1;
    }
  }
  // Recompute sums for the winning row set without accumulated round-off.
  std::vector<char> in_u(n, 0);
  for (int i = 0; i < n; ++i) in_u[i] = (best_mask >> i) & 1u;
  std::vector<char> in_v(n, 0);
  for (int j = 0; j < n; ++j) {
    double c = 0.0;
    for (int i = 0; i < n; ++i)
      if (in_u[i]) c += x(i, j);
    in_v[j] = best_sign * c > 0.0;
  }
  out.witness.rows = indices_of(in_u);
  out.witness.cols = indices_of(in_v);
  out.witness.sign = best_sign;
  out.witness.value = std::abs(evaluate_witness(x, out.witness));
  out.value = out.witness.value;
  return out;
}

CutNormResult cut_norm_local_search(const Eigen::MatrixXd& x, int restarts, Rng& rng) {
  require_square(x, "cut_norm_local_search");
  if (restarts < 1) throw InputError("cut_norm_local_search: restarts must be positive");
  const Eigen::Index n = x.rows();
  CutNormResult out;
  if (n == 0) return out;
  const Eigen::MatrixXd xt = x.transpose();
  std::bernoulli_distribution coin(0.5);
  Eigen::VectorXd u(n);
  Eigen::VectorXd v(n);
  double best = -1.0;
  Eigen::VectorXd best_u;
  Eigen::VectorXd best_v;
  int best_sign = 1;
  for (int r = 0; r < restarts; ++r) {
    Eigen::VectorXd start(n);
    for (Eigen::Index i = 0; i < n; ++i) start[i] = coin(rng) ? 1.0 : 0.0;
    for (int sign : {1, -1}) {
      u = start;
      double prev = -1.0;
      for (int iter = 0; iter < 1000; ++iter) {
        const Eigen::VectorXd cols = sign * (xt * u);
        v = (cols.array() > 0.0).cast<double>();
        const Eigen::VectorXd rws = sign * (x * v);
        u = (rws.array() > 0.0).cast<double>();
        const double val = (rws.array() * u.array()).sum();
        if (val <= prev) break;
        prev = val;
      }
      const double val = sign * u.dot(x * v);
      if (val > best) {
        best = val;
        best_u = u;
        best_v = v;
        best_sign = sign;
      }
    }
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (best_u[i] > 0.5) out.witness.rows.push_back(static_cast<int>(i));
    if (best_v[i] > 0.5) out.witness.cols.push_back(static_cast<int>(i));
  }
  out.witness.sign = best_sign;
  out.witness.value = std::abs(evaluate_witness(x, out.witness));
  out.value = out.witness.value;
  return out;
}

CutNormResult cut_norm(const Eigen::MatrixXd& x, const CutOptions& options) {
  if (x.rows() <= options.exact_limit && x.rows() <= kExactCutLimit) return cut_norm_exact(x);
  Rng rng(options.seed);
  return cut_norm_local_search(x, options.restarts, rng);
}

std::string witness_json(const CutNormResult& r) {
  nlohmann::ordered_json j;
  j["value"] = r.value;
  j["exact"] = r.exact;
  j["sign"] = r.witness.sign;
  j["rows"] = r.witness.rows;
  j["cols"] = r.witness.cols;
  return j.dump();
}

Eigen::MatrixXd log_transform(const Eigen::MatrixXd& m, double d) {
  if (!(d > 0.0 && d <= 1.0)) throw InputError("log_transform: d must lie in (0, 1]");
  require_unit_range(m, "log_transform");
  return (-(-(1.0 - d) * m.array()).log1p()).matrix();
}

Eigen::MatrixXd log_transform_zero(const Eigen::MatrixXd& m) {
  require_unit_range(m, "log_transform_zero");
  require_below_one_offdiag(m, "log_transform_zero");
  Eigen::MatrixXd out = offdiag(m);
  return (-(-out.array()).log1p()).matrix();
}

DistanceResult log_cut_distance_zero_log(const Eigen::MatrixXd& p_log, const Eigen::MatrixXd& q_log,
                                         const CutOptions& options) {
  require_same_shape(p_log, q_log);
  DistanceResult r;
  r.cut = cut_norm(offdiag(p_log - q_log), options);
  r.value = r.cut.value;
  return r;
}

DistanceResult log_cut_distance_zero(const Eigen::MatrixXd& p, const Eigen::MatrixXd& q,
                                     const CutOptions& options) {
  require_same_shape(p, q);
  return log_cut_distance_zero_log(log_transform_zero(p), log_transform_zero(q), options);
}

namespace {

// Minimizes objective(t) + 2^t over t = log2 d in [lo, hi] by golden section.
template <typename Fn>
std::pair<double, double> golden_log2(Fn&& objective, double lo, double hi, int iterations) {
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo;
  double b = hi;
  double c = b - phi * (b - a);
  double d = a + phi * (b - a);
  double fc = objective(c);
  double fd = objective(d);
  for (int i = 0; i < iterations; ++i) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - phi * (b - a);
      fc = objective(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + phi * (b - a);
      fd = objective(d);
    }
  }
  return fc < fd ? std::pair{c, fc} : std::pair{d, fd};
}

constexpr int kGridDepth = 30;
constexpr int kGoldenIterations = 24;

}  // namespace

DistanceResult log_cut_distance_pa_log(const Eigen::MatrixXd& p_log, const Eigen::MatrixXd& a,
                                       const CutOptions& options, std::span<const double> extra_d) {
  require_same_shape(p_log, a);
  require_unit_range(a, "log_cut_distance_pa");
  const Eigen::MatrixXd base = offdiag(p_log);
  CutOptions scan = options;
  scan.restarts = std::max(1, options.grid_restarts);
  auto value_at = [&](double d, const CutOptions& opt) {
    return d + cut_norm(offdiag(base - log_transform(a, d)), opt).value;
  };

  double best_d = 1.0;
  double best = value_at(1.0, scan);
  int best_k = 0;
  for (int k = 1; k <= kGridDepth; ++k) {
    const double d = std::ldexp(1.0, -k);
    const double v = value_at(d, scan);
    if (v < best) {
      best = v;
      best_d = d;
      best_k = k;
    }
  }
  const auto [t, v] = golden_log2([&](double tt) { return value_at(std::exp2(tt), scan); },
                                  -std::min(best_k + 1, kGridDepth), -std::max(best_k - 1, 0),
                                  kGoldenIterations);
  if (v < best) {
    best = v;
    best_d = std::exp2(t);
  }
  for (double d : extra_d) {
    if (!(d > 0.0 && d <= 1.0)) throw InputError("log_cut_distance_pa: extra d outside (0, 1]");
    const double ve = value_at(d, scan);
    if (ve < best) {
      best = ve;
      best_d = d;
    }
  }
  DistanceResult r;
  r.d = best_d;
  r.cut = cut_norm(offdiag(base - log_transform(a, best_d)), options);
  r.value = best_d + r.cut.value;
  return r;
}

DistanceResult log_cut_distance_pa(const Eigen::MatrixXd& p, const Eigen::MatrixXd& a,
                                   const CutOptions& options, std::span<const double> extra_d) {
  require_same_shape(p, a);
  return log_cut_distance_pa_log(log_transform_zero(p), a, options, extra_d);
}

DistanceResult log_cut_distance_pq(const Eigen::MatrixXd& p, const Eigen::MatrixXd& q,
                                   const CutOptions& options) {
  require_same_shape(p, q);
  require_unit_range(p, "log_cut_distance_pq");
  require_unit_range(q, "log_cut_distance_pq");
  CutOptions scan = options;
  scan.restarts = std::max(1, options.grid_restarts);

  std::vector<Eigen::MatrixXd> p_t(kGridDepth + 1);
  std::vector<Eigen::MatrixXd> q_t(kGridDepth + 1);
  for (int k = 0; k <= kGridDepth; ++k) {
    p_t[k] = offdiag(log_transform(p, std::ldexp(1.0, -k)));
    q_t[k] = offdiag(log_transform(q, std::ldexp(1.0, -k)));
  }
  auto value_at = [&](double e, double d, const CutOptions& opt) {
    return e + d + cut_norm(offdiag(log_transform(p, e) - log_transform(q, d)), opt).value;
  };

  double best = std::numeric_limits<double>::infinity();
  int best_ke = 0;
  int best_kd = 0;
  for (int ke = 0; ke <= kGridDepth; ++ke) {
    for (int kd = 0; kd <= kGridDepth; ++kd) {
      const double v = std::ldexp(1.0, -ke) + std::ldexp(1.0, -kd) +
                       cut_norm(p_t[ke] - q_t[kd], scan).value;
      if (v < best) {
        best = v;
        best_ke = ke;
        best_kd = kd;
      }
    }
  }
  double te = -best_ke;
  double td = -best_kd;
  for (int pass = 0; pass < 2; ++pass) {
    const auto [ne, ve] = golden_log2([&](double t) { return value_at(std::exp2(t), std::exp2(td), scan); },
                                      std::max(te - 1.0, -double(kGridDepth)), std::min(te + 1.0, 0.0),
                                      kGoldenIterations);
    if (ve < best) {
      best = ve;
      te = ne;
    }
    const auto [nd, vd] = golden_log2([&](double t) { return value_at(std::exp2(te), std::exp2(t), scan); },
                                      std::max(td - 1.0, -double(kGridDepth)), std::min(td + 1.0, 0.0),
                                      kGoldenIterations);
    if (vd < best) {
      best = vd;
      td = nd;
    }
  }
  DistanceResult r;
  r.e = std::exp2(te);
  r.d = std::exp2(td);
  r.cut = cut_norm(offdiag(log_transform(p, r.e) - log_transform(q, r.d)), options);
  r.value = r.e + r.d + r.cut.value;
  return r;
}

DistanceResult cut_distance(const Eigen::MatrixXd& p, const Eigen::MatrixXd& q, const CutOptions& options) {
  require_same_shape(p, q);
  DistanceResult r;
  r.cut = cut_norm(offdiag(p - q), options);
  r.value = r.cut.value;
  return r;
}

double l2_distance(const Eigen::MatrixXd& p, const Eigen::MatrixXd& q, bool normalize) {
  if (p.rows() != q.rows() || p.cols() != q.cols()) throw InputError("l2_distance: shape mismatch");
  const double fro = (p - q).norm();
  return normalize && p.rows() > 0 ? fro / static_cast<double>(p.rows()) : fro;
}

double auc_roc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw InputError("auc_roc: scores and labels differ in length");
  const std::size_t n = scores.size();
  std::size_t pos = 0;
  for (int l : labels) {
    if (l != 0 && l != 1) throw InputError("auc_roc: labels must be 0 or 1");
    pos += l == 1;
  }
  const std::size_t neg = n - pos;
  if (pos == 0 || neg == 0) throw InputError("auc_roc: need at least one positive and one negative");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k)
      if (labels[order[k]] == 1) rank_sum += avg_rank;
    i = j + 1;
  }
  const double u = rank_sum - 0.5 * static_cast<double>(pos) * static_cast<double>(pos + 1);
  return u / (static_cast<double>(pos) * static_cast<double>(neg));
}

}  // namespace pieclam
