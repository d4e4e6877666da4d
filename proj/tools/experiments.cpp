#include <cmath>
#include <numbers>
#include <sstream>

#include "cli_common.hpp"
#include "pieclam/errors.hpp"
#include "pieclam/io.hpp"
#include "pieclam/metrics.hpp"
#include "pieclam/svg.hpp"
#include "pieclam/universality.hpp"

namespace pieclam::cli {

namespace {

Json merged(std::initializer_list<Json> parts) {
  Json out = Json::object();
  for (const Json& p : parts)
    for (const auto& [k, v] : p.items()) out[k] = v;
  return out;
}

// Equal-weight pair of isotropic Gaussians at (+-separation, 0).
struct Mixture {
  double separation;
  double spread;

  Eigen::MatrixXd sample(int n, Rng& rng) const {
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::bernoulli_distribution side(0.5);
    Eigen::MatrixXd x(n, 2);
    for (int i = 0; i < n; ++i) {
      const double cx = side(rng) ? separation : -separation;
      x(i, 0) = cx + spread * gauss(rng);
      x(i, 1) = spread * gauss(rng);
    }
    return x;
  }

  double log_density(double x, double y) const {
    const double v = spread * spread;
    const double a = -((x - separation) * (x - separation) + y * y) / (2 * v);
    const double b = -((x + separation) * (x + separation) + y * y) / (2 * v);
    const double m = std::max(a, b);
    return m + std::log(0.5 * (std::exp(a - m) + std::exp(b - m))) - std::log(2 * std::numbers::pi * v);
  }
};

// Mean held-out log density under the maximum-likelihood Gaussian of train.
double gaussian_baseline(const Eigen::MatrixXd& train, const Eigen::MatrixXd& test) {
  const Eigen::RowVectorXd mu = train.colwise().mean();
  const Eigen::MatrixXd c = train.rowwise() - mu;
  const Eigen::MatrixXd cov = c.transpose() * c / static_cast<double>(train.rows());
  const Eigen::LLT<Eigen::MatrixXd> llt(cov);
  const double log_det = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const Eigen::MatrixXd tc = (test.rowwise() - mu).transpose();
  const Eigen::MatrixXd w = llt.matrixL().solve(tc);
  const double d = static_cast<double>(train.cols());
  return (-0.5 * w.colwise().squaredNorm().array() - 0.5 * d * std::log(2 * std::numbers::pi) - 0.5 * log_det)
      .mean();
}

Json run_prior_recon(const Context& ctx) {
  Rng rng(ctx.seed());
  const Mixture mix{ctx.get<double>("separation"), ctx.get<double>("spread")};
  const Eigen::MatrixXd train = mix.sample(ctx.get<int>("samples"), rng);
  const Eigen::MatrixXd test = mix.sample(ctx.get<int>("test-samples"), rng);

  FlowArchitecture arch = flow_architecture(ctx);
  arch.dim = 2;
  PriorTrainConfig pc;
  pc.steps = ctx.get<int>("steps");
  pc.learning_rate = ctx.get<double>("learning-rate");
  pc.noise_amplitude = ctx.get<double>("noise");
  const std::string opt = ctx.get<std::string>("prior-optimizer");
  if (opt != "adam" && opt != "sgd") throw InputError("prior-optimizer must be adam or sgd");
  pc.optimizer = opt == "adam" ? PriorOptimizer::Adam : PriorOptimizer::GradientAscent;
  const PriorTrainResult r = train_prior(FlowModel::random(arch, rng), train, pc, rng);

  const double extent = ctx.get<double>("extent");
  const int grid = ctx.get<int>("grid");
  if (grid < 2 || !(extent > 0.0)) throw InputError("grid must be >= 2 and extent positive");
  Eigen::MatrixXd pts(grid * grid, 2);
  for (int i = 0; i < grid; ++i)
    for (int j = 0; j < grid; ++j) {
      pts(i * grid + j, 0) = -extent + 2.0 * extent * j / (grid - 1);
      pts(i * grid + j, 1) = extent - 2.0 * extent * i / (grid - 1);
    }
  const Eigen::VectorXd learned_ld = log_density(r.model, pts);
  Eigen::MatrixXd learned(grid, grid);
  Eigen::MatrixXd truth(grid, grid);
  for (int i = 0; i < grid; ++i)
    for (int j = 0; j < grid; ++j) {
      learned(i, j) = std::exp(learned_ld[i * grid + j]);
      truth(i, j) = std::exp(mix.log_density(pts(i * grid + j, 0), pts(i * grid + j, 1)));
    }

  const double held_flow = log_density(r.model, test).mean();
  double held_true = 0.0;
  for (Eigen::Index i = 0; i < test.rows(); ++i) held_true += mix.log_density(test(i, 0), test(i, 1));
  held_true /= static_cast<double>(test.rows());
  const double held_gauss = gaussian_baseline(train, test);
  const double held_uniform = -std::log(4.0 * extent * extent);

  Json summary;
  summary["heldout_log_density"] = {{"flow", held_flow},
                                    {"true_mixture", held_true},
                                    {"single_gaussian", held_gauss},
                                    {"uniform_window", held_uniform}};
  summary["gap_over_gaussian"] = held_flow - held_gauss;
  summary["gap_over_uniform"] = held_flow - held_uniform;
  summary["trace"] = trace_summary(r.trace);

  if (ctx.wants("csv")) {
    write_matrix_csv(train, ctx.out_path("samples.csv"));
    write_matrix_csv(learned, ctx.out_path("density_learned.csv"));
    write_matrix_csv(truth, ctx.out_path("density_true.csv"));
    std::vector<TraceRow> rows;
    for (std::size_t i = 0; i < r.trace.size(); ++i) rows.push_back({"prior", static_cast<int>(i), -r.trace[i]});
    write_trace_csv(rows, ctx.out_path("trace.csv"));
  }
  ctx.write_svg("density_true.svg", svg::heatmap(truth, "ground-truth density"));
  ctx.write_svg("density_learned.svg", svg::heatmap(learned, "learned flow density"));
  if (ctx.wants("svg")) {
    Rng srng(ctx.seed() + 1);
    const Eigen::MatrixXd gen = sample(r.model, static_cast<int>(train.rows()), srng);
    std::vector<svg::Point> p;
    for (Eigen::Index i = 0; i < train.rows(); ++i) p.push_back({train(i, 0), train(i, 1), 0});
    for (Eigen::Index i = 0; i < gen.rows(); ++i) p.push_back({gen(i, 0), gen(i, 1), 1});
    ctx.write_svg("samples.svg", svg::scatter(p, "training (blue) and flow samples (red)", "x", "y"));
  }
  ctx.write_json("summary.json", summary);
  return summary;
}

struct SbmSetup {
  SbmSample sample;
  ProbMatrix target;
  std::vector<int> order;
};

SbmSetup sbm_setup(const Context& ctx) {
  Rng rng(ctx.seed());
  const SbmSpec spec = sbm_preset(ctx.get<std::string>("preset"));
  SbmSetup s{sample_sbm(spec, ctx.get<int>("nodes"), rng), {}, {}};
  s.target = sbm_prob_matrix(spec, s.sample.classes);
  s.order = order_by_class(s.sample.classes);
  return s;
}

std::vector<std::pair<std::string, ModelKind>> sbm_models(const Context& ctx) {
  return {{"lorentz", ModelKind::lorentz(ctx.get<int>("lorentz-communities"))},
          {"euclidean", ModelKind::euclidean(ctx.get<int>("euclidean-communities"))}};
}

FitConfig experiment_fit(const Context& ctx, int iterations) {
  FitConfig fc;
  fc.iterations = iterations;
  fc.learning_rate = ctx.get<double>("learning-rate");
  fc.seed = ctx.seed();
  return fc;
}

CutOptions experiment_cut(const Context& ctx) {
  CutOptions co;
  co.restarts = ctx.get<int>("restarts");
  co.seed = ctx.seed();
  return co;
}

Json run_sbm_recon(const Context& ctx) {
  const SbmSetup s = sbm_setup(ctx);
  const CutOptions co = experiment_cut(ctx);
  Json summary;
  summary["nodes"] = s.sample.graph.num_nodes();
  summary["edges"] = s.sample.graph.num_edges();
  std::ostringstream csv;
  csv << "model,communities,log_cut_zero,cut,l2\n";
  ctx.write_svg("adjacency.svg", svg::heatmap(reorder(s.sample.graph.adjacency(), s.order), "SBM sample"));
  ctx.write_svg("target.svg", svg::heatmap(reorder(s.target.values(), s.order), "SBM edge probabilities"));
  for (const auto& [name, kind] : sbm_models(ctx)) {
    const FitResult r = fit(s.sample.graph, kind, experiment_fit(ctx, ctx.get<int>("iterations")));
    const ProbMatrix p = decode(r.affiliation);
    const double d0 = log_cut_distance_zero(p.values(), s.target.values(), co).value;
    const double cut = cut_distance(p.values(), s.target.values(), co).value;
    const double l2 = l2_distance(p.values(), s.target.values());
    summary[name] = {{"communities", kind.communities}, {"dim", kind.dim()}, {"log_cut_zero", d0},
                     {"cut", cut}, {"l2", l2}, {"log_likelihood", r.trace.back()}};
    csv << name << "," << kind.communities << "," << format_double(d0) << "," << format_double(cut) << ","
        << format_double(l2) << "\n";
    ctx.write_svg(name + "_decoded.svg", svg::heatmap(reorder(p.values(), s.order), name + " reconstruction"));
    write_affiliation_planes(ctx, name, r.affiliation, s.sample.classes);
  }
  summary["lorentz_below_euclidean"] =
      summary["lorentz"]["log_cut_zero"].get<double>() < summary["euclidean"]["log_cut_zero"].get<double>();
  ctx.write_text("csv", "distances.csv", csv.str());
  ctx.write_json("summary.json", summary);
  return summary;
}

Json run_convergence(const Context& ctx) {
  const SbmSetup s = sbm_setup(ctx);
  const CutOptions co = experiment_cut(ctx);
  const int total = ctx.get<int>("iterations");
  const int every = ctx.get<int>("eval-every");
  if (every < 1) throw InputError("eval-every must be positive");
  std::ostringstream csv;
  csv << "model,iteration,log_cut_zero,cut,l2\n";
  std::vector<svg::Series> d0_series;
  std::vector<svg::Series> cut_series;
  std::vector<svg::Series> l2_series;
  Json summary;
  for (const auto& [name, kind] : sbm_models(ctx)) {
    svg::Series d0s{name, {}, {}};
    svg::Series cuts{name, {}, {}};
    svg::Series l2s{name, {}, {}};
    std::optional<AffiliationMatrix> f;
    Rng init_rng(ctx.seed());
    f = random_affiliation(kind, s.sample.graph.num_nodes(), init_rng);
    for (int done = 0;; done += every) {
      const ProbMatrix p = decode(*f);
      const double d0 = log_cut_distance_zero(p.values(), s.target.values(), co).value;
      const double cut = cut_distance(p.values(), s.target.values(), co).value;
      const double l2 = l2_distance(p.values(), s.target.values());
      csv << name << "," << done << "," << format_double(d0) << "," << format_double(cut) << ","
          << format_double(l2) << "\n";
      d0s.x.push_back(done);
      d0s.y.push_back(d0);
      cuts.x.push_back(done);
      cuts.y.push_back(cut);
      l2s.x.push_back(done);
      l2s.y.push_back(l2);
      if (done >= total) break;
      f = fit(s.sample.graph, kind, experiment_fit(ctx, std::min(every, total - done)), f).affiliation;
    }
    summary[name] = {{"final_log_cut_zero", d0s.y.back()}, {"final_cut", cuts.y.back()}, {"final_l2", l2s.y.back()}};
    d0_series.push_back(std::move(d0s));
    cut_series.push_back(std::move(cuts));
    l2_series.push_back(std::move(l2s));
  }
  ctx.write_text("csv", "curves.csv", csv.str());
  ctx.write_svg("log_cut_curve.svg", svg::line_chart(d0_series, "log cut distance to the SBM", "iteration", "D0"));
  ctx.write_svg("cut_curve.svg", svg::line_chart(cut_series, "cut distance to the SBM", "iteration", "cut"));
  ctx.write_svg("l2_curve.svg", svg::line_chart(l2_series, "l2 distance to the SBM", "iteration", "l2"));
  ctx.write_json("summary.json", summary);
  return summary;
}

Json run_bipartite(const Context& ctx) {
  const double a = ctx.get<double>("a");
  const int n = ctx.get<int>("nodes-per-side");
  const int seeds = ctx.get<int>("seeds");
  if (n < 1 || seeds < 1) throw InputError("nodes-per-side and seeds must be positive");
  const ProbMatrix target = bipartite_prob_matrix(n, a);
  const ModelKind kind = ModelKind::euclidean(ctx.get<int>("euclidean-communities"));
  Json summary;
  summary["a"] = a;
  summary["nodes_per_side"] = n;
  summary["bound"] = bipartite_lower_bound(a);
  Json runs = Json::array();
  double worst = std::numeric_limits<double>::infinity();
  std::ostringstream csv;
  csv << "seed,measured,four_block_average,side_mean_formula\n";
  for (int k = 0; k < seeds; ++k) {
    const std::uint64_t seed = ctx.seed() + static_cast<std::uint64_t>(k);
    Rng rng(seed);
    const Graph g = sample_bernoulli_graph(target, rng);
    FitConfig fc = experiment_fit(ctx, ctx.get<int>("iterations"));
    fc.seed = seed;
    const FitResult r = fit(g, kind, fc);
    const BipartiteSeparation sep = bipartite_separation(r.affiliation, n, a);
    worst = std::min(worst, sep.measured.value);
    runs.push_back({{"seed", seed},
                    {"measured", sep.measured.value},
                    {"exact", sep.measured.exact},
                    {"four_block_average", sep.four_block_average},
                    {"side_mean_formula", sep.side_mean_formula}});
    csv << seed << "," << format_double(sep.measured.value) << "," << format_double(sep.four_block_average) << ","
        << format_double(sep.side_mean_formula) << "\n";
    if (k == 0) ctx.write_svg("euclidean_decoded.svg", svg::heatmap(decode(r.affiliation).values(), "Euclidean fit"));
  }
  const AffiliationMatrix lorentz = encode_bipartite_ieclam(n, a / std::sqrt(2.0));
  const CutNormResult ld = bipartite_log_distance(lorentz, n, a);
  summary["euclidean_runs"] = std::move(runs);
  summary["euclidean_min_measured"] = worst;
  summary["lorentz_measured"] = ld.value;
  summary["bound_respected"] = worst >= summary["bound"].get<double>() - 1e-9;
  ctx.write_svg("target.svg", svg::heatmap(target.values(), "bipartite target"));
  ctx.write_svg("lorentz_decoded.svg", svg::heatmap(decode(lorentz).values(), "Lorentz encoding"));
  ctx.write_text("csv", "runs.csv", csv.str());
  ctx.write_json("summary.json", summary);
  return summary;
}

}  // namespace

std::vector<CommandSpec> experiment_commands() {
  const Json sbm = {{"preset", "nine-block"}, {"nodes", 210},         {"lorentz-communities", 2},
                    {"euclidean-communities", 4}, {"iterations", 2000}, {"learning-rate", 1e-3}};
  std::vector<CommandSpec> cmds;
  cmds.push_back({"prior-recon", "Train a flow on a known 2-D mixture and compare densities",
                  merged({common_defaults(),
                          {{"samples", 1000}, {"test-samples", 2000}, {"steps", 1500}, {"learning-rate", 3e-3},
                           {"noise", 0.0}, {"prior-optimizer", "adam"}, {"flow-blocks", 4}, {"flow-width", 32},
                           {"flow-layers", 2}, {"separation", 2.0}, {"spread", 0.5}, {"grid", 61},
                           {"extent", 4.0}}}),
                  run_prior_recon});
  cmds.push_back({"sbm-recon", "Fit Lorentz and Euclidean models to an SBM sample",
                  merged({common_defaults(), sbm, {{"restarts", 200}}}), run_sbm_recon});
  cmds.push_back({"convergence-curves", "Distance to the SBM as fitting proceeds",
                  merged({common_defaults(), sbm, {{"restarts", 50}, {"eval-every", 100}}}), run_convergence});
  cmds.push_back({"bipartite-counterexample", "Euclidean fits against the bipartite target",
                  merged({common_defaults(),
                          {{"a", 2.0}, {"nodes-per-side", 10}, {"seeds", 5}, {"euclidean-communities", 4},
                           {"iterations", 2000}, {"learning-rate", 1e-3}}}),
                  run_bipartite});
  return cmds;
}

}  // namespace pieclam::cli
