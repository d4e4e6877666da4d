#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "cli_common.hpp"
#include "pieclam/anomaly.hpp"
#include "pieclam/errors.hpp"
#include "pieclam/io.hpp"
#include "pieclam/metrics.hpp"
#include "pieclam/svg.hpp"

namespace pieclam::cli {

namespace fs = std::filesystem;

Context::Context(std::string command, Json config) : command_(std::move(command)), config_(std::move(config)) {
  out_ = config_.at("out").get<std::string>();
  std::stringstream list(config_.at("format").get<std::string>());
  for (std::string f; std::getline(list, f, ',');) {
    if (f.empty()) continue;
    if (f != "csv" && f != "json" && f != "svg") throw InputError("unknown output format '" + f + "'");
    formats_.insert(f);
  }
  std::error_code ec;
  fs::create_directories(out_, ec);
  if (ec) throw InputError("cannot create output directory " + out_.string() + ": " + ec.message());
  Json echo;
  echo["command"] = command_;
  for (const auto& [k, v] : config_.items()) echo[k] = v;
  write_text_file(out_path("config.json"), echo.dump(2) + "\n");
}

fs::path Context::out_path(const std::string& name) const { return out_ / name; }

void Context::write_csv_matrix(const std::string& name, const Eigen::MatrixXd& m) const {
  if (wants("csv")) write_matrix_csv(m, out_path(name));
}

void Context::write_text(const std::string& format, const std::string& name, const std::string& text) const {
  if (wants(format)) write_text_file(out_path(name), text);
}

void Context::write_json(const std::string& name, const Json& j) const { write_text("json", name, j.dump(2) + "\n"); }

void Context::write_svg(const std::string& name, const std::string& svg) const { write_text("svg", name, svg); }

Json common_defaults() { return {{"seed", 0}, {"out", "out"}, {"format", "csv,json,svg"}}; }

Json fit_defaults() {
  return {{"model", "ieclam"}, {"communities", 0}, {"iterations", 0}, {"learning-rate", 0.0},
          {"eps-log", kDefaultLogClamp}};
}

Json schedule_defaults() {
  return {{"schedule", "standard"},   {"rounds", 0},          {"f-steps", 0},
          {"f-learning-rate", 0.0},   {"f-noise", -1.0},      {"prior-steps", 0},
          {"prior-learning-rate", 0.0}, {"prior-noise", -1.0}, {"halving", "preset"},
          {"prior-optimizer", "adam"}, {"flow-blocks", 6},     {"flow-width", 64},
          {"flow-layers", 2}};
}

namespace {

Json merged(std::initializer_list<Json> parts) {
  Json out = Json::object();
  for (const Json& p : parts)
    for (const auto& [k, v] : p.items()) out[k] = v;
  return out;
}

}  // namespace

ModelChoice model_choice(const std::string& name, int communities) {
  ModelChoice c;
  Signature sig;
  if (name == "ieclam" || name == "pieclam") {
    sig = Signature::Lorentz;
  } else if (name == "bigclam" || name == "pclam") {
    sig = Signature::Euclidean;
  } else {
    throw InputError("unknown model '" + name + "' (expected ieclam, bigclam, pieclam or pclam)");
  }
  c.with_prior = name == "pieclam" || name == "pclam";
  const int width = communities > 0 ? communities : default_model_kind(sig).communities;
  c.kind = sig == Signature::Lorentz ? ModelKind::lorentz(width) : ModelKind::euclidean(width);
  return c;
}

FitConfig fit_config(const Context& ctx) {
  const ModelChoice choice = model_choice(ctx.get<std::string>("model"), ctx.get<int>("communities"));
  FitConfig fc = default_fit_config(choice.kind.signature);
  if (ctx.get<int>("iterations") > 0) fc.iterations = ctx.get<int>("iterations");
  if (ctx.get<double>("learning-rate") > 0.0) fc.learning_rate = ctx.get<double>("learning-rate");
  fc.eps_log = ctx.get<double>("eps-log");
  fc.seed = ctx.seed();
  fc.validate();
  return fc;
}

Schedule schedule_config(const Context& ctx) {
  Schedule s = schedule_preset(ctx.get<std::string>("schedule"));
  if (ctx.get<int>("rounds") > 0) s.rounds = ctx.get<int>("rounds");
  for (Phase& p : s.phases) {
    const bool f = p.target == PhaseTarget::Affiliations;
    const std::string pre = f ? "f-" : "prior-";
    if (ctx.get<int>(pre + "steps") > 0) p.steps = ctx.get<int>(pre + "steps");
    if (ctx.get<double>(pre + "learning-rate") > 0.0) p.learning_rate = ctx.get<double>(pre + "learning-rate");
    if (ctx.get<double>(pre + "noise") >= 0.0) p.noise_amplitude = ctx.get<double>(pre + "noise");
  }
  const std::string halving = ctx.get<std::string>("halving");
  if (halving == "on") {
    s.halve_rates = s.halve_noise = true;
  } else if (halving == "off") {
    s.halve_rates = s.halve_noise = false;
  } else if (halving != "preset") {
    throw InputError("halving must be preset, on or off");
  }
  s.validate();
  return s;
}

FlowArchitecture flow_architecture(const Context& ctx) {
  FlowArchitecture a;
  a.num_blocks = ctx.get<int>("flow-blocks");
  a.hidden_width = ctx.get<int>("flow-width");
  a.hidden_layers = ctx.get<int>("flow-layers");
  return a;
}

namespace {

PriorOptimizer prior_optimizer(const Context& ctx) {
  const std::string name = ctx.get<std::string>("prior-optimizer");
  if (name == "adam") return PriorOptimizer::Adam;
  if (name == "sgd") return PriorOptimizer::GradientAscent;
  throw InputError("prior-optimizer must be adam or sgd");
}

}  // namespace

Graph load_graph(const Context& ctx, const std::string& graph_key, const std::string& features_key,
                 const std::string& labels_key) {
  const std::string path = ctx.path(graph_key);
  if (path.empty()) throw InputError("--" + graph_key + " is required");
  Graph g = read_edge_list(path);
  if (!features_key.empty() && !ctx.path(features_key).empty()) {
    Eigen::MatrixXd x = read_matrix_csv(ctx.path(features_key));
    if (x.rows() != g.num_nodes()) throw InputError("feature rows do not match the node count");
    g = g.with_features(std::move(x));
  }
  if (!labels_key.empty() && !ctx.path(labels_key).empty()) {
    std::vector<int> labels = read_labels_csv(ctx.path(labels_key));
    if (static_cast<int>(labels.size()) != g.num_nodes()) throw InputError("label rows do not match the node count");
    g = g.with_labels(std::move(labels));
  }
  return g;
}

std::vector<int> order_by_class(const std::vector<int>& classes) {
  std::vector<int> order(classes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return classes[a] < classes[b]; });
  return order;
}

Eigen::MatrixXd reorder(const Eigen::MatrixXd& m, const std::vector<int>& order) {
  const Eigen::Index n = static_cast<Eigen::Index>(order.size());
  Eigen::MatrixXd out(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) out(i, j) = m(order[i], order[j]);
  return out;
}

void write_affiliation_planes(const Context& ctx, const std::string& prefix, const AffiliationMatrix& f,
                              const std::vector<int>& groups, int max_planes) {
  if (!ctx.wants("svg")) return;
  const ModelKind& kind = f.kind();
  const int planes = std::min(max_planes, kind.lorentz() ? kind.communities : kind.communities / 2);
  for (int c = 0; c < planes; ++c) {
    const int xi = kind.lorentz() ? c : 2 * c;
    const int yi = kind.lorentz() ? kind.communities + c : 2 * c + 1;
    std::vector<svg::Point> pts;
    for (int n = 0; n < f.num_nodes(); ++n) {
      pts.push_back({f.values()(n, xi), f.values()(n, yi), groups.empty() ? 0 : groups[n]});
    }
    const std::string xl = kind.lorentz() ? "t" + std::to_string(c) : "f" + std::to_string(xi);
    const std::string yl = kind.lorentz() ? "s" + std::to_string(c) : "f" + std::to_string(yi);
    ctx.write_svg(prefix + "_plane" + std::to_string(c) + ".svg",
                  svg::scatter(pts, prefix + " affiliations, channel " + std::to_string(c), xl, yl));
  }
}

Json trace_summary(const std::vector<double>& trace) {
  Json j;
  j["steps"] = trace.empty() ? 0 : trace.size() - 1;
  if (!trace.empty()) {
    j["initial"] = trace.front();
    j["final"] = trace.back();
    int drops = 0;
    for (std::size_t i = 1; i < trace.size(); ++i) drops += trace[i] < trace[i - 1];
    j["decreasing_steps"] = drops;
  }
  return j;
}

std::vector<TraceRow> fit_trace_rows(const std::vector<double>& trace) {
  std::vector<TraceRow> rows;
  for (std::size_t i = 0; i < trace.size(); ++i) rows.push_back({"F", static_cast<int>(i), -trace[i]});
  return rows;
}

namespace {

Graph preprocess(const Context& ctx, Graph g) {
  if (ctx.get<bool>("densify")) g = densify_two_hop(g);
  const int target = ctx.get<int>("reduce-features");
  if (target > 0 && g.features()) g = g.with_features(reduce_features(*g.features(), target, ctx.seed()));
  return g;
}

void save_prior_files(const Context& ctx, const FlowModel& prior) {
  if (ctx.wants("json")) save_flow(prior, ctx.out_path("prior.json"), ctx.out_path("prior.bin"));
}

Json run_fit(const Context& ctx) {
  const Graph g = preprocess(ctx, load_graph(ctx, "graph", "features", "labels"));
  const ModelChoice choice = model_choice(ctx.get<std::string>("model"), ctx.get<int>("communities"));
  Json summary;
  summary["nodes"] = g.num_nodes();
  summary["edges"] = g.num_edges();
  summary["kind"] = choice.kind.name();
  summary["communities"] = choice.kind.communities;

  std::vector<TraceRow> rows;
  std::vector<svg::Series> series;
  std::optional<AffiliationMatrix> f;
  if (!choice.with_prior) {
    const FitResult r = fit(g, choice.kind, fit_config(ctx));
    rows = fit_trace_rows(r.trace);
    summary["trace"] = trace_summary(r.trace);
    summary["log_likelihood"] = r.trace.back();
    svg::Series s{"log likelihood", {}, r.trace};
    for (std::size_t i = 0; i < r.trace.size(); ++i) s.x.push_back(static_cast<double>(i));
    series.push_back(std::move(s));
    f = r.affiliation;
  } else {
    AlternatingConfig ac;
    ac.seed = ctx.seed();
    ac.architecture = flow_architecture(ctx);
    ac.prior_optimizer = prior_optimizer(ctx);
    ac.eps_log = ctx.get<double>("eps-log");
    const AlternatingResult r = alternating_fit(g, choice.kind, schedule_config(ctx), ac);
    Json phases = Json::array();
    int offset = 0;
    for (std::size_t p = 0; p < r.phases.size(); ++p) {
      const PhaseTrace& pt = r.phases[p];
      const std::string label = std::string(phase_name(pt.target)) + std::to_string(p);
      svg::Series s{label, {}, {}};
      for (std::size_t i = 0; i < pt.values.size(); ++i) {
        rows.push_back({label, static_cast<int>(i), -pt.values[i]});
        s.x.push_back(offset + static_cast<double>(i));
        s.y.push_back(pt.values[i]);
      }
      offset += static_cast<int>(pt.values.size());
      series.push_back(std::move(s));
      Json pj = trace_summary(pt.values);
      pj["target"] = phase_name(pt.target);
      pj["round"] = pt.round;
      pj["learning_rate"] = pt.learning_rate;
      pj["noise_amplitude"] = pt.noise_amplitude;
      phases.push_back(std::move(pj));
    }
    summary["phases"] = std::move(phases);
    summary["joint_log_likelihood"] = joint_log_likelihood(r.affiliation, r.prior, g, ac.eps_log);
    summary["prior_dim"] = r.prior.dim();
    save_prior_files(ctx, r.prior);
    f = r.affiliation;
  }
  summary["feasible"] = f->is_feasible(1e-12);
  if (ctx.wants("csv")) {
    write_matrix_csv(f->values(), ctx.out_path("affiliation.csv"));
    write_trace_csv(rows, ctx.out_path("trace.csv"));
  }
  if (ctx.wants("json")) {
    write_affiliation_header(*f, ctx.out_path("affiliation.json"));
  }
  write_affiliation_planes(ctx, "fit", *f, g.labels() ? *g.labels() : std::vector<int>{});
  ctx.write_svg("trace.svg", svg::line_chart(series, "objective per step", "step", "objective"));
  ctx.write_json("summary.json", summary);
  return summary;
}

bool is_binary(const Eigen::MatrixXd& m) { return ((m.array() == 0.0) || (m.array() == 1.0)).all(); }

// A directory holding affiliation.csv/json, a CSV probability matrix, or an
// edge list read as its adjacency matrix.
Eigen::MatrixXd load_matrix_operand(const std::string& path) {
  if (path.empty()) throw InputError("both --target and --model are required");
  if (fs::is_directory(path)) {
    const fs::path dir(path);
    return decode(load_affiliation(dir / "affiliation.csv", dir / "affiliation.json")).values();
  }
  if (fs::path(path).extension() == ".csv") {
    // An affiliation CSV is recognized by its sibling JSON header.
    const fs::path header = fs::path(path).replace_extension(".json");
    if (fs::exists(header)) return decode(load_affiliation(path, header)).values();
    Eigen::MatrixXd m = read_matrix_csv(path);
    return ProbMatrix(m).values();
  }
  return read_edge_list(path).adjacency();
}

// Console copy of a metrics object: witness sets are replaced by their sizes.
Json compact_witnesses(Json j) {
  for (auto& [k, v] : j.items()) {
    if (!v.is_object()) continue;
    if (v.contains("witness")) {
      Json& w = v["witness"];
      w["rows"] = w["rows"].size();
      w["cols"] = w["cols"].size();
    }
  }
  return j;
}

Json distance_json(const DistanceResult& r, bool with_regularizers) {
  Json j;
  j["value"] = r.value;
  if (with_regularizers) {
    j["e"] = r.e;
    j["d"] = r.d;
  }
  j["exact_cut"] = r.cut.exact;
  j["witness"] = Json::parse(witness_json(r.cut));
  return j;
}

Json run_distance(const Context& ctx) {
  const Eigen::MatrixXd target = load_matrix_operand(ctx.path("target"));
  const Eigen::MatrixXd model = load_matrix_operand(ctx.path("model"));
  if (target.rows() != model.rows()) throw InputError("target and model have different node counts");
  CutOptions co;
  co.restarts = ctx.get<int>("restarts");
  co.grid_restarts = ctx.get<int>("grid-restarts");
  co.exact_limit = ctx.get<int>("exact-limit");
  co.seed = ctx.seed();
  const std::string which = ctx.get<std::string>("which");
  auto want = [&](const char* name) { return which == "all" || which == name; };
  if (!(want("zero") || want("pa") || want("pq") || want("cut") || want("l2"))) {
    throw InputError("which must be all, zero, pa, pq, cut or l2");
  }

  Json summary;
  summary["nodes"] = target.rows();
  summary["estimator"] = target.rows() <= std::min(co.exact_limit, kExactCutLimit) ? "exact" : "local-search";
  if (want("zero")) {
    if ((model.maxCoeff() < 1.0 || model.rows() < 2) && target.maxCoeff() < 1.0) {
      summary["log_cut_zero"] = distance_json(log_cut_distance_zero(model, target, co), false);
    } else {
      summary["log_cut_zero"] = nullptr;
      summary["log_cut_zero_note"] = "undefined: an operand has an entry equal to 1";
    }
  }
  if (want("pa") && is_binary(target) && model.maxCoeff() < 1.0) {
    summary["log_cut_pa"] = distance_json(log_cut_distance_pa(model, target, co), true);
  }
  if (want("pq")) summary["log_cut_pq"] = distance_json(log_cut_distance_pq(model, target, co), true);
  if (want("cut")) summary["cut"] = distance_json(cut_distance(model, target, co), false);
  if (want("l2")) {
    summary["l2"] = l2_distance(model, target, true);
    summary["frobenius"] = l2_distance(model, target, false);
  }
  ctx.write_json("metrics.json", summary);
  return compact_witnesses(summary);
}

Json run_anomaly(const Context& ctx) {
  const Graph g = load_graph(ctx, "graph", "features", "labels");
  const ModelChoice choice = model_choice(ctx.get<std::string>("model"), ctx.get<int>("communities"));
  AnomalyConfig ac;
  ac.criterion = parse_criterion(ctx.get<std::string>("criterion"));
  ac.with_prior = choice.with_prior;
  if (ac.criterion != Criterion::Star && !choice.with_prior) {
    throw InputError("criteria P and PS need a prior-bearing model (pieclam or pclam)");
  }
  ac.densify = ctx.get<bool>("densify");
  ac.reduce_features = ctx.get<int>("reduce-features") > 0;
  ac.feature_dim = std::max(1, ctx.get<int>("reduce-features"));
  ac.kind = choice.kind;
  ac.fit = fit_config(ctx);
  if (choice.with_prior) ac.schedule = schedule_config(ctx);
  ac.architecture = flow_architecture(ctx);
  if (ctx.get<double>("threshold") > 0.0) ac.threshold = ctx.get<double>("threshold");
  ac.seed = ctx.seed();
  const AnomalyResult r = detect(g, ac);

  std::ostringstream csv;
  csv << "node,score,isolated" << (r.flags ? ",flag" : "") << "\n";
  int isolated = 0;
  for (int n = 0; n < g.num_nodes(); ++n) {
    csv << n << "," << format_double(r.scores[n]) << "," << int(r.isolated[n]);
    if (r.flags) csv << "," << (*r.flags)[n];
    csv << "\n";
    isolated += r.isolated[n];
  }
  ctx.write_text("csv", "scores.csv", csv.str());
  Json summary;
  summary["criterion"] = criterion_name(ac.criterion);
  summary["nodes"] = g.num_nodes();
  summary["isolated_nodes"] = isolated;
  if (r.auc) summary["auc"] = *r.auc;
  if (r.flags) summary["flagged"] = std::accumulate(r.flags->begin(), r.flags->end(), 0);
  ctx.write_json("summary.json", summary);
  return summary;
}

Json run_generate(const Context& ctx) {
  if (ctx.path("prior").empty()) throw InputError("--prior is required");
  const FlowModel prior = load_flow(ctx.path("prior"));
  const std::string kind_name = ctx.get<std::string>("kind");
  const int c = ctx.get<int>("communities");
  ModelKind kind;
  if (kind_name == "lorentz") {
    kind = ModelKind::lorentz(c);
  } else if (kind_name == "euclidean") {
    kind = ModelKind::euclidean(c);
  } else {
    throw InputError("kind must be lorentz or euclidean");
  }
  Rng rng(ctx.seed());
  const Graph g = generate_graph(prior, kind, ctx.get<int>("nodes"), rng);
  if (ctx.wants("csv")) {
    write_edge_list(g, ctx.out_path("edges.txt"));
    if (g.features()) write_matrix_csv(*g.features(), ctx.out_path("features.csv"));
  }
  ctx.write_svg("adjacency.svg", svg::heatmap(g.adjacency(), "generated adjacency"));
  Json summary;
  summary["nodes"] = g.num_nodes();
  summary["edges"] = g.num_edges();
  const double pairs = 0.5 * g.num_nodes() * (g.num_nodes() - 1.0);
  summary["density"] = pairs > 0 ? static_cast<double>(g.num_edges()) / pairs : 0.0;
  ctx.write_json("summary.json", summary);
  return summary;
}

SbmSpec sbm_from_config(const Context& ctx) {
  const Json& cp = ctx.config().at("class-probs");
  const Json& bp = ctx.config().at("block-probs");
  if (cp.empty() && bp.empty()) return sbm_preset(ctx.get<std::string>("preset"));
  SbmSpec spec;
  spec.class_probs = cp.get<std::vector<double>>();
  const auto rows = bp.get<std::vector<std::vector<double>>>();
  spec.block_probs.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows.size()) throw InputError("block-probs must be a square matrix");
    for (std::size_t j = 0; j < rows.size(); ++j) spec.block_probs(i, j) = rows[i][j];
  }
  spec.validate();
  return spec;
}

Json run_sample_sbm(const Context& ctx) {
  const SbmSpec spec = sbm_from_config(ctx);
  Rng rng(ctx.seed());
  const SbmSample s = sample_sbm(spec, ctx.get<int>("nodes"), rng);
  const ProbMatrix p = sbm_prob_matrix(spec, s.classes);
  if (ctx.wants("csv")) {
    write_edge_list(s.graph, ctx.out_path("edges.txt"));
    write_labels_csv(s.classes, ctx.out_path("classes.csv"));
    write_matrix_csv(p.values(), ctx.out_path("prob_matrix.csv"));
  }
  const std::vector<int> order = order_by_class(s.classes);
  ctx.write_svg("adjacency.svg", svg::heatmap(reorder(s.graph.adjacency(), order), "SBM sample, nodes sorted by class"));
  ctx.write_svg("prob_matrix.svg", svg::heatmap(reorder(p.values(), order), "SBM edge probabilities"));
  Json summary;
  summary["nodes"] = s.graph.num_nodes();
  summary["edges"] = s.graph.num_edges();
  summary["classes"] = spec.num_classes();
  ctx.write_json("summary.json", summary);
  return summary;
}

}  // namespace

std::vector<CommandSpec> top_level_commands() {
  const Json io = {{"graph", ""}, {"features", ""}, {"labels", ""}};
  const Json prep = {{"densify", false}, {"reduce-features", 0}};
  std::vector<CommandSpec> cmds;
  cmds.push_back({"fit", "Fit an affiliation model (optionally with a flow prior) to an edge list",
                  merged({common_defaults(), io, fit_defaults(), schedule_defaults(), prep}), run_fit});
  cmds.push_back({"distance", "Compare a fitted model or matrix against a target graph or matrix",
                  merged({common_defaults(),
                          {{"target", ""}, {"model", ""}, {"which", "all"}, {"restarts", 200},
                           {"grid-restarts", 20}, {"exact-limit", kExactCutLimit}}}),
                  run_distance});
  cmds.push_back({"anomaly", "Score nodes by the S, P or PS criterion",
                  merged({common_defaults(), io, {{"criterion", "S"}, {"threshold", 0.0}}, fit_defaults(),
                          schedule_defaults(), prep}),
                  run_anomaly});
  cmds.push_back({"generate", "Sample a graph from a stored prior",
                  merged({common_defaults(),
                          {{"prior", ""}, {"kind", "lorentz"}, {"communities", 1}, {"nodes", 100}}}),
                  run_generate});
  cmds.push_back({"sample-sbm", "Sample a stochastic block model graph",
                  merged({common_defaults(),
                          {{"preset", "nine-block"}, {"nodes", 210}, {"class-probs", Json::array()},
                           {"block-probs", Json::array()}}}),
                  run_sample_sbm});
  return cmds;
}

}  // namespace pieclam::cli
