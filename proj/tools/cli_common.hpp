#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "pieclam/clam.hpp"
#include "pieclam/flow.hpp"
#include "pieclam/graph.hpp"
#include "pieclam/io.hpp"
#include "pieclam/trainer.hpp"

namespace pieclam::cli {

using Json = nlohmann::ordered_json;

/// Resolved settings and output selection for one command invocation.
class Context {
 public:
  Context(std::string command, Json config);

  const Json& config() const noexcept { return config_; }
  const std::string& command() const noexcept { return command_; }
  std::uint64_t seed() const { return config_.at("seed").get<std::uint64_t>(); }

  template <typename T>
  T get(const std::string& key) const {
    return config_.at(key).get<T>();
  }
  std::string path(const std::string& key) const { return get<std::string>(key); }

  bool wants(const std::string& format) const { return formats_.count(format) != 0; }
  std::filesystem::path out_path(const std::string& name) const;

  void write_csv_matrix(const std::string& name, const Eigen::MatrixXd& m) const;
  void write_text(const std::string& format, const std::string& name, const std::string& text) const;
  void write_json(const std::string& name, const Json& j) const;
  void write_svg(const std::string& name, const std::string& svg) const;

 private:
  std::string command_;
  Json config_;
  std::filesystem::path out_;
  std::set<std::string> formats_;
};

using Runner = std::function<Json(const Context&)>;

struct CommandSpec {
  std::string name;
  std::string description;
  /// Every setting with its default. Each key becomes a --key flag.
  Json defaults;
  Runner run;
};

std::vector<CommandSpec> top_level_commands();
std::vector<CommandSpec> experiment_commands();

// Shared settings helpers.
Json common_defaults();
Json fit_defaults();
Json schedule_defaults();

struct ModelChoice {
  ModelKind kind;
  bool with_prior = false;
};
/// ieclam, bigclam, pieclam or pclam, with communities <= 0 meaning the
/// model's default width.
ModelChoice model_choice(const std::string& name, int communities);
FitConfig fit_config(const Context& ctx);
Schedule schedule_config(const Context& ctx);
FlowArchitecture flow_architecture(const Context& ctx);

/// Reads an edge list and attaches optional features / labels.
Graph load_graph(const Context& ctx, const std::string& graph_key, const std::string& features_key = "",
                 const std::string& labels_key = "");

/// Index order grouping nodes by class, for block-sorted heatmaps.
std::vector<int> order_by_class(const std::vector<int>& classes);
Eigen::MatrixXd reorder(const Eigen::MatrixXd& m, const std::vector<int>& order);

/// Writes one (t^c, s^c) scatter per channel for Lorentz features or
/// consecutive coordinate pairs for Euclidean ones, at most max_planes.
void write_affiliation_planes(const Context& ctx, const std::string& prefix, const AffiliationMatrix& f,
                              const std::vector<int>& groups, int max_planes = 4);

Json trace_summary(const std::vector<double>& trace);
std::vector<TraceRow> fit_trace_rows(const std::vector<double>& trace);

}  // namespace pieclam::cli
