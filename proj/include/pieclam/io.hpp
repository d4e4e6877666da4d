#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pieclam/clam.hpp"
#include "pieclam/graph.hpp"

namespace pieclam {

/// Shortest-roundtrip-safe text form: 17 significant digits.
std::string format_double(double x);

/// Whitespace-separated "u v" pairs, 0-based, '#' starts a comment. A header
/// comment "# nodes N" fixes the node count; otherwise it is the largest
/// index plus one unless num_nodes is given. Errors carry the line number.
Graph read_edge_list(const std::filesystem::path& path, std::optional<int> num_nodes = std::nullopt);
Graph parse_edge_list(const std::string& text, std::optional<int> num_nodes = std::nullopt,
                      const std::string& source = "<string>");
void write_edge_list(const Graph& g, const std::filesystem::path& path);

/// Comma-separated numeric matrix, one row per line. Blank lines and '#'
/// comment lines are skipped.
Eigen::MatrixXd read_matrix_csv(const std::filesystem::path& path);
void write_matrix_csv(const Eigen::MatrixXd& m, const std::filesystem::path& path);

/// Single column of 0/1 flags.
std::vector<int> read_labels_csv(const std::filesystem::path& path);
void write_labels_csv(const std::vector<int>& labels, const std::filesystem::path& path);

/// Writes values to csv_path and {"kind","C","N","dim"} to header_path.
void save_affiliation(const AffiliationMatrix& f, const std::filesystem::path& csv_path,
                      const std::filesystem::path& header_path);
void write_affiliation_header(const AffiliationMatrix& f, const std::filesystem::path& header_path);
AffiliationMatrix load_affiliation(const std::filesystem::path& csv_path,
                                   const std::filesystem::path& header_path);

/// Loss trace as "phase,step,loss" rows.
struct TraceRow {
  std::string phase;
  int step = 0;
  double loss = 0.0;
};
void write_trace_csv(const std::vector<TraceRow>& rows, const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace pieclam
