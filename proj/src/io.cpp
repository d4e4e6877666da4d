#include "pieclam/io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "pieclam/errors.hpp"

namespace pieclam {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string where(const std::string& source, int line) {
  return source + ":" + std::to_string(line) + ": ";
}

template <typename T>
bool parse_number(const std::string& token, T& out) {
  const char* first = token.data();
  const char* last = first + token.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

}  // namespace

std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << text;
}

Graph parse_edge_list(const std::string& text, std::optional<int> num_nodes,
                      const std::string& source) {
  std::istringstream in(text);
  std::string raw;
  std::vector<std::pair<int, int>> pairs;
  std::optional<int> declared;
  int max_index = -1;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = raw;
    const auto hash = line.find('#');
    if (hash != std::string::npos) {
      std::istringstream comment(line.substr(hash + 1));
      std::string key;
      std::string value;
      if (comment >> key >> value && key == "nodes") {
        int n = 0;
        if (!parse_number(value, n) || n < 0) {
          throw InputError(where(source, line_no) + "invalid node count '" + value + "'");
        }
        declared = n;
      }
      line = line.substr(0, hash);
    }
    std::istringstream fields(line);
    std::vector<std::string> tokens;
    for (std::string tok; fields >> tok;) tokens.push_back(tok);
    if (tokens.empty()) continue;
    if (tokens.size() != 2) {
      throw InputError(where(source, line_no) + "expected two node indices, got " +
                       std::to_string(tokens.size()) + " fields");
    }
    int u = 0;
    int v = 0;
    if (!parse_number(tokens[0], u) || !parse_number(tokens[1], v)) {
      throw InputError(where(source, line_no) + "node indices must be integers: '" + trim(raw) + "'");
    }
    if (u < 0 || v < 0) throw InputError(where(source, line_no) + "negative node index");
    const int limit = num_nodes ? *num_nodes : (declared ? *declared : -1);
    if (limit >= 0 && (u >= limit || v >= limit)) {
      throw InputError(where(source, line_no) + "node index exceeds node count " + std::to_string(limit));
    }
    max_index = std::max({max_index, u, v});
    pairs.emplace_back(u, v);
  }
  const int n = num_nodes ? *num_nodes : (declared ? *declared : max_index + 1);
  if (max_index >= n) throw InputError(source + ": node index exceeds node count");
  return build_graph(n, pairs);
}

Graph read_edge_list(const std::filesystem::path& path, std::optional<int> num_nodes) {
  return parse_edge_list(read_text_file(path), num_nodes, path.string());
}

void write_edge_list(const Graph& g, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "# nodes " << g.num_nodes() << "\n";
  for (const Edge& e : g.edges()) out << e.u << " " << e.v << "\n";
  write_text_file(path, out.str());
}

Eigen::MatrixXd read_matrix_csv(const std::filesystem::path& path) {
  std::istringstream in(read_text_file(path));
  std::vector<std::vector<double>> rows;
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> row;
    std::istringstream fields(line);
    for (std::string cell; std::getline(fields, cell, ',');) {
      double x = 0.0;
      if (!parse_number(trim(cell), x)) {
        throw InputError(where(path.string(), line_no) + "not a number: '" + trim(cell) + "'");
      }
      row.push_back(x);
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw InputError(where(path.string(), line_no) + "row has " + std::to_string(row.size()) +
                       " columns, expected " + std::to_string(rows.front().size()));
    }
    rows.push_back(std::move(row));
  }
  const Eigen::Index cols = rows.empty() ? 0 : static_cast<Eigen::Index>(rows.front().size());
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), cols);
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rows[r][c];
  return m;
}

void write_matrix_csv(const Eigen::MatrixXd& m, const std::filesystem::path& path) {
  std::ostringstream out;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c) out << ",";
      out << format_double(m(r, c));
    }
    out << "\n";
  }
  write_text_file(path, out.str());
}

std::vector<int> read_labels_csv(const std::filesystem::path& path) {
  const Eigen::MatrixXd m = read_matrix_csv(path);
  if (m.cols() != 1) throw InputError(path.string() + ": labels must be a single column");
  std::vector<int> labels(m.rows());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    if (m(i, 0) != 0.0 && m(i, 0) != 1.0) {
      throw InputError(path.string() + ": label on row " + std::to_string(i + 1) + " is not 0 or 1");
    }
    labels[i] = static_cast<int>(m(i, 0));
  }
  return labels;
}

void write_labels_csv(const std::vector<int>& labels, const std::filesystem::path& path) {
  std::ostringstream out;
  for (int l : labels) out << l << "\n";
  write_text_file(path, out.str());
}

void save_affiliation(const AffiliationMatrix& f, const std::filesystem::path& csv_path,
                      const std::filesystem::path& header_path) {
  write_matrix_csv(f.values(), csv_path);
  write_affiliation_header(f, header_path);
}

void write_affiliation_header(const AffiliationMatrix& f, const std::filesystem::path& header_path) {
  nlohmann::ordered_json h;
  h["kind"] = f.kind().name();
  h["C"] = f.kind().communities;
  h["N"] = f.num_nodes();
  h["dim"] = f.kind().dim();
  write_text_file(header_path, h.dump(2) + "\n");
}

AffiliationMatrix load_affiliation(const std::filesystem::path& csv_path,
                                   const std::filesystem::path& header_path) {
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(read_text_file(header_path));
  } catch (const nlohmann::json::exception& e) {
    throw InputError(header_path.string() + ": invalid JSON header: " + e.what());
  }
  const std::string kind_name = h.value("kind", "");
  const int c = h.value("C", 0);
  ModelKind kind;
  if (kind_name == "lorentz") {
    kind = ModelKind::lorentz(c);
  } else if (kind_name == "euclidean") {
    kind = ModelKind::euclidean(c);
  } else {
    throw InputError(header_path.string() + ": unknown kind '" + kind_name + "'");
  }
  const Eigen::MatrixXd m = read_matrix_csv(csv_path);
  if (m.rows() != h.value("N", -1) || m.cols() != kind.dim()) {
    throw InputError(csv_path.string() + ": matrix shape does not match its header");
  }
  return AffiliationMatrix(kind, RowMatrix(m));
}

void write_trace_csv(const std::vector<TraceRow>& rows, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "phase,step,loss\n";
  for (const TraceRow& r : rows) out << r.phase << "," << r.step << "," << format_double(r.loss) << "\n";
  write_text_file(path, out.str());
}

}  // namespace pieclam
