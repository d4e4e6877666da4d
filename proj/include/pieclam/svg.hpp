#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace pieclam::svg {

/// Grayscale heatmap, dark = high. Values are scaled between the matrix
/// minimum and maximum.
std::string heatmap(const Eigen::MatrixXd& values, const std::string& title);

struct Point {
  double x = 0.0;
  double y = 0.0;
  int group = 0;
};

std::string scatter(const std::vector<Point>& points, const std::string& title, const std::string& x_label,
                    const std::string& y_label);

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

std::string line_chart(const std::vector<Series>& series, const std::string& title, const std::string& x_label,
                       const std::string& y_label);

}  // namespace pieclam::svg
