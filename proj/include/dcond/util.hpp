#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <string>
#include <vector>

namespace dcond {

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

std::vector<double> to_std_vector(const Eigen::VectorXd& v);
Eigen::VectorXd to_eigen(const std::vector<double>& v);

/// max|a - b| / max(max|a|, max|b|, floor).
double relative_error(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double floor = 1e-12);

}  // namespace dcond
