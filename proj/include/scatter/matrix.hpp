#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "scatter/common.hpp"

namespace scatter {

using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;
using RealVector = Eigen::VectorXd;
using Vec3 = Eigen::Vector3d;

inline bool all_finite(const ComplexMatrix& m) {
  return m.allFinite();
}

inline void require_finite(const ComplexMatrix& m, const char* context) {
  if (!all_finite(m)) {
    throw std::runtime_error(std::string("non-finite entries after ") + context);
  }
}

/// Text format: optional leading '#' comment lines, a "rows cols" header,
/// then one "i j re im" line per entry (0-based indices, row-major order,
/// 17 significant digits so values round-trip exactly).
inline void write_matrix(std::ostream& os, const ComplexMatrix& m,
                         const std::vector<std::string>& comments = {}) {
  for (const auto& c : comments) os << "# " << c << "\n";
  os << m.rows() << " " << m.cols() << "\n";
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      os << i << " " << j << " " << format_double(m(i, j).real()) << " "
         << format_double(m(i, j).imag()) << "\n";
    }
  }
}

inline void write_matrix_file(const std::string& path, const ComplexMatrix& m,
                              const std::vector<std::string>& comments = {}) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  write_matrix(os, m, comments);
}

struct MatrixFileHeader {
  std::optional<double> noise_level;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> comments;
};

inline ComplexMatrix read_matrix(std::istream& is, MatrixFileHeader* header = nullptr) {
  std::string line;
  Eigen::Index rows = -1, cols = -1;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::string body = line.substr(1);
      if (!body.empty() && body[0] == ' ') body.erase(0, 1);
      if (header) {
        header->comments.push_back(body);
        if (body.rfind("noise_level=", 0) == 0)
          header->noise_level = std::stod(body.substr(12));
        else if (body.rfind("seed=", 0) == 0)
          header->seed = std::stoull(body.substr(5));
      }
      continue;
    }
    std::istringstream hs(line);
    if (!(hs >> rows >> cols)) throw std::runtime_error("matrix file: bad header line");
    break;
  }
  if (rows < 0 || cols < 0) throw std::runtime_error("matrix file: missing header");
  ComplexMatrix m = ComplexMatrix::Zero(rows, cols);
  Eigen::Index i, j;
  double re, im;
  while (is >> i >> j >> re >> im) {
    if (i < 0 || i >= rows || j < 0 || j >= cols)
      throw std::runtime_error("matrix file: entry index out of range");
    m(i, j) = Complex(re, im);
  }
  return m;
}

inline ComplexMatrix read_matrix_file(const std::string& path, MatrixFileHeader* header = nullptr) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open for reading: " + path);
  return read_matrix(is, header);
}

}  // namespace scatter
