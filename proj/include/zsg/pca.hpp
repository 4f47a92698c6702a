#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "zsg/errors.hpp"
#include "zsg/tensor.hpp"
#include "zsg/textio.hpp"

namespace zsg {

// Projection onto the top-k principal axes of a sample.
struct PcaProjection {
  std::size_t dim = 0;
  std::size_t k = 0;
  std::vector<double> mean;                // dim
  std::vector<double> components;          // dim x k, row-major, orthonormal columns
  std::vector<double> explained_variance;  // k, non-increasing
  double total_variance = 0.0;             // trace of the sample covariance

  double component(std::size_t row, std::size_t col) const { return components[row * k + col]; }

  double explained_variance_ratio() const {
    double s = 0.0;
    for (double v : explained_variance) s += v;
    return total_variance > 0.0 ? s / total_variance : 0.0;
  }
};

// data is N x dim, row-major. Components are the top-k eigenvectors of the
// mean-centred sample covariance (divisor N-1); each is signed so that its
// largest-magnitude entry is positive.
inline PcaProjection pca_fit(std::span<const double> data, std::size_t n, std::size_t dim, std::size_t k) {
  if (data.size() != n * dim) throw DimensionError("pca_fit: data is not N x dim");
  if (n < 2) throw DimensionError("pca_fit needs at least 2 samples");
  if (k == 0 || k > std::min(n - 1, dim)) {
    throw DimensionError("pca_fit: k=" + std::to_string(k) + " must be in [1, " +
                         std::to_string(std::min(n - 1, dim)) + "]");
  }
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const RowMat> x(data.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  const Eigen::RowVectorXd mu = x.colwise().mean();
  const RowMat centred = x.rowwise() - mu;
  const Eigen::MatrixXd cov = (centred.transpose() * centred) / static_cast<double>(n - 1);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw NumericError("pca_fit: eigen decomposition failed");
  const Eigen::VectorXd& evals = solver.eigenvalues();  // ascending
  const Eigen::MatrixXd& evecs = solver.eigenvectors();

  const double trace = cov.trace();
  const double top = std::max(evals.maxCoeff(), 0.0);
  const double tol = std::max(top, trace) * 1e-12 * static_cast<double>(dim);
  std::size_t rank = 0;
  for (Eigen::Index i = 0; i < evals.size(); ++i) rank += evals[i] > tol ? 1 : 0;
  if (k > rank) {
    throw DimensionError("pca_fit: data has rank " + std::to_string(rank) + "; achievable k is at most " +
                         std::to_string(rank) + ", requested " + std::to_string(k));
  }

  PcaProjection p;
  p.dim = dim;
  p.k = k;
  p.total_variance = trace;
  p.mean.assign(mu.data(), mu.data() + dim);
  p.components.assign(dim * k, 0.0);
  p.explained_variance.resize(k);
  for (std::size_t c = 0; c < k; ++c) {
    const Eigen::Index src = static_cast<Eigen::Index>(dim - 1 - c);
    p.explained_variance[c] = std::max(evals[src], 0.0);
    Eigen::Index arg = 0;
    evecs.col(src).cwiseAbs().maxCoeff(&arg);
    const double sign = evecs(arg, src) < 0.0 ? -1.0 : 1.0;
    for (std::size_t r = 0; r < dim; ++r) p.components[r * k + c] = sign * evecs(static_cast<Eigen::Index>(r), src);
  }
  return p;
}

// (x - mean) . components
inline std::vector<double> pca_apply(const PcaProjection& p, std::span<const double> x) {
  if (x.size() != p.dim) {
    throw DimensionError("pca_apply: vector dim " + std::to_string(x.size()) + ", projection dim " +
                         std::to_string(p.dim));
  }
  std::vector<double> y(p.k, 0.0);
  for (std::size_t r = 0; r < p.dim; ++r) {
    const double centred = x[r] - p.mean[r];
    for (std::size_t c = 0; c < p.k; ++c) y[c] += centred * p.components[r * p.k + c];
  }
  return y;
}

// mean + y . components^T
inline std::vector<double> pca_reconstruct(const PcaProjection& p, std::span<const double> y) {
  if (y.size() != p.k) throw DimensionError("pca_reconstruct: expected " + std::to_string(p.k) + " coordinates");
  std::vector<double> x(p.mean);
  for (std::size_t r = 0; r < p.dim; ++r)
    for (std::size_t c = 0; c < p.k; ++c) x[r] += y[c] * p.components[r * p.k + c];
  return x;
}

inline void write_pca(std::ostream& out, const PcaProjection& p) {
  out << "pca " << p.dim << ' ' << p.k << ' ' << text::format_double(p.total_variance) << '\n';
  out << text::join_doubles(p.mean) << '\n';
  out << text::join_doubles(p.explained_variance) << '\n';
  for (std::size_t r = 0; r < p.dim; ++r) {
    out << text::join_doubles(std::span<const double>(p.components).subspan(r * p.k, p.k)) << '\n';
  }
}

inline PcaProjection read_pca(std::istream& in) {
  std::string line;
  auto next_fields = [&](const char* what) {
    if (!std::getline(in, line)) throw DataError(std::string("pca file truncated before ") + what);
    return text::split_ws(text::strip_cr(line));
  };
  auto head = next_fields("header");
  if (head.size() != 4 || head[0] != "pca") throw DataError("pca file: bad header");
  PcaProjection p;
  p.dim = text::parse_size(head[1], "pca header");
  p.k = text::parse_size(head[2], "pca header");
  p.total_variance = text::parse_double(head[3], "pca header");
  auto read_row = [&](std::size_t expected, const char* what) {
    auto f = next_fields(what);
    if (f.size() != expected) throw DataError(std::string("pca file: wrong width for ") + what);
    std::vector<double> v;
    for (auto t : f) v.push_back(text::parse_double(t, what));
    return v;
  };
  p.mean = read_row(p.dim, "mean");
  p.explained_variance = read_row(p.k, "variance");
  for (std::size_t r = 0; r < p.dim; ++r) {
    auto row = read_row(p.k, "components");
    p.components.insert(p.components.end(), row.begin(), row.end());
  }
  return p;
}

inline void save_pca(const std::filesystem::path& path, const PcaProjection& p) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  write_pca(out, p);
}

inline PcaProjection load_pca(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return read_pca(in);
}

}  // namespace zsg
