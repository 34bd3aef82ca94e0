#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace tined {

/// Dense row-major matrix of doubles. The universal carrier for features,
/// weights, embeddings and operators throughout the engine.
struct DenseMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    DenseMatrix() = default;
    DenseMatrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    const double* row(std::size_t r) const { return data.data() + r * cols; }
    double* row(std::size_t r) { return data.data() + r * cols; }

    bool same_shape(const DenseMatrix& o) const { return rows == o.rows && cols == o.cols; }
    std::string shape_str() const;

    static DenseMatrix identity(std::size_t n);
    /// Row-major initializer, e.g. from_rows(2, 2, {1, 2, 3, 4}).
    static DenseMatrix from_rows(std::size_t r, std::size_t c, std::vector<double> values);
};

/// Throws ShapeError if any entry is NaN or infinite.
void check_finite(const DenseMatrix& m, const std::string& what);

/// a (r×k) times b (k×c). Fixed left-to-right accumulation per output cell.
DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);

DenseMatrix transpose(const DenseMatrix& m);

DenseMatrix add(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix sub(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix scale(const DenseMatrix& a, double c);

double frobenius_norm(const DenseMatrix& m);

/// Minimizes ‖AW − B‖_F over W via Householder QR. Requires a.rows ≥ a.cols
/// and numerically full column rank: throws RankError when the smallest
/// R diagonal falls below 1e-10 times the largest.
DenseMatrix least_squares(const DenseMatrix& a, const DenseMatrix& b);

/// Largest eigenvalue of a symmetric matrix by power iteration with a
/// deterministic all-ones start and a perturbed second start (the all-ones
/// vector is an exact kernel vector of every combinatorial Laplacian, so a
/// single run from it can converge to a non-leading eigenvalue). Intended for
/// PSD Laplacian-like inputs. Throws ConvergenceError after max_iter
/// iterations without the Rayleigh quotient settling within tol.
double lambda_max_symmetric(const DenseMatrix& m, double tol = 1e-10, std::size_t max_iter = 100000);

}  // namespace tined
