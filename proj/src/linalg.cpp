#include "tined/linalg.hpp"

#include <cmath>
#include <utility>

#include "tined/errors.hpp"

namespace tined {

std::string DenseMatrix::shape_str() const {
    return std::to_string(rows) + "x" + std::to_string(cols);
}

DenseMatrix DenseMatrix::identity(std::size_t n) {
    DenseMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
    return m;
}

DenseMatrix DenseMatrix::from_rows(std::size_t r, std::size_t c, std::vector<double> values) {
    if (values.size() != r * c)
        throw ShapeError("from_rows: got " + std::to_string(values.size()) + " values for " +
                         std::to_string(r) + "x" + std::to_string(c));
    DenseMatrix m;
    m.rows = r;
    m.cols = c;
    m.data = std::move(values);
    return m;
}

void check_finite(const DenseMatrix& m, const std::string& what) {
    for (double v : m.data)
        if (!std::isfinite(v)) throw ShapeError(what + ": non-finite entry");
}

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.cols != b.rows)
        throw ShapeError("matmul: incompatible shapes " + a.shape_str() + " times " + b.shape_str());
    DenseMatrix out(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* arow = a.row(i);
        double* orow = out.row(i);
        for (std::size_t k = 0; k < a.cols; ++k) {
            double aik = arow[k];
            if (aik == 0.0) continue;
            const double* brow = b.row(k);
            for (std::size_t j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
        }
    }
    return out;
}

DenseMatrix transpose(const DenseMatrix& m) {
    DenseMatrix out(m.cols, m.rows);
    for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t j = 0; j < m.cols; ++j) out.at(j, i) = m.at(i, j);
    return out;
}

DenseMatrix add(const DenseMatrix& a, const DenseMatrix& b) {
    if (!a.same_shape(b))
        throw ShapeError("add: shapes " + a.shape_str() + " vs " + b.shape_str());
    DenseMatrix out = a;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
    return out;
}

DenseMatrix sub(const DenseMatrix& a, const DenseMatrix& b) {
    if (!a.same_shape(b))
        throw ShapeError("sub: shapes " + a.shape_str() + " vs " + b.shape_str());
    DenseMatrix out = a;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b.data[i];
    return out;
}

DenseMatrix scale(const DenseMatrix& a, double c) {
    DenseMatrix out = a;
    for (double& v : out.data) v *= c;
    return out;
}

double frobenius_norm(const DenseMatrix& m) {
    double s = 0.0;
    for (double v : m.data) s += v * v;
    return std::sqrt(s);
}

DenseMatrix least_squares(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.rows < a.cols)
        throw ShapeError("least_squares: need rows >= cols, got " + a.shape_str());
    if (a.rows != b.rows)
        throw ShapeError("least_squares: row mismatch " + a.shape_str() + " vs " + b.shape_str());

    const std::size_t m = a.rows, n = a.cols;
    DenseMatrix r = a;       // becomes R in place
    DenseMatrix qtb = b;     // accumulates Qᵀb

    // Householder QR applied column by column; reflectors are applied to qtb
    // immediately instead of forming Q.
    for (std::size_t k = 0; k < n; ++k) {
        double norm = 0.0;
        for (std::size_t i = k; i < m; ++i) norm += r.at(i, k) * r.at(i, k);
        norm = std::sqrt(norm);
        if (norm == 0.0) continue;  // column already zero below the diagonal; rank check catches it
        double alpha = r.at(k, k) >= 0.0 ? -norm : norm;
        std::vector<double> v(m - k);
        v[0] = r.at(k, k) - alpha;
        for (std::size_t i = k + 1; i < m; ++i) v[i - k] = r.at(i, k);
        double vnorm2 = 0.0;
        for (double x : v) vnorm2 += x * x;
        if (vnorm2 == 0.0) continue;

        for (std::size_t j = k; j < n; ++j) {
            double dot = 0.0;
            for (std::size_t i = k; i < m; ++i) dot += v[i - k] * r.at(i, j);
            double f = 2.0 * dot / vnorm2;
            for (std::size_t i = k; i < m; ++i) r.at(i, j) -= f * v[i - k];
        }
        for (std::size_t j = 0; j < qtb.cols; ++j) {
            double dot = 0.0;
            for (std::size_t i = k; i < m; ++i) dot += v[i - k] * qtb.at(i, j);
            double f = 2.0 * dot / vnorm2;
            for (std::size_t i = k; i < m; ++i) qtb.at(i, j) -= f * v[i - k];
        }
    }

    double max_diag = 0.0, min_diag = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        double d = std::fabs(r.at(k, k));
        if (k == 0 || d > max_diag) max_diag = d;
        if (k == 0 || d < min_diag) min_diag = d;
    }
    if (max_diag == 0.0 || min_diag < 1e-10 * max_diag) {
        std::size_t est = 0;
        for (std::size_t k = 0; k < n; ++k)
            if (std::fabs(r.at(k, k)) >= 1e-10 * max_diag && max_diag > 0.0) ++est;
        throw RankError("least_squares: rank-deficient system, estimated rank " +
                            std::to_string(est) + " of " + std::to_string(n),
                        est);
    }

    // Back substitution on R W = (Qᵀb)[0:n].
    DenseMatrix w(n, b.cols);
    for (std::size_t j = 0; j < b.cols; ++j) {
        for (std::size_t ii = n; ii-- > 0;) {
            double s = qtb.at(ii, j);
            for (std::size_t k2 = ii + 1; k2 < n; ++k2) s -= r.at(ii, k2) * w.at(k2, j);
            w.at(ii, j) = s / r.at(ii, ii);
        }
    }
    return w;
}

namespace {

double power_iteration(const DenseMatrix& m, std::vector<double> v, double tol,
                       std::size_t max_iter, bool& converged) {
    const std::size_t n = m.rows;
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;

    double lambda = 0.0;
    std::vector<double> mv(n);
    converged = false;
    for (std::size_t it = 0; it < max_iter; ++it) {
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            const double* row = m.row(i);
            for (std::size_t j = 0; j < n; ++j) s += row[j] * v[j];
            mv[i] = s;
        }
        double rayleigh = 0.0;
        for (std::size_t i = 0; i < n; ++i) rayleigh += v[i] * mv[i];
        double mvnorm = 0.0;
        for (double x : mv) mvnorm += x * x;
        mvnorm = std::sqrt(mvnorm);
        if (mvnorm == 0.0) {
            converged = true;
            return 0.0;  // v is in the kernel; the perturbed start decides
        }
        for (std::size_t i = 0; i < n; ++i) v[i] = mv[i] / mvnorm;
        if (it > 0 && std::fabs(rayleigh - lambda) <= tol) {
            converged = true;
            return rayleigh;
        }
        lambda = rayleigh;
    }
    return lambda;
}

}  // namespace

double lambda_max_symmetric(const DenseMatrix& m, double tol, std::size_t max_iter) {
    if (m.rows != m.cols)
        throw ShapeError("lambda_max_symmetric: matrix not square, " + m.shape_str());
    for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t j = i + 1; j < m.cols; ++j)
            if (std::fabs(m.at(i, j) - m.at(j, i)) > 1e-12)
                throw ShapeError("lambda_max_symmetric: matrix not symmetric at (" +
                                 std::to_string(i) + "," + std::to_string(j) + ")");
    const std::size_t n = m.rows;
    if (n == 0) return 0.0;

    bool all_zero = true;
    for (double v : m.data)
        if (v != 0.0) { all_zero = false; break; }
    if (all_zero) return 0.0;

    std::vector<double> ones(n, 1.0);
    bool conv_a = false, conv_b = false;
    double la = power_iteration(m, ones, tol, max_iter, conv_a);
    std::vector<double> perturbed(n, 1.0);
    perturbed[0] += 1e-6;
    double lb = power_iteration(m, perturbed, tol, max_iter, conv_b);
    double best = std::max(la, lb);
    if (!conv_a && !conv_b)
        throw ConvergenceError("lambda_max_symmetric: no convergence within " +
                                   std::to_string(max_iter) + " iterations, last estimate " +
                                   std::to_string(best),
                               best);
    if (!conv_a) return lb;
    if (!conv_b) return la;
    return best;
}

}  // namespace tined
