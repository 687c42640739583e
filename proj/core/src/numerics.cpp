#include "it2mpc/numerics.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <numeric>
#include <string>

#include "it2mpc/errors.hpp"

namespace it2mpc {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        if (r.size() != cols_) throw InvalidMatrix("ragged initializer for Matrix");
        data_.insert(data_.end(), r.begin(), r.end());
    }
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::column(std::span<const double> v) {
    Matrix m(v.size(), 1);
    std::copy(v.begin(), v.end(), m.data_.begin());
    return m;
}

Matrix Matrix::row(std::span<const double> v) {
    Matrix m(1, v.size());
    std::copy(v.begin(), v.end(), m.data_.begin());
    return m;
}

Matrix Matrix::diagonal(std::span<const double> d) {
    Matrix m(d.size(), d.size());
    for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
    return m;
}

Matrix Matrix::transpose() const {
    Matrix t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
        for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
    return t;
}

Matrix Matrix::block(std::size_t r0, std::size_t c0, std::size_t nr, std::size_t nc) const {
    assert(r0 + nr <= rows_ && c0 + nc <= cols_);
    Matrix b(nr, nc);
    for (std::size_t r = 0; r < nr; ++r)
        for (std::size_t c = 0; c < nc; ++c) b(r, c) = (*this)(r0 + r, c0 + c);
    return b;
}

void Matrix::set_block(std::size_t r0, std::size_t c0, const Matrix& b) {
    assert(r0 + b.rows() <= rows_ && c0 + b.cols() <= cols_);
    for (std::size_t r = 0; r < b.rows(); ++r)
        for (std::size_t c = 0; c < b.cols(); ++c) (*this)(r0 + r, c0 + c) = b(r, c);
}

Matrix& Matrix::operator+=(const Matrix& o) {
    if (rows_ != o.rows_ || cols_ != o.cols_) throw InvalidMatrix("dimension mismatch in +");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
}

Matrix& Matrix::operator-=(const Matrix& o) {
    if (rows_ != o.rows_ || cols_ != o.cols_) throw InvalidMatrix("dimension mismatch in -");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
}

Matrix& Matrix::operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
}

double Matrix::norm_inf() const {
    double best = 0.0;
    for (std::size_t r = 0; r < rows_; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < cols_; ++c) s += std::abs((*this)(r, c));
        best = std::max(best, s);
    }
    return best;
}

double Matrix::norm_fro() const {
    double s = 0.0;
    for (double v : data_) s += v * v;
    return std::sqrt(s);
}

double Matrix::max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
}

bool Matrix::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator-(Matrix a) { return a *= -1.0; }
Matrix operator*(double s, Matrix a) { return a *= s; }
Matrix operator*(Matrix a, double s) { return a *= s; }

Matrix operator*(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows())
        throw InvalidMatrix("dimension mismatch in *: " + std::to_string(a.rows()) + "x" +
                            std::to_string(a.cols()) + " by " + std::to_string(b.rows()) + "x" +
                            std::to_string(b.cols()));
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
        }
    return c;
}

Vector operator*(const Matrix& a, std::span<const double> x) {
    if (a.cols() != x.size()) throw InvalidMatrix("dimension mismatch in matrix-vector product");
    Vector y(a.rows(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < a.cols(); ++j) s += a(i, j) * x[j];
        y[i] = s;
    }
    return y;
}

double dot(std::span<const double> a, std::span<const double> b) {
    assert(a.size() == b.size());
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

Vector add(std::span<const double> a, std::span<const double> b) {
    assert(a.size() == b.size());
    Vector c(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) c[i] = a[i] + b[i];
    return c;
}

Vector scaled(std::span<const double> a, double s) {
    Vector c(a.begin(), a.end());
    for (double& v : c) v *= s;
    return c;
}

double quad_form(const Matrix& m, std::span<const double> x) {
    if (m.rows() != x.size() || m.cols() != x.size()) throw InvalidMatrix("quad_form dimension mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double r = 0.0;
        for (std::size_t j = 0; j < x.size(); ++j) r += m(i, j) * x[j];
        s += x[i] * r;
    }
    return s;
}

// ---------------------------------------------------------------------------

SymMatrix::SymMatrix(const Matrix& m) : m_(m) {
    if (m.rows() != m.cols()) throw InvalidMatrix("SymMatrix requires a square matrix");
    if (m.rows() == 0) throw InvalidMatrix("SymMatrix requires dim >= 1");
    for (std::size_t i = 0; i < m_.rows(); ++i)
        for (std::size_t j = i + 1; j < m_.cols(); ++j) m_(j, i) = m_(i, j);
}

SymMatrix::SymMatrix(std::initializer_list<std::initializer_list<double>> rows)
    : SymMatrix(Matrix(rows)) {}

SymMatrix SymMatrix::identity(std::size_t n) { return SymMatrix(Matrix::identity(n)); }
SymMatrix SymMatrix::zero(std::size_t n) { return SymMatrix(Matrix(n, n)); }
SymMatrix SymMatrix::diagonal(std::span<const double> d) { return SymMatrix(Matrix::diagonal(d)); }

void SymMatrix::set(std::size_t r, std::size_t c, double v) {
    m_(r, c) = v;
    m_(c, r) = v;
}

SymMatrix& SymMatrix::operator+=(const SymMatrix& o) {
    m_ += o.m_;
    return *this;
}

SymMatrix& SymMatrix::operator*=(double s) {
    m_ *= s;
    return *this;
}

SymMatrix SymMatrix::congruence(const Matrix& v) const {
    return SymMatrix(v.transpose() * m_ * v);
}

// ---------------------------------------------------------------------------

EigResult sym_eig(const SymMatrix& sym) {
    const std::size_t n = sym.dim();
    Matrix a = sym.matrix();
    if (!a.all_finite()) throw InvalidMatrix("sym_eig: non-finite entries");
    Matrix v = Matrix::identity(n);

    const double scale = std::max(a.norm_fro(), std::numeric_limits<double>::min());
    constexpr int kMaxSweeps = 100;
    for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
        if (std::sqrt(off) <= 1e-18 * scale) break;

        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                // Skip rotations that cannot change the diagonal in floating point.
                if (sweep > 3 && std::abs(apq) < 1e-300) {
                    a(p, q) = a(q, p) = 0.0;
                    continue;
                }
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;

                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p);
                    const double akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k);
                    const double aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                a(p, q) = a(q, p) = 0.0;
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p);
                    const double vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return a(x, x) < a(y, y); });

    EigResult out;
    out.values.resize(n);
    out.vectors = Matrix(n, n);
    for (std::size_t k = 0; k < n; ++k) {
        out.values[k] = a(order[k], order[k]);
        for (std::size_t r = 0; r < n; ++r) out.vectors(r, k) = v(r, order[k]);
    }
    return out;
}

double min_eig(const SymMatrix& a) { return sym_eig(a).values.front(); }
double max_eig(const SymMatrix& a) { return sym_eig(a).values.back(); }

bool is_psd(const SymMatrix& a, double tol) {
    const double scale = std::max(1.0, a.matrix().norm_inf());
    return min_eig(a) >= -tol * scale;
}

bool is_nsd(const SymMatrix& a, double tol) { return is_psd(-a, tol); }

SymMatrix sym_inverse(const SymMatrix& a) {
    const EigResult e = sym_eig(a);
    const std::size_t n = a.dim();
    const double scale = std::max(1.0, a.matrix().norm_inf());
    Matrix inv(n, n);
    for (std::size_t k = 0; k < n; ++k) {
        const double lam = e.values[k];
        if (std::abs(lam) <= 1e-12 * scale) throw SingularBlock("sym_inverse: singular matrix");
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < n; ++c) inv(r, c) += e.vectors(r, k) * e.vectors(c, k) / lam;
    }
    return SymMatrix(inv);
}

SymMatrix spd_power(const SymMatrix& a, double p) {
    const EigResult e = sym_eig(a);
    const std::size_t n = a.dim();
    Matrix out(n, n);
    for (std::size_t k = 0; k < n; ++k) {
        if (e.values[k] <= 0.0) throw SingularBlock("spd_power: matrix is not positive definite");
        const double f = std::pow(e.values[k], p);
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < n; ++c) out(r, c) += e.vectors(r, k) * e.vectors(c, k) * f;
    }
    return SymMatrix(out);
}

SymMatrix schur_reduce(const SymMatrix& m, std::size_t split) {
    const std::size_t n = m.dim();
    if (split == 0 || split >= n) throw InvalidMatrix("schur_reduce: split must be inside (0, dim)");
    const Matrix& full = m.matrix();
    const Matrix a = full.block(0, 0, split, split);
    const Matrix b = full.block(split, 0, n - split, split);
    const SymMatrix c(full.block(split, split, n - split, n - split));

    const EigResult ce = sym_eig(c);
    const double scale = std::max(1.0, c.matrix().norm_inf());
    for (double lam : ce.values)
        if (std::abs(lam) <= 1e-12 * scale) throw SingularBlock("schur_reduce: trailing block is singular");

    // C^{-1} B through the eigenbasis.
    const std::size_t nc = n - split;
    Matrix cinv_b(nc, split);
    const Matrix vt_b = ce.vectors.transpose() * b;
    for (std::size_t k = 0; k < nc; ++k)
        for (std::size_t j = 0; j < split; ++j) {
            const double w = vt_b(k, j) / ce.values[k];
            for (std::size_t r = 0; r < nc; ++r) cinv_b(r, j) += ce.vectors(r, k) * w;
        }
    return SymMatrix(a - b.transpose() * cinv_b);
}

Matrix row_space_basis(const Matrix& g, double rel_tol) {
    const SymMatrix gtg(g.transpose() * g);
    const EigResult e = sym_eig(gtg);
    const std::size_t n = gtg.dim();
    const double top = std::max(e.values.back(), 0.0);
    std::vector<std::size_t> keep;
    for (std::size_t k = n; k-- > 0;) {
        if (top > 0.0 && std::sqrt(std::max(e.values[k], 0.0)) > rel_tol * std::sqrt(top)) keep.push_back(k);
    }
    Matrix basis(n, keep.size());
    for (std::size_t c = 0; c < keep.size(); ++c)
        for (std::size_t r = 0; r < n; ++r) basis(r, c) = e.vectors(r, keep[c]);
    return basis;
}

// ---------------------------------------------------------------------------

BlockAssembler::BlockAssembler(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
    offsets_.resize(dims_.size());
    std::size_t off = 0;
    for (std::size_t b = 0; b < dims_.size(); ++b) {
        offsets_[b] = off;
        off += dims_[b];
    }
    full_ = Matrix(off, off);
}

void BlockAssembler::set(std::size_t r, std::size_t c, const Matrix& m) {
    if (r < c) throw InvalidMatrix("BlockAssembler::set expects a lower-triangular block index");
    if (m.rows() != dims_[r] || m.cols() != dims_[c])
        throw InvalidMatrix("BlockAssembler: block (" + std::to_string(r) + "," + std::to_string(c) +
                            ") has shape " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                            ", expected " + std::to_string(dims_[r]) + "x" + std::to_string(dims_[c]));
    full_.set_block(offsets_[r], offsets_[c], m);
    if (r != c) full_.set_block(offsets_[c], offsets_[r], m.transpose());
}

SymMatrix BlockAssembler::build() const {
    // Diagonal blocks may carry rounding asymmetry; average them instead of
    // letting SymMatrix silently drop the lower triangle.
    Matrix m = full_;
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = i + 1; j < m.cols(); ++j) {
            const double avg = 0.5 * (m(i, j) + m(j, i));
            m(i, j) = m(j, i) = avg;
        }
    return SymMatrix(m);
}

}  // namespace it2mpc
