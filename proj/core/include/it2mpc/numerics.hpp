#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace it2mpc {

using Vector = std::vector<double>;

// Dense row-major matrix. Sized for the small blocks this library assembles
// (tens of rows at most); no expression templates, no aliasing tricks.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    Matrix(std::initializer_list<std::initializer_list<double>> rows);

    static Matrix identity(std::size_t n);
    static Matrix column(std::span<const double> v);
    static Matrix row(std::span<const double> v);
    static Matrix diagonal(std::span<const double> d);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<const double> data() const noexcept { return data_; }
    std::span<double> data() noexcept { return data_; }

    Matrix transpose() const;
    Matrix block(std::size_t r0, std::size_t c0, std::size_t nr, std::size_t nc) const;
    void set_block(std::size_t r0, std::size_t c0, const Matrix& b);

    Matrix& operator+=(const Matrix& o);
    Matrix& operator-=(const Matrix& o);
    Matrix& operator*=(double s);

    // Max absolute row sum.
    double norm_inf() const;
    double norm_fro() const;
    double max_abs() const;
    bool all_finite() const;

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator-(Matrix a);
Matrix operator*(const Matrix& a, const Matrix& b);
Matrix operator*(double s, Matrix a);
Matrix operator*(Matrix a, double s);
Vector operator*(const Matrix& a, std::span<const double> x);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);
Vector add(std::span<const double> a, std::span<const double> b);
Vector scaled(std::span<const double> a, double s);
// x^T M x
double quad_form(const Matrix& m, std::span<const double> x);

/// Symmetric matrix. The upper triangle of the source is mirrored into the
/// lower triangle on construction, so entries are exactly symmetric.
class SymMatrix {
public:
    SymMatrix() = default;
    explicit SymMatrix(const Matrix& m);
    SymMatrix(std::initializer_list<std::initializer_list<double>> rows);

    static SymMatrix identity(std::size_t n);
    static SymMatrix zero(std::size_t n);
    static SymMatrix diagonal(std::span<const double> d);

    std::size_t dim() const noexcept { return m_.rows(); }
    double operator()(std::size_t r, std::size_t c) const { return m_(r, c); }
    const Matrix& matrix() const noexcept { return m_; }

    // Writes (r, c) and (c, r).
    void set(std::size_t r, std::size_t c, double v);

    SymMatrix& operator+=(const SymMatrix& o);
    SymMatrix& operator*=(double s);
    friend SymMatrix operator+(SymMatrix a, const SymMatrix& b) { return a += b; }
    friend SymMatrix operator-(const SymMatrix& a, const SymMatrix& b) { return SymMatrix(a.m_ - b.m_); }
    friend SymMatrix operator-(const SymMatrix& a) { return SymMatrix(-a.m_); }
    friend SymMatrix operator*(double s, SymMatrix a) { return a *= s; }
    friend bool operator==(const SymMatrix&, const SymMatrix&) = default;

    // V^T S V for a rectangular V.
    SymMatrix congruence(const Matrix& v) const;

private:
    Matrix m_;
};

struct EigResult {
    Vector values;   // ascending
    Matrix vectors;  // column k pairs with values[k]
};

inline constexpr double kDefaultPsdTol = 1e-9;

/// Full spectral decomposition by cyclic Jacobi rotations. Deterministic;
/// throws InvalidMatrix on non-finite input.
EigResult sym_eig(const SymMatrix& a);

double min_eig(const SymMatrix& a);
double max_eig(const SymMatrix& a);

/// Semidefiniteness with the tolerance applied after scaling the spectrum by
/// max(1, ||A||_inf).
bool is_psd(const SymMatrix& a, double tol = kDefaultPsdTol);
bool is_nsd(const SymMatrix& a, double tol = kDefaultPsdTol);

/// For M = [[A, B^T], [B, C]] partitioned at `split`, returns A - B^T C^{-1} B.
/// Throws SingularBlock when C is numerically singular.
SymMatrix schur_reduce(const SymMatrix& m, std::size_t split);

/// Inverse of a symmetric matrix through its eigendecomposition. Throws
/// SingularBlock if an eigenvalue is within 1e-12 (relative) of zero.
SymMatrix sym_inverse(const SymMatrix& a);

/// Symmetric power A^p for A positive definite (p = -0.5 gives A^{-1/2}).
SymMatrix spd_power(const SymMatrix& a, double p);

/// Orthonormal basis (as columns) of the range of G^T, i.e. the orthogonal
/// complement of ker(G). Rank decided relative to the largest singular value;
/// singular values come from eig(G^T G), so they carry ~1e-8 relative noise.
Matrix row_space_basis(const Matrix& g, double rel_tol = 1e-7);

/// Block-structured symmetric assembly. Only blocks on or below the diagonal
/// are set; the upper triangle is produced by mirroring.
class BlockAssembler {
public:
    explicit BlockAssembler(std::vector<std::size_t> dims);

    std::size_t block_count() const noexcept { return dims_.size(); }
    std::size_t offset(std::size_t b) const { return offsets_[b]; }
    std::size_t block_dim(std::size_t b) const { return dims_[b]; }

    // Sets block (r, c) with r >= c.
    void set(std::size_t r, std::size_t c, const Matrix& m);
    SymMatrix build() const;

private:
    std::vector<std::size_t> dims_;
    std::vector<std::size_t> offsets_;
    Matrix full_;
};

}  // namespace it2mpc
