#ifndef MRF_MATRIX_HPP
#define MRF_MATRIX_HPP

#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <vector>

namespace mrf {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/// Dense row-major matrix of doubles with value semantics.
class Matrix {
public:
    Matrix() = default;
    Matrix(int rows, int cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, fill) {
        if (rows < 0 || cols < 0) throw std::invalid_argument("Matrix: negative dimension");
    }

    int rows() const { return rows_; }
    int cols() const { return cols_; }

    double& operator()(int r, int c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
    double operator()(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols_ + c]; }

    double* row_ptr(int r) { return data_.data() + static_cast<std::size_t>(r) * cols_; }
    const double* row_ptr(int r) const { return data_.data() + static_cast<std::size_t>(r) * cols_; }

    std::vector<double> row(int r) const {
        return std::vector<double>(row_ptr(r), row_ptr(r) + cols_);
    }
    std::vector<double> col(int c) const {
        std::vector<double> out(rows_);
        for (int r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
        return out;
    }
    void set_col(int c, const std::vector<double>& v) {
        if (static_cast<int>(v.size()) != rows_) throw std::invalid_argument("Matrix::set_col: length mismatch");
        for (int r = 0; r < rows_; ++r) (*this)(r, c) = v[r];
    }

    const std::vector<double>& data() const { return data_; }
    std::vector<double>& data() { return data_; }

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> data_;
};

inline bool is_finite(double x) { return std::isfinite(x); }

inline bool row_is_finite(const Matrix& m, int r) {
    for (int c = 0; c < m.cols(); ++c)
        if (!std::isfinite(m(r, c))) return false;
    return true;
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

inline double variance_of(const std::vector<double>& v) {
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return v.size() > 1 ? s / static_cast<double>(v.size() - 1) : 0.0;
}

inline double stddev_of(const std::vector<double>& v) { return std::sqrt(variance_of(v)); }

inline double correlation_of(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.empty()) throw std::invalid_argument("correlation_of: length mismatch");
    const double ma = mean_of(a), mb = mean_of(b);
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) return kNaN;
    return sab / std::sqrt(saa * sbb);
}

}  // namespace mrf

#endif  // MRF_MATRIX_HPP
