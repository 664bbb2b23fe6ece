#pragma once

#include <cmath>
#include <cstddef>
#include <cstring>
#include <initializer_list>
#include <vector>

namespace redtest {

// Dense row-major matrix of 64-bit reals. All numeric work in the library
// runs through this type; 32-bit inputs are promoted on read.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
        Matrix m(rows.size(), rows.size() ? rows.begin()->size() : 0);
        std::size_t r = 0;
        for (const auto &row : rows) {
            std::size_t c = 0;
            for (double v : row) m(r, c++) = v;
            ++r;
        }
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    bool empty() const { return data_.empty(); }

    double &operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    double *row(std::size_t r) { return data_.data() + r * cols_; }
    const double *row(std::size_t r) const { return data_.data() + r * cols_; }

    std::vector<double> &data() { return data_; }
    const std::vector<double> &data() const { return data_; }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    // Bit-level equality; distinguishes +0/-0 and treats NaN payloads literally.
    bool same_bits(const Matrix &other) const {
        return rows_ == other.rows_ && cols_ == other.cols_ &&
               (data_.empty() ||
                std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(double)) == 0);
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// C = A * B, naive but cache-friendly (ikj order). Sizes in this library are
// small enough (synthetic mixing matrices) that a tuned kernel is not needed.
inline Matrix matmul(const Matrix &a, const Matrix &b) {
    Matrix c(a.rows(), b.cols(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double *arow = a.row(i);
        double *crow = c.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = arow[k];
            const double *brow = b.row(k);
            for (std::size_t j = 0; j < b.cols(); ++j) crow[j] += aik * brow[j];
        }
    }
    return c;
}

}  // namespace redtest
