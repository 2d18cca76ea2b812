#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

namespace crodobo {

#ifdef CRODOBO_SINGLE_PRECISION
using real = float;
#else
using real = double;
#endif

using Vector = std::vector<real>;

// Dense row-major matrix. Rows are samples, columns are features throughout
// this codebase.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, real value = 0)
        : rows_(rows), cols_(cols), data_(rows * cols, value) {}

    static Matrix from_rows(std::initializer_list<std::initializer_list<real>> rows);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    real& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    real operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    real* row(std::size_t r) { return data_.data() + r * cols_; }
    const real* row(std::size_t r) const { return data_.data() + r * cols_; }

    real* data() { return data_.data(); }
    const real* data() const { return data_.data(); }
    std::vector<real>& storage() { return data_; }
    const std::vector<real>& storage() const { return data_; }

    void fill(real value);

    // Overwrites every element with zero. Used by the burn-after-read path;
    // leaves dimensions intact so consumed slots stay inspectable.
    void zeroize();

    Matrix take_rows(const std::vector<std::size_t>& indices) const;

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<real> data_;
};

// c = a * b
Matrix matmul(const Matrix& a, const Matrix& b);
// c = a^T * b
Matrix matmul_at_b(const Matrix& a, const Matrix& b);
// c = a * b^T
Matrix matmul_a_bt(const Matrix& a, const Matrix& b);

Vector col_sums(const Matrix& m);
bool all_finite(const Matrix& m);

}  // namespace crodobo
