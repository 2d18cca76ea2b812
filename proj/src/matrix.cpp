#include "crodobo/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace crodobo {

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<real>> rows) {
    Matrix m(rows.size(), rows.size() ? rows.begin()->size() : 0);
    std::size_t r = 0;
    for (const auto& row : rows) {
        if (row.size() != m.cols_) {
            throw std::invalid_argument("Matrix::from_rows: ragged initializer");
        }
        std::copy(row.begin(), row.end(), m.row(r));
        ++r;
    }
    return m;
}

void Matrix::fill(real value) {
    std::fill(data_.begin(), data_.end(), value);
}

void Matrix::zeroize() {
    std::fill(data_.begin(), data_.end(), real(0));
}

Matrix Matrix::take_rows(const std::vector<std::size_t>& indices) const {
    Matrix out(indices.size(), cols_);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= rows_) {
            throw std::out_of_range("Matrix::take_rows: row index out of range");
        }
        std::copy(row(indices[i]), row(indices[i]) + cols_, out.row(i));
    }
    return out;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw std::invalid_argument("matmul: inner dimensions differ");
    }
    Matrix c(a.rows(), b.cols(), 0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const real* arow = a.row(i);
        real* crow = c.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const real aik = arow[k];
            const real* brow = b.row(k);
            for (std::size_t j = 0; j < b.cols(); ++j) {
                crow[j] += aik * brow[j];
            }
        }
    }
    return c;
}

Matrix matmul_at_b(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) {
        throw std::invalid_argument("matmul_at_b: row counts differ");
    }
    Matrix c(a.cols(), b.cols(), 0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const real* arow = a.row(i);
        const real* brow = b.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const real aik = arow[k];
            real* crow = c.row(k);
            for (std::size_t j = 0; j < b.cols(); ++j) {
                crow[j] += aik * brow[j];
            }
        }
    }
    return c;
}

Matrix matmul_a_bt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) {
        throw std::invalid_argument("matmul_a_bt: column counts differ");
    }
    Matrix c(a.rows(), b.rows(), 0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const real* arow = a.row(i);
        real* crow = c.row(i);
        for (std::size_t k = 0; k < b.rows(); ++k) {
            const real* brow = b.row(k);
            real acc = 0;
            for (std::size_t j = 0; j < a.cols(); ++j) {
                acc += arow[j] * brow[j];
            }
            crow[k] = acc;
        }
    }
    return c;
}

Vector col_sums(const Matrix& m) {
    Vector sums(m.cols(), 0);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const real* row = m.row(r);
        for (std::size_t c = 0; c < m.cols(); ++c) {
            sums[c] += row[c];
        }
    }
    return sums;
}

bool all_finite(const Matrix& m) {
    for (real v : m.storage()) {
        if (!std::isfinite(v)) {
            return false;
        }
    }
    return true;
}

}  // namespace crodobo
