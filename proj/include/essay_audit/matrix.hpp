#ifndef ESSAY_AUDIT_MATRIX_HPP
#define ESSAY_AUDIT_MATRIX_HPP

#include <cstddef>
#include <vector>

namespace essay_audit {

// Dense row-major matrix of doubles. NaN entries mark missing values.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    const double* row(std::size_t r) const { return &data[r * cols]; }
    double* row(std::size_t r) { return &data[r * cols]; }
};

}  // namespace essay_audit

#endif
