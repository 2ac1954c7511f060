#pragma once

#include <cstdint>
#include <vector>

#include "crashwatch/core.hpp"

namespace crashwatch {

enum class Trans { N, T };

// C = op(A) * op(B), with op(M) = M or M^T. The inner accumulation order is
// fixed per output cell, so the parallel path is bit-identical to the serial
// reference for any job count.
Matrix matmul(const Matrix& a, Trans ta, const Matrix& b, Trans tb);
Matrix matmul_serial(const Matrix& a, Trans ta, const Matrix& b, Trans tb);

// For each query row, the indices of the k nearest candidate rows by squared
// Euclidean distance over all columns. Ties break toward the lower candidate
// index. exclude_self skips the candidate whose index equals the query's.
// Returns fewer than k entries when not enough candidates exist.
std::vector<std::vector<std::int64_t>> knn_indices(const Matrix& x, const std::vector<std::int64_t>& candidates,
                                                   const std::vector<std::int64_t>& queries, int k,
                                                   bool exclude_self);
std::vector<std::vector<std::int64_t>> knn_indices_serial(const Matrix& x,
                                                          const std::vector<std::int64_t>& candidates,
                                                          const std::vector<std::int64_t>& queries, int k,
                                                          bool exclude_self);

}  // namespace crashwatch
