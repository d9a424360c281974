#pragma once

// Dense kernels for the policy's recurrent cells.
//
// Matrices are column-major. Activations are stored one column per sequence,
// so a batch of B sequences is a (rows x B) block. Every kernel computes each
// output column with the same fixed operation order regardless of B, which
// makes per-sequence results independent of how sequences are batched. The
// sampler and the scorer rely on that for bit-identical log-probabilities.

#include <cstddef>
#include <span>

namespace sapo::kernels {

/// Y(rows x B) += W(rows x cols) * X(cols x B)
void gemm_acc(const double* w, int rows, int cols, const double* x, int batch, double* y);

/// DX(cols x B) += W(rows x cols)^T * DY(rows x B)
void gemm_t_acc(const double* w, int rows, int cols, const double* dy, int batch, double* dx);

/// DW(rows x cols) += DY(rows x B) * X(cols x B)^T
void outer_acc(double* dw, int rows, int cols, const double* dy, const double* x, int batch);

/// Y(rows x B) = bias broadcast over columns.
void broadcast_bias(const double* bias, int rows, int batch, double* y);

/// db(rows) += row sums of DY(rows x B).
void row_sum_acc(const double* dy, int rows, int batch, double* db);

/// In place, per column: v <- v - logsumexp(v).
void log_softmax_columns(double* v, int rows, int batch);

double dot(const double* a, const double* b, int n);

/// y += a * x
void axpy(double a, const double* x, double* y, int n);

}  // namespace sapo::kernels
