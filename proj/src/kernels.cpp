#include "sapo/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace sapo::kernels {

void axpy(double a, const double* __restrict x, double* __restrict y, int n) {
  for (int i = 0; i < n; ++i) y[i] += a * x[i];
}

double dot(const double* a, const double* b, int n) {
  // Eight fixed partial sums: vectorizable and order-stable.
  double acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  int i = 0;
  for (; i + 8 <= n; i += 8)
    for (int l = 0; l < 8; ++l) acc[l] += a[i + l] * b[i + l];
  double tail = 0;
  for (; i < n; ++i) tail += a[i] * b[i];
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail;
}

void gemm_acc(const double* w, int rows, int cols, const double* x, int batch, double* y) {
  // k outermost so each W column is reused across the batch; each y element
  // still accumulates over k in increasing order.
  for (int k = 0; k < cols; ++k) {
    const double* wk = w + static_cast<std::ptrdiff_t>(k) * rows;
    for (int j = 0; j < batch; ++j) {
      const double xk = x[static_cast<std::ptrdiff_t>(j) * cols + k];
      if (xk == 0.0) continue;
      axpy(xk, wk, y + static_cast<std::ptrdiff_t>(j) * rows, rows);
    }
  }
}

void gemm_t_acc(const double* w, int rows, int cols, const double* dy, int batch, double* dx) {
  for (int j = 0; j < batch; ++j) {
    const double* dyj = dy + static_cast<std::ptrdiff_t>(j) * rows;
    double* dxj = dx + static_cast<std::ptrdiff_t>(j) * cols;
    for (int k = 0; k < cols; ++k) dxj[k] += dot(w + static_cast<std::ptrdiff_t>(k) * rows, dyj, rows);
  }
}

void outer_acc(double* dw, int rows, int cols, const double* dy, const double* x, int batch) {
  for (int j = 0; j < batch; ++j) {
    const double* dyj = dy + static_cast<std::ptrdiff_t>(j) * rows;
    const double* xj = x + static_cast<std::ptrdiff_t>(j) * cols;
    for (int k = 0; k < cols; ++k) {
      if (xj[k] == 0.0) continue;
      axpy(xj[k], dyj, dw + static_cast<std::ptrdiff_t>(k) * rows, rows);
    }
  }
}

void broadcast_bias(const double* bias, int rows, int batch, double* y) {
  for (int j = 0; j < batch; ++j) std::copy(bias, bias + rows, y + static_cast<std::ptrdiff_t>(j) * rows);
}

void row_sum_acc(const double* dy, int rows, int batch, double* db) {
  for (int j = 0; j < batch; ++j) axpy(1.0, dy + static_cast<std::ptrdiff_t>(j) * rows, db, rows);
}

void log_softmax_columns(double* v, int rows, int batch) {
  for (int j = 0; j < batch; ++j) {
    double* c = v + static_cast<std::ptrdiff_t>(j) * rows;
    const double m = *std::max_element(c, c + rows);
    double s = 0.0;
    for (int i = 0; i < rows; ++i) s += std::exp(c[i] - m);
    const double lse = m + std::log(s);
    for (int i = 0; i < rows; ++i) c[i] -= lse;
  }
}

}  // namespace sapo::kernels
