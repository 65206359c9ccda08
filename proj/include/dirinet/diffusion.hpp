#pragma once

#include "dirinet/graph.hpp"
#include "dirinet/types.hpp"

namespace dirinet {

/// Truncated diffusion operator S = sum_{k=1}^{k_max} alpha (1 - alpha)^k T^k.
/// There is no k = 0 (self) term.
struct DiffusionKernel {
  double alpha = 0.0;
  int k_max = 0;
  TransitionKind source = TransitionKind::coupled;
  SparseMatrix matrix;
};

/// theta_k = alpha (1 - alpha)^k.
double diffusion_coefficient(double alpha, int k);

DiffusionKernel build_kernel(const TransitionMatrix& transition, double alpha, int k_max);

/// S * X for an N x F feature matrix.
Matrix diffuse(const DiffusionKernel& kernel, const Matrix& features);

}  // namespace dirinet
