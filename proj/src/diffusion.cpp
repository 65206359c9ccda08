#include "dirinet/diffusion.hpp"

#include <cmath>

#include "dirinet/error.hpp"

namespace dirinet {

double diffusion_coefficient(double alpha, int k) {
  return alpha * std::pow(1.0 - alpha, k);
}

DiffusionKernel build_kernel(const TransitionMatrix& transition, double alpha, int k_max) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InputError("diffusion alpha must be in (0, 1)");
  if (k_max < 1) throw InputError("diffusion k_max must be >= 1");
  const SparseMatrix& t = transition.matrix;
  if (t.rows() != t.cols()) throw InputError("transition matrix must be square");

  DiffusionKernel kernel{alpha, k_max, transition.kind, SparseMatrix(t.rows(), t.cols())};
  SparseMatrix power = t;
  for (int k = 1; k <= k_max; ++k) {
    if (k > 1) power = (power * t).pruned();
    kernel.matrix += diffusion_coefficient(alpha, k) * power;
  }
  kernel.matrix.makeCompressed();
  return kernel;
}

Matrix diffuse(const DiffusionKernel& kernel, const Matrix& features) {
  if (features.rows() != kernel.matrix.cols()) {
    throw InputError("diffuse: feature rows (" + std::to_string(features.rows()) +
                     ") do not match kernel size (" + std::to_string(kernel.matrix.cols()) + ")");
  }
  return kernel.matrix * features;
}

}  // namespace dirinet
