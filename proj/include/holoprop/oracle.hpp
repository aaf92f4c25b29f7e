#pragma once

#include <optional>
#include <string>
#include <vector>

#include "holoprop/dynamics.hpp"
#include "holoprop/model.hpp"

namespace holoprop {

struct OracleGradient {
  std::vector<RealTensor> grads;
  std::string method;  // "unrolled_adjoint" | "finite_difference"
  std::size_t steps = 0;
  double fd_h = 0.0;
  bool converged = true;  // adjoint: trajectory settled; fd: Richardson check passed
};

// Reverse accumulation of the loss at the final state through t_free
// synchronous free-phase steps (noise-free, real arithmetic).
OracleGradient unrolled_adjoint_gradient(const Model& model, const RealTensor& x,
                                         const RealTensor& y, std::size_t t_free);

// Central differences (L(theta + h e_i) - L(theta - h e_i)) / 2h, each loss
// from a fresh free-phase settle. `subset` restricts to chosen coordinates
// (tensor index, element index); gradients outside it stay zero. With
// `richardson` set, h and h/2 must agree to 1e-3 relative on every coordinate.
struct FdCoordinate {
  std::size_t tensor;
  std::size_t element;
};
OracleGradient finite_difference_gradient(const Model& model, const RealTensor& x,
                                          const RealTensor& y, double h,
                                          const SettleConfig& cfg,
                                          const std::vector<FdCoordinate>* subset = nullptr,
                                          bool richardson = false, unsigned workers = 1);

struct SimilarityReport {
  std::vector<double> per_layer;    // one entry per parameter tensor
  std::vector<bool> layer_defined;  // false when both vectors are zero
  double total = 0.0;
  bool total_defined = false;
};

SimilarityReport cosine_similarity(const std::vector<RealTensor>& a,
                                   const std::vector<RealTensor>& b);

// Deterministic coordinate sample for cross-checking big nets.
std::vector<FdCoordinate> sample_coordinates(const std::vector<RealTensor>& params,
                                             std::size_t count, std::uint64_t seed);

}  // namespace holoprop
