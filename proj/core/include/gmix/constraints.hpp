#pragma once

#include "gmix/core_domain.hpp"
#include "gmix/tensor.hpp"

#include <vector>

namespace gmix {

/// Swap of stratum pairs (k,ℓ) ↔ (ℓ,k) under the row-major pairing k*K+ℓ.
struct TransposePermutation {
  Index K = 1;
  std::vector<Index> perm;

  Index operator()(Index i) const { return perm[static_cast<std::size_t>(i)]; }
};

TransposePermutation build_transpose_permutation(Index K);

/// Free parameters of a reciprocal K²×A×A tensor. Between-strata blocks are
/// stored for k<ℓ in lexicographic order; within-strata blocks use only their
/// lower triangle (diagonal included).
struct ConstrainedTensor {
  Index K = 1;
  Index A = 0;
  std::vector<RowMatrix> free_between;
  std::vector<RowMatrix> free_within;

  static Index pair_index(Index k, Index l, Index K);  // position of (k,ℓ), k<ℓ, in free_between
};

/// Copies free blocks into the full tensor: slice (ℓ,k) is the transpose of
/// slice (k,ℓ), within-stratum slices are mirrored from their lower triangle.
Tensor3 materialize(const ConstrainedTensor& ct);

/// Proportions s: complete K*²×A×A of P^k_a P^ℓ_b/(P_a P_b), partial K*×A×A of P^k_a/P_a.
Tensor3 proportion_tensor(const PopulationTable& pop, Mode mode);

/// δ = softmax(ω) / s on each fiber (fixed a, b).
Tensor3 softmax_fiber(const Tensor3& omega, const Tensor3& s);

/// Fiber-wise centred log of s; softmax_fiber(result, s) is identically one.
Tensor3 clr_inverse_center(const Tensor3& s);

/// Mode-1 Kronecker sum of per-feature tensors. With `paired` the components
/// are K_j²×A×A and the output K*²×A×A; otherwise K_j×A×A → K*×A×A.
/// Composite strata follow StrataSpace ordering (first component most significant).
Tensor3 kronecker_sum_mode1(const std::vector<Tensor3>& components, bool paired = true);

struct RankResult {
  Index rank = 0;
  Index columns = 0;
  bool feasible_nontrivial = false;
};

/// Numerical rank of the proportion design 𝐒 (A²×K*² complete, A×K* partial).
/// Non-trivial consistent modifiers exist only when the rank is deficient.
RankResult rank_condition(const PopulationTable& pop, Mode mode);

/// max |Ω_{(k,ℓ),a,b} − Ω_{(ℓ,k),b,a}| over all entries.
double reciprocity_residual(const Tensor3& omega);

/// max over fibers of |Σ_i δ_i s_i − 1|.
double consistency_residual(const Tensor3& delta, const Tensor3& s);

}  // namespace gmix
