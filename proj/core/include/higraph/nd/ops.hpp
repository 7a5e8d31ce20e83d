#pragma once

#include <cstddef>
#include <vector>

#include "higraph/nd/tape.hpp"
#include "higraph/nd/tensor.hpp"

namespace higraph::nd {

/// Compressed sparse row matrix with fixed (non-learned) entries.
/// Used for graph adjacency and per-node edge-type counts.
struct Csr {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> indptr;   // rows + 1
  std::vector<std::size_t> indices;  // column per entry
  std::vector<double> values;

  static Csr from_triplets(std::size_t rows, std::size_t cols,
                           const std::vector<std::size_t>& r,
                           const std::vector<std::size_t>& c,
                           const std::vector<double>& v);
  Csr transposed() const;
};

// Elementwise and broadcasting arithmetic.
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor elementwise_mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& a, double c);
/// x: m-by-n, v: length n, broadcast over the leading axis.
Tensor broadcast_add(Tape& tape, const Tensor& x, const Tensor& v);

// Linear algebra.
Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor transpose(Tape& tape, const Tensor& a);
/// A: m-by-n, x: length n -> length m.
Tensor matvec(Tape& tape, const Tensor& a, const Tensor& x);
/// A: m-by-n, x: length m -> length n (A^T x).
Tensor tmatvec(Tape& tape, const Tensor& a, const Tensor& x);

// Shape plumbing.
Tensor concat_vec(Tape& tape, const Tensor& a, const Tensor& b);
Tensor concat_many(Tape& tape, const std::vector<Tensor>& parts);
Tensor slice_rows(Tape& tape, const Tensor& x, std::size_t r0, std::size_t r1);
Tensor row_vec(Tape& tape, const Tensor& x, std::size_t i);
Tensor stack_rows(Tape& tape, const std::vector<Tensor>& rows);

// Reductions.
/// Per-row mean of an m-by-n matrix -> length m.
Tensor mean_rows(Tape& tape, const Tensor& x);
/// Per-column mean of an m-by-n matrix -> length n.
Tensor mean_cols(Tape& tape, const Tensor& x);
Tensor sum_all(Tape& tape, const Tensor& x);

// Nonlinearities. relu'(0) is taken as 0.
Tensor relu(Tape& tape, const Tensor& x);
Tensor sigmoid(Tape& tape, const Tensor& x);
Tensor softmax_vec(Tape& tape, const Tensor& x);

/// 1-D convolution, stride 1, symmetric zero padding (k-1)/2, odd k.
/// x: l-by-c_in, w: k-by-c_in-by-c_out, b: length c_out -> l-by-c_out.
Tensor conv1d(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& b);

/// Point-wise (kernel-1) convolution: per-position linear map.
inline Tensor pwconv(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& b) {
  return broadcast_add(tape, matmul(tape, x, w), b);
}

/// Channel up-projection (kernel 1, stride 1); lengths never change.
inline Tensor tconv_channels(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& b) {
  return pwconv(tape, x, w, b);
}

/// Batch normalization over the position axis of an l-by-c input.
/// Train mode normalizes with batch statistics and folds them into the
/// running buffers (momentum 0.1, unbiased variance for the running
/// estimate); eval mode applies the running statistics. Throws
/// DegenerateBatch when l == 1 in train mode.
Tensor batchnorm(Tape& tape, const Tensor& x, const Tensor& gamma, const Tensor& beta,
                 Tensor running_mean, Tensor running_var, bool train,
                 double momentum = 0.1, double eps = 1e-5);

/// Row gather from an embedding table; backward scatter-adds.
Tensor embed_rows(Tape& tape, const Tensor& table, const std::vector<std::size_t>& ids);

/// y = A x for a fixed sparse A; gradient flows into x only.
Tensor spmm(Tape& tape, const Csr& a, const Tensor& x);

/// Mean binary cross-entropy over a batch; predictions are clamped to
/// [eps, 1-eps] with eps = 1e-12. Gradient flows into yhat only.
Tensor bce_loss(Tape& tape, const Tensor& yhat, const Tensor& y);

}  // namespace higraph::nd
