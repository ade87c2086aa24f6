#pragma once

#include <cstddef>
#include <map>

#include "xdfm/data.h"
#include "xdfm/numerics.h"

namespace xdfm {

// One D-dimensional latent vector per feature id; row `id` of `table`.
struct EmbeddingTable {
  Mat table;

  EmbeddingTable() = default;
  EmbeddingTable(std::size_t vocab_size, std::size_t dim) : table(vocab_size, dim) {}

  std::size_t dim() const { return table.cols(); }
  std::size_t vocab_size() const { return table.rows(); }
};

using SparseGrad = std::map<FeatureId, Vec>;

// Row i is the embedding of field i: the single feature for univalent fields,
// the sum of active features for multivalent ones, zeros when none is active.
Mat embed_forward(const Instance& instance, const EmbeddingTable& table);

// Adjoint of embed_forward: every active feature of field i receives row i
// of grad_x0. Repeated features accumulate.
SparseGrad embed_backward(const Instance& instance, const Mat& grad_x0,
                          const EmbeddingTable& table);

// Dense variant used by the trainer: adds the adjoint into `grad`.
void embed_backward_into(const Instance& instance, const Mat& grad_x0, Mat& grad);

}  // namespace xdfm
