#include "xdfm/embedding.h"

#include <string>

#include "xdfm/error.h"

namespace xdfm {

namespace {

void check_ids(const Instance& instance, std::size_t vocab_size) {
  for (const auto& field : instance.fields) {
    for (FeatureId id : field) {
      if (id >= vocab_size) {
        throw LookupError("feature id " + std::to_string(id) + " has no embedding");
      }
    }
  }
}

void check_grad_shape(const Instance& instance, const Mat& grad_x0, std::size_t dim) {
  if (grad_x0.rows() != instance.fields.size() || grad_x0.cols() != dim) {
    throw DimensionError("embedding gradient must be " + std::to_string(instance.fields.size()) +
                         "x" + std::to_string(dim));
  }
}

}  // namespace

Mat embed_forward(const Instance& instance, const EmbeddingTable& table) {
  check_ids(instance, table.vocab_size());
  const std::size_t dim = table.dim();
  Mat x0(instance.fields.size(), dim);
  for (std::size_t f = 0; f < instance.fields.size(); ++f) {
    auto row = x0.row(f);
    for (FeatureId id : instance.fields[f]) {
      auto e = table.table.row(id);
      for (std::size_t d = 0; d < dim; ++d) row[d] += e[d];
    }
  }
  return x0;
}

SparseGrad embed_backward(const Instance& instance, const Mat& grad_x0,
                          const EmbeddingTable& table) {
  check_grad_shape(instance, grad_x0, table.dim());
  SparseGrad out;
  for (std::size_t f = 0; f < instance.fields.size(); ++f) {
    auto g = grad_x0.row(f);
    for (FeatureId id : instance.fields[f]) {
      auto [it, inserted] = out.try_emplace(id, Vec(g.begin(), g.end()));
      if (!inserted) {
        for (std::size_t d = 0; d < g.size(); ++d) it->second[d] += g[d];
      }
    }
  }
  return out;
}

void embed_backward_into(const Instance& instance, const Mat& grad_x0, Mat& grad) {
  check_grad_shape(instance, grad_x0, grad.cols());
  for (std::size_t f = 0; f < instance.fields.size(); ++f) {
    auto g = grad_x0.row(f);
    for (FeatureId id : instance.fields[f]) {
      auto dst = grad.row(id);
      for (std::size_t d = 0; d < g.size(); ++d) dst[d] += g[d];
    }
  }
}

}  // namespace xdfm
