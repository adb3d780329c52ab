#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "flap/tensor.hpp"

namespace flap {

// Reverse-mode tape. Ops execute eagerly and, while recording, push one
// backward closure per primitive. backward() replays the closures in reverse,
// visiting each node exactly once; fan-out accumulates because every closure
// adds into (never overwrites) its inputs' gradients.
//
// A tape is single-threaded; independent forward passes must each own one.
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}

  bool recording() const { return recording_; }
  size_t num_nodes() const { return nodes_.size(); }

  // -- matrix products ------------------------------------------------------
  Tensor matmul(Tensor a, Tensor b);          // [m,k]x[k,n]
  Tensor bmm(Tensor a, Tensor b);             // [B,m,k]x[B,k,n]
  Tensor transpose(Tensor x);                 // [m,n] -> [n,m]
  Tensor transpose_12(Tensor x);              // [B,m,n] -> [B,n,m]

  // -- elementwise / broadcast ---------------------------------------------
  Tensor add(Tensor a, Tensor b);             // same shape
  Tensor sub(Tensor a, Tensor b);
  Tensor mul(Tensor a, Tensor b);
  Tensor scale(Tensor x, double c);
  Tensor mul_scalar(Tensor x, Tensor s);      // s is a 1-element tensor
  Tensor exp_elem(Tensor x);
  Tensor gelu(Tensor x);
  Tensor add_bias(Tensor x, Tensor b);        // [R,D] + [D]
  Tensor add_rows(Tensor x, Tensor table);    // [B,N,D] + first N rows of [R,D]

  // -- normalization / reductions -------------------------------------------
  Tensor softmax_lastdim(Tensor x);
  Tensor layernorm_lastdim(Tensor x, Tensor gain,
                           Tensor bias, double eps = 1e-5);
  Tensor mean_axis1(Tensor x);                // [B,N,D] -> [B,D]
  Tensor masked_mean_axis1(Tensor x,
                           const std::vector<double>& weights);  // weights[B*N]
  Tensor l2_normalize_rows(Tensor x, double eps = 1e-12);
  Tensor sum(Tensor x);                       // -> scalar

  // -- structure ------------------------------------------------------------
  Tensor reshape(Tensor x, std::vector<size_t> shape);
  Tensor head_split(Tensor x, size_t heads);  // [B,N,D] -> [B*H,N,D/H]
  Tensor head_merge(Tensor x, size_t heads);  // inverse of head_split
  Tensor embedding(Tensor table, const std::vector<int>& ids,
                   size_t batch, size_t len);            // -> [B,L,D]
  // out.flat[i] = x.flat[src_index[i]]; entries of size_t(-1) read as 0.
  Tensor permute_elements(Tensor x, const std::vector<size_t>& src_index,
                          std::vector<size_t> out_shape);
  // Stacks same-shape tensors along a new leading axis.
  Tensor stack0(const std::vector<Tensor>& parts);
  Tensor gather_rows(Tensor x,
                     const std::vector<std::vector<size_t>>& kept);
  Tensor scatter_restore(Tensor visible, Tensor mask_token,
                         const std::vector<std::vector<size_t>>& kept,
                         size_t total_rows);
  Tensor conv2d_merge(Tensor x, Tensor kernel,
                      Tensor bias);               // [C,H,W],[C,3,3],[1] -> [H,W]

  // -- losses / similarity ----------------------------------------------------
  Tensor cross_entropy_rows(Tensor logits,
                            const std::vector<size_t>& targets);  // -> scalar
  Tensor cosine_similarity(Tensor a, Tensor b,
                           double eps = 1e-8);           // vectors -> scalar
  Tensor mse_masked(Tensor recon, Tensor target,
                    const std::vector<std::vector<size_t>>& masked);  // -> scalar

  // Seeds d(loss)/d(loss)=1 and replays the tape in reverse.
  void backward(Tensor loss);

 private:
  Tensor make_output(std::vector<size_t> shape, bool grad_needed);
  void record(std::function<void()> fn);

  bool recording_;
  std::vector<std::function<void()>> nodes_;
};

}  // namespace flap
