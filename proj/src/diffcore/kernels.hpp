#pragma once

#include <cstdint>
#include <vector>

#include "diffcore/array.hpp"

namespace pbcnn::diffcore {

// Forward and backward kernels for the primitives the classifier needs.
// Image tensors are channels-last: [h,w,c] for a single image or
// [n,h,w,c] for a batch. Convolutions are stride 1 with "same" zero padding.

Array conv2d(const Array& input, const Array& kernel, const Array& bias);
Array conv2d_grad_input(const Array& grad_out, const Array& kernel, const Extents& input_extents);
Array conv2d_grad_kernel(const Array& input, const Array& grad_out, const Extents& kernel_extents);
Array conv2d_grad_bias(const Array& grad_out);

struct PoolResult {
  Array output;
  std::vector<std::uint32_t> argmax;  // flat input offset per output element
};

/// 2x2 window, stride 2; a trailing odd row/column is dropped.
Array maxpool2d(const Array& input);
PoolResult maxpool2d_indexed(const Array& input);
Array maxpool2d_grad(const Array& grad_out, const std::vector<std::uint32_t>& argmax,
                     const Extents& input_extents);

/// out = input . weight + bias, row-wise. input [n,din], weight [din,dout].
Array dense_affine(const Array& input, const Array& weight, const Array& bias);
Array dense_grad_input(const Array& grad_out, const Array& weight);
Array dense_grad_weight(const Array& input, const Array& grad_out);
Array dense_grad_bias(const Array& grad_out);

Array relu(const Array& input);

/// Row-wise softmax over the last axis, max-subtracted.
Array softmax(const Array& logits);

}  // namespace pbcnn::diffcore
