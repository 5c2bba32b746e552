#pragma once

#include <cstddef>
#include <vector>

#include "woundnet/autodiff.hpp"

// Differentiable primitives. Feature maps are NCHW; all inputs of one call
// must live on the same tape.
namespace woundnet::ad {

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var scale(Var a, double k);
/// Elementwise product of equally shaped values (attention gating).
Var mul(Var a, Var b);
/// Sum of all elements -> shape [1].
Var sum(Var a);
Var mean(Var a);

Var relu(Var a);
Var sigmoid(Var a);

/// Cross-correlation (no kernel flip) plus per-filter bias.
/// input [N,C,H,W], weight [F,C,kh,kw], bias [F] -> [N,F,H',W'] with
/// H' = (H + 2*padding - kh) / stride + 1.
Var conv2d(Var input, Var weight, Var bias, std::size_t stride, std::size_t padding);
Shape conv2d_output_shape(const Shape& input, const Shape& weight, std::size_t stride,
                          std::size_t padding);

/// Max pooling without padding; ties resolve to the first element in the window.
Var max_pool2d(Var input, std::size_t kernel, std::size_t stride);
Shape pool_output_shape(const Shape& input, std::size_t kernel, std::size_t stride);

/// [N,C,H,W] -> [N,C]
Var global_avg_pool(Var input);

/// input [N,I], weight [O,I], bias [O] -> [N,O]
Var linear(Var input, Var weight, Var bias);

/// Concatenation along axis 1 of rank-2 or rank-4 values.
Var concat(const std::vector<Var>& parts);

/// [N,T] -> [N,1], column j.
Var column(Var input, std::size_t j);

enum class Mode { train, eval };

/// Per-channel batch statistics observed in a training-mode call.
struct BatchStats {
  std::vector<double> mean;
  std::vector<double> var_unbiased;
};

/// Batch normalization over (N,H,W) per channel. In train mode the batch
/// statistics normalize and are reported through `observed`; in eval mode the
/// running statistics are used and the op is affine in its input.
Var batch_norm2d(Var input, Var gamma, Var beta, const NdArray& running_mean,
                 const NdArray& running_var, Mode mode, double eps = 1e-5,
                 BatchStats* observed = nullptr);

}  // namespace woundnet::ad
