#pragma once

#include <vector>

#include "spyflow/flow_field.hpp"
#include "spyflow/tensor.hpp"

namespace spyflow {

/// 2x2 area average. Height and width must be even.
template <typename T>
BasicTensor<T> downsample_image(const BasicTensor<T>& image);

/// Coarsest level first, input last. H and W must be divisible by 2^(levels-1).
template <typename T>
std::vector<BasicTensor<T>> build_image_pyramid(const BasicTensor<T>& image, int levels);

/// 2x2 average of u and v, scaled by 0.5 so values stay in pixels of the
/// new resolution.
template <typename T>
BasicFlowField<T> downsample_flow(const BasicFlowField<T>& flow);

/// Same as build_image_pyramid but for flow (values rescaled per level).
template <typename T>
std::vector<BasicFlowField<T>> build_flow_pyramid(const BasicFlowField<T>& flow, int levels);

/// Doubles resolution with corner-aligned bilinear interpolation and
/// multiplies values by 2.
template <typename T>
BasicFlowField<T> upsample_flow(const BasicFlowField<T>& flow);

/// output(x,y) = bilinear sample of image at (x + u, y + v), sample
/// coordinates clamped to the image border.
template <typename T>
BasicTensor<T> warp(const BasicTensor<T>& image, const BasicFlowField<T>& flow);

template <typename T>
struct WarpGradients {
    BasicTensor<T> image;
    BasicFlowField<T> flow;
};

template <typename T>
WarpGradients<T> warp_backward(const BasicTensor<T>& image, const BasicFlowField<T>& flow,
                               const BasicTensor<T>& grad_output);

/// Bilinear sample of channel c at a continuous position, clamped to the border.
template <typename T>
T sample_bilinear(const BasicTensor<T>& image, int channel, double x, double y);

/// General bilinear resize using pixel-centre alignment.
Tensor resize_bilinear(const Tensor& image, int height, int width);

/// Resizes a flow field and rescales u by the width ratio and v by the
/// height ratio.
FlowField resize_flow(const FlowField& flow, int height, int width);

}  // namespace spyflow
