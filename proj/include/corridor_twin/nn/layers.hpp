#pragma once

#include "corridor_twin/autodiff/ops.hpp"
#include "corridor_twin/util/rng.hpp"

#include <string>
#include <vector>

namespace ctwin::nn {

enum class Activation { none, relu };

using ad::Parameter;
using ad::Tape;
using ad::Value;

/// Uniform in +-sqrt(6 / (fan_in + fan_out)).
ad::Tensor glorot_uniform(ad::Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng);

/// activation(x . W^T + b) with W [out x in].
class DenseLayer {
public:
    DenseLayer(std::string name, std::size_t in, std::size_t out, Activation act, Rng& rng);

    Value forward(Tape& tape, Value x);

    std::size_t in_width() const { return weight.value.dim(1); }
    std::size_t out_width() const { return weight.value.dim(0); }
    Activation activation() const { return act_; }
    std::vector<Parameter*> parameters() { return {&weight, &bias}; }

    Parameter weight;
    Parameter bias;

private:
    Activation act_;
};

/// Chain of dense layers; widths are validated at construction.
class MlpBlock {
public:
    MlpBlock(std::string name, std::vector<std::size_t> widths, Activation hidden, Activation last, Rng& rng);

    Value forward(Tape& tape, Value x);

    std::size_t in_width() const { return layers_.front().in_width(); }
    std::size_t out_width() const { return layers_.back().out_width(); }
    std::vector<DenseLayer>& layers() { return layers_; }
    std::vector<Parameter*> parameters();

private:
    std::vector<DenseLayer> layers_;
};

/// 1-D cross-correlation, kernels [out_channels x in_channels x width].
class TemporalConvLayer {
public:
    TemporalConvLayer(std::string name, std::size_t in_channels, std::size_t out_channels, std::size_t width,
                      Rng& rng, std::size_t stride = 1, std::size_t padding = 0);

    /// x is [channels x L] or [batch x channels x L]; the output keeps the input's rank.
    Value forward(Tape& tape, Value x);
    std::size_t output_length(std::size_t input_length) const;

    std::size_t stride() const { return stride_; }
    std::size_t padding() const { return padding_; }
    std::size_t kernel_width() const { return kernels.value.dim(2); }
    std::vector<Parameter*> parameters() { return {&kernels, &bias}; }

    Parameter kernels;
    Parameter bias;

private:
    std::size_t stride_;
    std::size_t padding_;
};

/// 1-D transposed convolution, kernels [in_channels x out_channels x width].
class TemporalDeconvLayer {
public:
    TemporalDeconvLayer(std::string name, std::size_t in_channels, std::size_t out_channels, std::size_t width,
                        Rng& rng, std::size_t stride = 1);

    Value forward(Tape& tape, Value x);
    std::size_t output_length(std::size_t input_length) const;

    std::size_t stride() const { return stride_; }
    std::size_t kernel_width() const { return kernels.value.dim(2); }
    std::vector<Parameter*> parameters() { return {&kernels, &bias}; }

    Parameter kernels;
    Parameter bias;

private:
    std::size_t stride_;
};

class TemporalPoolLayer {
public:
    TemporalPoolLayer(std::size_t window, std::size_t stride);

    Value forward(Tape& tape, Value x) const;
    std::size_t output_length(std::size_t input_length) const;

    std::size_t window() const { return window_; }
    std::size_t stride() const { return stride_; }

private:
    std::size_t window_;
    std::size_t stride_;
};

/// Single-head scaled dot-product self-attention over the token axis.
class SelfAttentionBlock {
public:
    SelfAttentionBlock(std::string name, std::size_t in_width, std::size_t model_width, Rng& rng);

    struct Output {
        Value values;   // [tokens x model_width] or [batch x tokens x model_width]
        Value weights;  // [batch x tokens x tokens]
    };

    Output forward_with_weights(Tape& tape, Value x);
    Value forward(Tape& tape, Value x) { return forward_with_weights(tape, x).values; }

    std::size_t model_width() const { return model_width_; }
    std::vector<Parameter*> parameters();

    DenseLayer query;
    DenseLayer key;
    DenseLayer value;

private:
    std::size_t model_width_;
};

}  // namespace ctwin::nn
