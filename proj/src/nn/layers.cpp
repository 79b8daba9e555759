#include "corridor_twin/nn/layers.hpp"

#include "corridor_twin/errors.hpp"

#include <cmath>

namespace ctwin::nn {

ad::Tensor glorot_uniform(ad::Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng)
{
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    ad::Tensor t(std::move(shape));
    for (auto& v : t.data())
        v = rng.uniform(-limit, limit);
    return t;
}

DenseLayer::DenseLayer(std::string name, std::size_t in, std::size_t out, Activation act, Rng& rng)
    : weight(name + ".weight", glorot_uniform({out, in}, in, out, rng)),
      bias(name + ".bias", ad::Tensor(ad::Shape{out})),
      act_(act)
{
}

Value DenseLayer::forward(Tape& tape, Value x)
{
    const auto& shape = x.shape();
    if (shape.size() != 2 || shape[1] != in_width())
        throw ContractError("dense '" + weight.name + "': expected [batch x " + std::to_string(in_width()) +
                            "], got " + ad::shape_string(shape));
    Value y = ad::add_bias(ad::matmul_bt(x, tape.param(weight)), tape.param(bias));
    return act_ == Activation::relu ? ad::relu(y) : y;
}

MlpBlock::MlpBlock(std::string name, std::vector<std::size_t> widths, Activation hidden, Activation last, Rng& rng)
{
    if (widths.size() < 2)
        throw ContractError("mlp '" + name + "': needs at least an input and an output width");
    for (std::size_t i = 0; i + 1 < widths.size(); ++i)
        layers_.emplace_back(name + "." + std::to_string(i), widths[i], widths[i + 1],
                             i + 2 == widths.size() ? last : hidden, rng);
}

Value MlpBlock::forward(Tape& tape, Value x)
{
    for (auto& layer : layers_)
        x = layer.forward(tape, x);
    return x;
}

std::vector<Parameter*> MlpBlock::parameters()
{
    std::vector<Parameter*> out;
    for (auto& layer : layers_)
        for (auto* p : layer.parameters())
            out.push_back(p);
    return out;
}

namespace {

// Lifts [C x L] to [1 x C x L]; returns whether it did.
bool lift_to_batch(Value& x)
{
    if (x.shape().size() == 2) {
        const auto& s = x.shape();
        x = ad::reshape(x, {1, s[0], s[1]});
        return true;
    }
    return false;
}

Value drop_batch(Value y)
{
    const auto& s = y.shape();
    return ad::reshape(y, {s[1], s[2]});
}

}  // namespace

TemporalConvLayer::TemporalConvLayer(std::string name, std::size_t in_channels, std::size_t out_channels,
                                     std::size_t width, Rng& rng, std::size_t stride, std::size_t padding)
    : kernels(name + ".kernels",
              glorot_uniform({out_channels, in_channels, width}, in_channels * width, out_channels * width, rng)),
      bias(name + ".bias", ad::Tensor(ad::Shape{out_channels})),
      stride_(stride),
      padding_(padding)
{
    if (stride == 0 || width == 0)
        throw ContractError("conv '" + name + "': stride and width must be positive");
}

std::size_t TemporalConvLayer::output_length(std::size_t input_length) const
{
    if (input_length + 2 * padding_ < kernel_width())
        throw ContractError("conv '" + kernels.name + "': input length " + std::to_string(input_length) +
                            " too short; minimum is " + std::to_string(kernel_width() - std::min(kernel_width(), 2 * padding_)));
    return (input_length + 2 * padding_ - kernel_width()) / stride_ + 1;
}

Value TemporalConvLayer::forward(Tape& tape, Value x)
{
    const bool lifted = lift_to_batch(x);
    output_length(x.shape().at(2));
    Value y = ad::conv1d(x, tape.param(kernels), tape.param(bias), stride_, padding_);
    return lifted ? drop_batch(y) : y;
}

TemporalDeconvLayer::TemporalDeconvLayer(std::string name, std::size_t in_channels, std::size_t out_channels,
                                         std::size_t width, Rng& rng, std::size_t stride)
    : kernels(name + ".kernels",
              glorot_uniform({in_channels, out_channels, width}, in_channels * width, out_channels * width, rng)),
      bias(name + ".bias", ad::Tensor(ad::Shape{out_channels})),
      stride_(stride)
{
    if (stride == 0 || width == 0)
        throw ContractError("deconv '" + name + "': stride and width must be positive");
}

std::size_t TemporalDeconvLayer::output_length(std::size_t input_length) const
{
    if (input_length == 0)
        throw ContractError("deconv '" + kernels.name + "': input length must be at least 1");
    return (input_length - 1) * stride_ + kernel_width();
}

Value TemporalDeconvLayer::forward(Tape& tape, Value x)
{
    const bool lifted = lift_to_batch(x);
    Value y = ad::conv_transpose1d(x, tape.param(kernels), tape.param(bias), stride_);
    return lifted ? drop_batch(y) : y;
}

TemporalPoolLayer::TemporalPoolLayer(std::size_t window, std::size_t stride) : window_(window), stride_(stride)
{
    if (window == 0 || stride == 0)
        throw ContractError("pool: window and stride must be positive");
}

std::size_t TemporalPoolLayer::output_length(std::size_t input_length) const
{
    if (input_length < window_)
        throw ContractError("pool: input length " + std::to_string(input_length) + " shorter than window " +
                            std::to_string(window_));
    return (input_length - window_) / stride_ + 1;
}

Value TemporalPoolLayer::forward(Tape&, Value x) const
{
    const bool lifted = lift_to_batch(x);
    Value y = ad::maxpool1d(x, window_, stride_);
    return lifted ? drop_batch(y) : y;
}

SelfAttentionBlock::SelfAttentionBlock(std::string name, std::size_t in_width, std::size_t model_width, Rng& rng)
    : query(name + ".query", in_width, model_width, Activation::none, rng),
      key(name + ".key", in_width, model_width, Activation::none, rng),
      value(name + ".value", in_width, model_width, Activation::none, rng),
      model_width_(model_width)
{
}

SelfAttentionBlock::Output SelfAttentionBlock::forward_with_weights(Tape& tape, Value x)
{
    const auto shape = x.shape();
    const bool batched = shape.size() == 3;
    if (shape.size() != 2 && !batched)
        throw ContractError("self-attention: expected [tokens x width] or [batch x tokens x width], got " +
                            ad::shape_string(shape));
    const std::size_t batch = batched ? shape[0] : 1;
    const std::size_t tokens = batched ? shape[1] : shape[0];
    const std::size_t width = shape.back();
    Value flat = ad::reshape(x, {batch * tokens, width});
    auto project = [&](DenseLayer& layer) {
        return ad::reshape(layer.forward(tape, flat), {batch, tokens, model_width_});
    };
    Value q = project(query);
    Value k = project(key);
    Value v = project(value);
    Value scores = ad::scale(ad::bmm(q, k, true), 1.0 / std::sqrt(static_cast<double>(model_width_)));
    Value weights = ad::softmax(scores, 2);
    Value out = ad::bmm(weights, v);
    if (!batched)
        out = ad::reshape(out, {tokens, model_width_});
    return {out, weights};
}

std::vector<Parameter*> SelfAttentionBlock::parameters()
{
    std::vector<Parameter*> out;
    for (auto* layer : {&query, &key, &value})
        for (auto* p : layer->parameters())
            out.push_back(p);
    return out;
}

}  // namespace ctwin::nn
