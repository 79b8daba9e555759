#pragma once

#include "corridor_twin/autodiff/tensor.hpp"

#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace ctwin::ad {

class Tape;

/// Handle to a value recorded on a tape. Cheap to copy; only meaningful while
/// the owning tape is alive.
struct Value {
    Tape* tape = nullptr;
    std::size_t index = 0;
    std::uint64_t tape_id = 0;

    const Tensor& val() const;
    const Shape& shape() const { return val().shape(); }
};

/// Vector-Jacobian product of one recorded primitive. `input_grads[i]` is null when
/// input i does not require a gradient; otherwise the callee adds into it.
using BackwardFn = std::function<void(const Tape& tape, const Tensor& out, const Tensor& out_grad,
                                      std::span<Tensor* const> input_grads)>;

/// Append-only record of primitive applications. Recording and backward are
/// single-threaded; use one tape per thread.
class Tape {
public:
    Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    std::uint64_t id() const noexcept { return id_; }
    std::size_t size() const noexcept { return nodes_.size(); }

    Value constant(Tensor t);
    Value variable(Tensor t);
    Value param(Parameter& p);

    const Tensor& value(const Value& v) const;
    const Tensor& grad(const Value& v) const;
    bool has_grad(const Value& v) const;
    bool requires_grad(const Value& v) const;
    const std::string& op_name(const Value& v) const;
    std::span<const std::size_t> inputs_of(const Value& v) const;

    /// Reverse sweep from a scalar loss. Populates gradients of every reachable
    /// value that requires one and accumulates into reachable parameters.
    void backward(const Value& loss);

    /// Used by primitives: validates inputs and appends a node.
    Value record(std::string op, Tensor out, std::span<const Value> inputs, BackwardFn fn);
    void check(const Value& v) const;

private:
    struct Node {
        std::string op;
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        bool grad_ready = false;
        std::vector<std::size_t> inputs;
        BackwardFn backward;
        Parameter* param = nullptr;
    };

    Value push(Node node);

    std::uint64_t id_;
    std::deque<Node> nodes_;  // deque: references from val() survive later recording
};

}  // namespace ctwin::ad
