#include "corridor_twin/autodiff/tape.hpp"

#include "corridor_twin/errors.hpp"

#include <atomic>

namespace ctwin::ad {

namespace {
std::atomic<std::uint64_t> next_tape_id{1};
}

const Tensor& Value::val() const
{
    if (!tape)
        throw ContractError("value is detached from any tape");
    return tape->value(*this);
}

Tape::Tape() : id_(next_tape_id.fetch_add(1)) {}

Value Tape::push(Node node)
{
    nodes_.push_back(std::move(node));
    return Value{this, nodes_.size() - 1, id_};
}

Value Tape::constant(Tensor t)
{
    Node n;
    n.op = "constant";
    n.value = std::move(t);
    return push(std::move(n));
}

Value Tape::variable(Tensor t)
{
    Node n;
    n.op = "variable";
    n.value = std::move(t);
    n.requires_grad = true;
    return push(std::move(n));
}

Value Tape::param(Parameter& p)
{
    Node n;
    n.op = "parameter:" + p.name;
    n.value = p.value;
    n.requires_grad = true;
    n.param = &p;
    return push(std::move(n));
}

void Tape::check(const Value& v) const
{
    if (v.tape != this || v.tape_id != id_)
        throw ContractError("value belongs to a different or expired tape");
    if (v.index >= nodes_.size())
        throw ContractError("value index out of range for tape");
}

const Tensor& Tape::value(const Value& v) const
{
    check(v);
    return nodes_[v.index].value;
}

bool Tape::has_grad(const Value& v) const
{
    check(v);
    return nodes_[v.index].grad_ready;
}

const Tensor& Tape::grad(const Value& v) const
{
    check(v);
    const auto& n = nodes_[v.index];
    if (!n.grad_ready)
        throw ContractError("no gradient recorded for value produced by '" + n.op + "'");
    return n.grad;
}

bool Tape::requires_grad(const Value& v) const
{
    check(v);
    return nodes_[v.index].requires_grad;
}

const std::string& Tape::op_name(const Value& v) const
{
    check(v);
    return nodes_[v.index].op;
}

std::span<const std::size_t> Tape::inputs_of(const Value& v) const
{
    check(v);
    return nodes_[v.index].inputs;
}

Value Tape::record(std::string op, Tensor out, std::span<const Value> inputs, BackwardFn fn)
{
    Node n;
    n.op = std::move(op);
    n.value = std::move(out);
    n.inputs.reserve(inputs.size());
    for (const auto& in : inputs) {
        check(in);
        n.inputs.push_back(in.index);
        n.requires_grad = n.requires_grad || nodes_[in.index].requires_grad;
    }
    if (n.requires_grad)
        n.backward = std::move(fn);
    return push(std::move(n));
}

void Tape::backward(const Value& loss)
{
    check(loss);
    const std::size_t root = loss.index;
    if (nodes_[root].value.size() != 1)
        throw ContractError("backward requires a scalar loss, got shape " + shape_string(nodes_[root].value.shape()));

    std::vector<char> reachable(root + 1, 0);
    reachable[root] = 1;
    for (std::size_t i = root + 1; i-- > 0;) {
        if (!reachable[i] || !nodes_[i].requires_grad)
            continue;
        for (auto in : nodes_[i].inputs)
            reachable[in] = 1;
    }

    for (std::size_t i = 0; i <= root; ++i) {
        auto& n = nodes_[i];
        n.grad_ready = reachable[i] && n.requires_grad;
        if (n.grad_ready)
            n.grad = Tensor(n.value.shape());
    }
    if (!nodes_[root].requires_grad)
        return;
    nodes_[root].grad.fill(1.0);

    std::vector<Tensor*> input_grads;
    for (std::size_t i = root + 1; i-- > 0;) {
        auto& n = nodes_[i];
        if (!n.grad_ready)
            continue;
        if (n.backward) {
            input_grads.clear();
            for (auto in : n.inputs)
                input_grads.push_back(nodes_[in].grad_ready ? &nodes_[in].grad : nullptr);
            n.backward(*this, n.value, n.grad, input_grads);
        }
        if (n.param) {
            auto& p = *n.param;
            if (p.grad.shape() != p.value.shape())
                p.grad = Tensor(p.value.shape());
            auto dst = p.grad.data();
            auto src = n.grad.data();
            for (std::size_t j = 0; j < dst.size(); ++j)
                dst[j] += src[j];
            p.has_grad = true;
        }
    }
}

}  // namespace ctwin::ad
