#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mvpl/tensorlab/tensor.hpp"

namespace mvpl::tensorlab {

class Tape;

/// Handle to a value recorded on a Tape.
struct Var {
    Tape* tape = nullptr;
    std::size_t id = 0;

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
};

/// Append-only record of operations. Node order is a topological order, so
/// the reverse pass simply walks the nodes backwards.
class Tape {
   public:
    /// Propagates the output gradient of one node into its inputs' gradients.
    using Backward = std::function<void(Tape&, const Tensor& grad_out)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var leaf(Tensor value, bool requires_grad = true) {
        nodes_.push_back(Node{"leaf", std::move(value), {}, requires_grad, {}, {}});
        return {this, nodes_.size() - 1};
    }

    Var constant(Tensor value) { return leaf(std::move(value), false); }

    /// Appends an op node. The backward rule is kept only when some input
    /// requires a gradient; otherwise saved intermediates are dropped at once.
    Var record(std::string_view op, Tensor value, std::initializer_list<Var> inputs, Backward backward) {
        Node node{op, std::move(value), {}, false, {}, {}};
        node.inputs.reserve(inputs.size());
        for (Var in : inputs) {
            check_owned(in);
            node.inputs.push_back(in.id);
            node.requires_grad = node.requires_grad || nodes_[in.id].requires_grad;
        }
        if (!node.value.all_finite()) {
            throw std::domain_error("tape: op '" + std::string(op) + "' produced a non-finite value");
        }
        if (node.requires_grad) node.backward = std::move(backward);
        nodes_.push_back(std::move(node));
        return {this, nodes_.size() - 1};
    }

    std::size_t size() const noexcept { return nodes_.size(); }
    std::string_view op(std::size_t id) const { return nodes_.at(id).op; }
    const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_.at(id).inputs; }

    bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
    const Tensor& value(Var v) const { return nodes_.at(v.id).value; }

    /// Gradient accumulated into `v` by the last backward pass (zeros if none reached it).
    Tensor grad(Var v) const {
        const Node& n = nodes_.at(v.id);
        return n.grad.empty() ? Tensor(n.value.shape(), 0.0) : n.grad;
    }

    /// Mutable gradient buffer, allocated on first use. Only valid for nodes
    /// that require a gradient.
    Tensor& grad_buffer(Var v) {
        Node& n = nodes_.at(v.id);
        if (!n.requires_grad) throw std::logic_error("tape: gradient requested for a constant");
        if (n.grad.empty()) n.grad = Tensor(n.value.shape(), 0.0);
        return n.grad;
    }

    /// Runs the reverse pass from a scalar output. Returns the ids of the
    /// nodes whose backward rule ran, in visiting order.
    std::vector<std::size_t> backward(Var output) {
        check_owned(output);
        if (value(output).size() != 1) {
            throw std::invalid_argument("tape: backward() needs a scalar output, got " +
                                        to_string(value(output).shape()));
        }
        return backward(output, Tensor(value(output).shape(), 1.0));
    }

    std::vector<std::size_t> backward(Var output, const Tensor& seed) {
        check_owned(output);
        if (seed.shape() != value(output).shape()) throw std::invalid_argument("tape: seed shape mismatch");
        std::vector<std::size_t> visited;
        if (!nodes_[output.id].requires_grad) return visited;
        for (Node& n : nodes_) n.grad = Tensor();
        nodes_[output.id].grad = seed;
        for (std::size_t i = output.id + 1; i-- > 0;) {
            Node& n = nodes_[i];
            if (!n.backward || n.grad.empty()) continue;
            n.backward(*this, n.grad);
            visited.push_back(i);
        }
        return visited;
    }

   private:
    struct Node {
        std::string_view op;
        Tensor value;
        Tensor grad;
        bool requires_grad;
        std::vector<std::size_t> inputs;
        Backward backward;
    };

    void check_owned(Var v) const {
        if (v.tape != this || v.id >= nodes_.size()) throw std::invalid_argument("tape: foreign or dangling var");
    }

    std::vector<Node> nodes_;
};

inline const Tensor& Var::value() const { return tape->value(*this); }

}  // namespace mvpl::tensorlab
