#pragma once

#include <deque>
#include <functional>
#include <utility>
#include <vector>

#include "edsc/tensor.hpp"

namespace edsc {

template <typename T>
class Tape;

// Lightweight handle to a tape entry. Default-constructed vars are "absent",
// which the ops use for optional inputs (e.g. a model without masks).
template <typename T>
class Var {
public:
    Var() = default;

    bool valid() const { return tape_ != nullptr; }
    Tape<T>& tape() const { return *tape_; }
    const Tensor<T>& value() const;
    const Tensor<T>& grad() const;
    bool requires_grad() const;

    // Stable storage pointers, used by op backward closures.
    Tensor<T>* value_ptr() const;
    Tensor<T>* grad_ptr() const;

private:
    friend class Tape<T>;
    Var(Tape<T>* tape, int64_t id) : tape_(tape), id_(id) {}
    Tape<T>* tape_ = nullptr;
    int64_t id_ = -1;
};

// Reverse-mode tape. A graph is built per forward pass; ops append backward
// closures which replay in reverse on backward(). Parameter tensors can live
// outside the tape (external), so their gradients accumulate across tapes
// until explicitly zeroed.
template <typename T>
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Tape-owned leaf (copies the tensor in).
    Var<T> leaf(Tensor<T> value, bool requires_grad = true) {
        slots_.push_back(Slot{std::move(value), Tensor<T>(), nullptr, nullptr, requires_grad});
        Slot& s = slots_.back();
        s.value = &s.value_store;
        if (requires_grad) {
            s.grad_store = Tensor<T>(s.value->shape());
            s.grad = &s.grad_store;
        }
        return Var<T>(this, static_cast<int64_t>(slots_.size()) - 1);
    }

    Var<T> constant(Tensor<T> value) { return leaf(std::move(value), false); }

    // Leaf whose value and gradient live in caller-owned storage (model
    // parameters). The gradient buffer is accumulated into, never zeroed here.
    Var<T> external(Tensor<T>& value, Tensor<T>& grad) {
        if (!(grad.shape() == value.shape()))
            throw std::invalid_argument("external grad shape " + grad.shape().str() +
                                        " != value shape " + value.shape().str());
        slots_.push_back(Slot{Tensor<T>(), Tensor<T>(), &value, &grad, true});
        return Var<T>(this, static_cast<int64_t>(slots_.size()) - 1);
    }

    // Op results. The ops allocate the value; grad storage appears on demand.
    Var<T> intermediate(Tensor<T>&& value, bool requires_grad) {
        return leaf(std::move(value), requires_grad);
    }

    void push_node(std::function<void()> backward) { nodes_.push_back(std::move(backward)); }

    // Seeds d(root)/d(root) = 1 and replays the recorded closures in reverse.
    void backward(const Var<T>& root) {
        if (root.tape_ != this) throw std::invalid_argument("backward: var from another tape");
        if (ran_backward_)
            throw std::logic_error("backward already ran on this tape");
        ran_backward_ = true;
        Slot& s = slots_[root.id_];
        if (!s.requires_grad)
            throw std::invalid_argument("backward root does not require gradients");
        if (s.value->numel() != 1)
            throw std::invalid_argument("backward root must be scalar, got shape " +
                                        s.value->shape().str());
        (*s.grad)[0] += T(1);
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
    }

    int64_t num_nodes() const { return static_cast<int64_t>(nodes_.size()); }

private:
    friend class Var<T>;
    struct Slot {
        Tensor<T> value_store, grad_store;
        Tensor<T>*value, *grad;
        bool requires_grad;
    };
    std::deque<Slot> slots_;  // deque: slot addresses stay stable as ops append
    std::vector<std::function<void()>> nodes_;
    bool ran_backward_ = false;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
    return *tape_->slots_[id_].value;
}
template <typename T>
const Tensor<T>& Var<T>::grad() const {
    return *tape_->slots_[id_].grad;
}
template <typename T>
bool Var<T>::requires_grad() const {
    return tape_ && tape_->slots_[id_].requires_grad;
}
template <typename T>
Tensor<T>* Var<T>::value_ptr() const {
    return tape_->slots_[id_].value;
}
template <typename T>
Tensor<T>* Var<T>::grad_ptr() const {
    return tape_->slots_[id_].grad;
}

}  // namespace edsc
