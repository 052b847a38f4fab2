#pragma once

#include <functional>
#include <vector>

#include "ssldetect/tensor.hpp"

namespace ssldetect {

// Reverse-mode autodiff tape. Operations append their backward rule as they
// execute, so the recorded order is a topological order of the computation;
// backward() replays the rules once each, in reverse. The tape is rebuilt
// every training step and dropped afterwards, releasing all intermediate
// activations it kept alive.
//
// Usage:
//   Tape::Scope scope;          // activates a fresh tape
//   Tensor loss = ...;          // ops record onto it
//   backward(loss);             // fills .grad of every reachable
//                               // requires_grad tensor
class Tape {
public:
    using BackwardFn = std::function<void()>;

    void record(BackwardFn fn) { entries_.push_back(std::move(fn)); }
    size_t size() const { return entries_.size(); }

    void replay_backward() {
        for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
    }

    static Tape* active() { return active_; }

    // RAII activation. Scopes may nest; the previous tape is restored on exit.
    class Scope;

private:
    friend class Scope;
    static thread_local Tape* active_;
    std::vector<BackwardFn> entries_;
};

class Tape::Scope {
public:
    Scope() : prev_(Tape::active_) { Tape::active_ = &tape_; }
    ~Scope() { Tape::active_ = prev_; }
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;
    Tape& tape() { return tape_; }

private:
    Tape tape_;
    Tape* prev_;
};

// Seeds d(loss)/d(loss) = 1 and propagates gradients through the active
// tape. Gradients accumulate additively across multiple uses of a tensor.
void backward(Tensor& loss);

// Evaluates f's gradient at x by central differences (64-bit quotients) and
// compares against the analytic gradient from backward(). Returns the max
// over elements of |analytic - numeric| / max(1, |numeric|). f must be a
// pure scalar-valued function of x.
double grad_check(const std::function<Tensor(Tensor&)>& f, Tensor x, double h = 1e-3);

} // namespace ssldetect
