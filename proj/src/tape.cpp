#include "ssldetect/tape.hpp"

#include <cmath>

namespace ssldetect {

thread_local Tape* Tape::active_ = nullptr;

void backward(Tensor& loss) {
    check(loss.defined() && loss.numel() == 1, "backward requires a scalar loss, got shape ",
          loss.defined() ? shape_str(loss.shape()) : "<undefined>");
    Tape* tape = Tape::active();
    check(tape != nullptr, "backward called with no active tape");
    check(loss.requires_grad(), "loss does not depend on any tensor that requires grad");
    loss.ensure_grad();
    loss.grad()[0] += 1.0f;
    tape->replay_backward();
}

double grad_check(const std::function<Tensor(Tensor&)>& f, Tensor x, double h) {
    // Analytic pass.
    std::vector<float> analytic;
    {
        Tape::Scope scope;
        Tensor probe = x.clone();
        probe.set_requires_grad(true);
        Tensor out = f(probe);
        check(out.numel() == 1, "grad_check requires a scalar-valued function");
        check(std::isfinite(out.item()), "grad_check: non-finite function value");
        backward(out);
        probe.ensure_grad();
        analytic.assign(probe.grad().begin(), probe.grad().end());
    }

    auto eval = [&](Tensor& probe) {
        Tensor out = f(probe);
        double v = out.item();
        check(std::isfinite(v), "grad_check: non-finite function value during differencing");
        return v;
    };

    double max_rel = 0.0;
    Tensor probe = x.clone();
    probe.set_requires_grad(false);
    for (int64_t i = 0; i < probe.numel(); ++i) {
        float saved = probe.data()[i];
        probe.data()[i] = static_cast<float>(saved + h);
        double fp = eval(probe);
        probe.data()[i] = static_cast<float>(saved - h);
        double fm = eval(probe);
        probe.data()[i] = saved;
        double numeric = (fp - fm) / (2.0 * h);
        double rel = std::abs(analytic[static_cast<size_t>(i)] - numeric) /
                     std::max(1.0, std::abs(numeric));
        if (rel > max_rel) max_rel = rel;
    }
    return max_rel;
}

} // namespace ssldetect
