#include "greenup/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "greenup/errors.hpp"

namespace greenup {

GradCheckResult finite_difference_check(const std::function<Tensor64()>& loss, std::vector<Tensor64> inputs,
                                        double h) {
    if (!(h > 0.0)) throw ContractError("finite_difference_check: step must be positive");
    for (auto& x : inputs) {
        x.set_requires_grad(true);
        x.zero_grad();
    }

    const Tensor64 out = loss();
    const double reference = out.item();
    if (loss().item() != reference) {
        throw OracleError("finite_difference_check: function is not deterministic");
    }
    out.backward();

    GradCheckResult result;
    for (auto& x : inputs) {
        // A leaf the loss never reached has gradient zero.
        std::vector<double> analytic(x.numel(), 0.0);
        if (x.has_grad()) std::copy(x.grad().begin(), x.grad().end(), analytic.begin());
        auto values = x.mutable_values();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double original = values[i];
            values[i] = original + h;
            const double plus = loss().item();
            values[i] = original - h;
            const double minus = loss().item();
            values[i] = original;
            const double numeric = (plus - minus) / (2.0 * h);
            const double scale = std::max({std::abs(analytic[i]), std::abs(numeric), kGradCheckFloor});
            const double err = std::abs(analytic[i] - numeric) / scale;
            result.max_error = std::max(result.max_error, err);
            ++result.checked;
        }
    }
    if (loss().item() != reference) {
        throw OracleError("finite_difference_check: function changed after probing");
    }
    return result;
}

double finite_difference_check(const std::function<Tensor64(const Tensor64&)>& f, const Tensor64& x, double h) {
    Tensor64 leaf = x.detach();
    return finite_difference_check([&] { return f(leaf); }, {leaf}, h).max_error;
}

}  // namespace greenup
