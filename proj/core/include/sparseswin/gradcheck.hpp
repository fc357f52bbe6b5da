#pragma once

#include <functional>
#include <string>
#include <vector>

#include "sparseswin/tensor.hpp"

namespace sparseswin {

/// Central-difference gradient of a scalar-valued function at x:
/// g[i] = (f(x + h e_i) - f(x - h e_i)) / (2h). Evaluated outside any graph.
template <typename T>
Tensor<T> finite_diff_grad(const std::function<Tensor<T>(const Tensor<T>&)>& f, const Tensor<T>& x,
                           double h = 1e-5);

/// |a - b| / max(1e-6, |a|, |b|).
double grad_rel_err(double analytic, double numeric);

/// Worst relative error between backpropagated and central-difference
/// gradients over every element of every input to the scalar-valued forward.
/// perturb_first, when nonzero, is added to the first analytic gradient
/// element of inputs[0] (fault injection for the failure path). worst_input,
/// when given, receives the index of the input holding the worst element.
template <typename T>
double check_gradients(std::vector<Tensor<T>> inputs, const std::function<Tensor<T>()>& forward,
                       double h = 1e-5, double perturb_first = 0.0, int* worst_input = nullptr);

struct GradCheckResult {
    std::string name;
    std::string module; // tensor | backbone | sparta
    double max_rel_err = 0;
    int worst_input = 0; // index into the check's input list
    bool pass = false;
};

/// Named finite-difference checks spanning every differentiable op, the
/// attention/merge composites, and the SparTa block (t=4, e=8, heads=2,
/// loops=2). module filters to one group; "all" runs everything. Each check
/// runs in double precision over the given number of seeds and passes when
/// the worst relative error stays within tol. The environment variable
/// SPARSESWIN_GRADCHECK_PERTURB=<check name> injects a fault into that check.
std::vector<GradCheckResult> run_gradchecks(const std::string& module, int seeds = 10,
                                            double tol = 1e-4);

} // namespace sparseswin
