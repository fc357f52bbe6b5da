#include "sparseswin/regularizer.hpp"

#include "sparseswin/ops.hpp"

namespace sparseswin {

void RegConfig::validate() const {
    if (kind != "none" && kind != "l1" && kind != "l2") {
        throw ConfigError("reg.kind must be one of none, l1, l2; got \"" + kind + "\"");
    }
    if (lambda < 0) {
        throw ConfigError("reg.lambda must be >= 0, got " + std::to_string(lambda));
    }
}

template <typename T>
Tensor<T> penalty(const std::vector<Tensor<T>>& attn, const RegConfig& cfg) {
    cfg.validate();
    if (cfg.kind == "none") {
        return Tensor<T>::scalar(T(0));
    }
    Tensor<T> total;
    std::int64_t count = 0;
    for (const auto& a : attn) {
        count += a.numel();
        auto term = cfg.kind == "l1" ? sum_all(absval(a)) : sum_all(mul(a, a));
        total = total.defined() ? add(total, term) : term;
    }
    if (!total.defined()) {
        return Tensor<T>::scalar(T(0));
    }
    T factor = static_cast<T>(cfg.lambda);
    if (cfg.average && count > 0) {
        factor /= static_cast<T>(count);
    }
    return scale(total, factor);
}

template Tensor<float> penalty(const std::vector<Tensor<float>>&, const RegConfig&);
template Tensor<double> penalty(const std::vector<Tensor<double>>&, const RegConfig&);

} // namespace sparseswin
