#include "sparseswin/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace sparseswin {

std::int64_t numel_of(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::int64_t{1}, std::multiplies<>());
}

std::vector<std::int64_t> row_major_strides(const Shape& shape) {
    std::vector<std::int64_t> strides(shape.size(), 1);
    for (int i = static_cast<int>(shape.size()) - 2; i >= 0; --i) {
        strides[static_cast<std::size_t>(i)] =
            strides[static_cast<std::size_t>(i) + 1] * shape[static_cast<std::size_t>(i) + 1];
    }
    return strides;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i > 0) {
            os << ", ";
        }
        os << shape[i];
    }
    os << ']';
    return os.str();
}

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Acklam's rational approximation of the standard normal inverse CDF
// (relative error below 1.15e-9 over (0,1)).
double inv_normal_cdf(double p) {
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,  -2.759285104469687e+02,
                               1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                               6.680131188771972e+01, -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                               -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                               3.754408661907416e+00};
    const double plow = 0.02425;
    const double phigh = 1.0 - plow;
    double q = 0.0;
    double r = 0.0;
    if (p < plow) {
        q = std::sqrt(-2.0 * std::log(p));
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    if (p <= phigh) {
        q = p - 0.5;
        r = q * q;
        return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
               (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    }
    q = std::sqrt(-2.0 * std::log(1.0 - p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
}

double normal_cdf(double x) {
    return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

} // namespace

std::uint64_t Rng::next_u64() {
    return splitmix64(state_);
}

double Rng::uniform() {
    // 53 mantissa bits -> [0, 1)
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::int64_t Rng::uniform_int(std::int64_t n) {
    if (n <= 0) {
        throw ConfigError("uniform_int requires n >= 1");
    }
    return static_cast<std::int64_t>(next_u64() % static_cast<std::uint64_t>(n));
}

double Rng::normal() {
    double u = uniform();
    // keep strictly inside (0, 1)
    u = std::min(std::max(u, 0x1.0p-53), 1.0 - 0x1.0p-53);
    return inv_normal_cdf(u);
}

double Rng::trunc_normal(double stddev) {
    static const double lo = normal_cdf(-2.0);
    static const double hi = normal_cdf(2.0);
    const double u = lo + uniform() * (hi - lo);
    return stddev * inv_normal_cdf(u);
}

Rng Rng::fork(std::uint64_t stream) const {
    return Rng(mix(state_, stream));
}

std::uint64_t Rng::mix(std::uint64_t a, std::uint64_t b) {
    std::uint64_t s = a ^ (0x9e3779b97f4a7c15ULL + (b << 6) + (b >> 2));
    std::uint64_t x = splitmix64(s);
    return x ^ b;
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape) {
    return full(std::move(shape), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value) {
    Tensor out;
    out.st_ = std::make_shared<detail::Storage<T>>();
    const auto n = numel_of(shape);
    if (n < 0) {
        throw ShapeError("negative extent in shape " + shape_str(shape));
    }
    out.st_->shape = std::move(shape);
    out.st_->data.assign(static_cast<std::size_t>(n), value);
    return out;
}

template <typename T>
Tensor<T> Tensor<T>::from(Shape shape, std::vector<T> values) {
    const auto n = numel_of(shape);
    if (n != static_cast<std::int64_t>(values.size())) {
        throw ShapeError("value count " + std::to_string(values.size()) + " does not match shape " +
                         shape_str(shape));
    }
    Tensor out;
    out.st_ = std::make_shared<detail::Storage<T>>();
    out.st_->shape = std::move(shape);
    out.st_->data = std::move(values);
    return out;
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value) {
    return from({1}, {value});
}

template <typename T>
Tensor<T> Tensor<T>::randn(Shape shape, Rng& rng, T stddev) {
    auto out = zeros(std::move(shape));
    for (auto& v : out.st_->data) {
        v = static_cast<T>(rng.normal()) * stddev;
    }
    return out;
}

template <typename T>
Tensor<T> Tensor<T>::trunc_normal(Shape shape, Rng& rng, T stddev) {
    auto out = zeros(std::move(shape));
    for (auto& v : out.st_->data) {
        v = static_cast<T>(rng.trunc_normal(static_cast<double>(stddev)));
    }
    return out;
}

template <typename T>
void Graph<T>::backward(const Tensor<T>& loss) {
    if (!loss.defined()) {
        throw ShapeError("backward() on undefined tensor");
    }
    if (loss.numel() != 1) {
        throw ShapeError("backward() requires a scalar loss, got shape " + shape_str(loss.shape()));
    }
    if (loss.storage()->tape != this) {
        throw ShapeError("backward() on a loss detached from this graph");
    }
    if (consumed_) {
        throw ShapeError("backward() called twice on the same graph");
    }
    consumed_ = true;
    loss.storage()->ensure_grad();
    loss.storage()->grad[0] = T(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        if (it->out->grad.empty()) {
            continue; // output never contributed to the loss
        }
        it->fn();
    }
}

template <typename T>
std::string Graph<T>::first_nonfinite() const {
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        if (!all_finite<T>(nodes_[i].out->data)) {
            return nodes_[i].op + " (node " + std::to_string(i) + ")";
        }
    }
    return {};
}

template <typename T>
bool all_finite(std::span<const T> values) {
    for (const T v : values) {
        if (!std::isfinite(static_cast<double>(v))) {
            return false;
        }
    }
    return true;
}

template class Tensor<float>;
template class Tensor<double>;
template class Graph<float>;
template class Graph<double>;
template bool all_finite<float>(std::span<const float>);
template bool all_finite<double>(std::span<const double>);

} // namespace sparseswin
