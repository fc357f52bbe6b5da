#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace sparseswin {

/// Shape/dimension violation; message carries the offending shapes.
class ShapeError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Invalid configuration (bad hyperparameter, indivisible extent, unknown key).
class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Dataset / file-format problem (truncated file, bad magic, label range).
class DataError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Non-finite value encountered where finite values are required.
class NumericError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

using Shape = std::vector<std::int64_t>;

std::int64_t numel_of(const Shape& shape);
std::vector<std::int64_t> row_major_strides(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Deterministic counter-based generator (splitmix64 core). State transitions
/// are pure 64-bit integer arithmetic, so the stream is identical across runs
/// for a given seed. Floating-point outputs are derived from the integer
/// stream with one draw per sample (no rejection loops).
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64();

    /// Uniform in [0, 1).
    double uniform();

    /// Uniform integer in [0, n), n >= 1.
    std::int64_t uniform_int(std::int64_t n);

    /// Standard normal via inverse-CDF transform of one uniform draw.
    double normal();

    /// Normal(0, stddev) truncated to [-2*stddev, 2*stddev], computed by
    /// restricting the inverse CDF to the central band (no rejection).
    double trunc_normal(double stddev);

    /// Derive an independent child stream; pure function of (state, stream).
    Rng fork(std::uint64_t stream) const;

    std::uint64_t state() const { return state_; }

    /// Order-sensitive combiner for deriving stream ids from several keys.
    static std::uint64_t mix(std::uint64_t a, std::uint64_t b);

  private:
    std::uint64_t state_;
};

template <typename T>
class Graph;

namespace detail {

template <typename T>
struct Storage {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad; // empty until first accumulation
    bool requires_grad = false;
    Graph<T>* tape = nullptr; // graph this tensor was produced on (non-leaf)

    void ensure_grad() {
        if (grad.size() != data.size()) {
            grad.assign(data.size(), T(0));
        }
    }
};

} // namespace detail

/// Dense row-major tensor handle with shared storage. Gradients live in an
/// optional same-shape buffer on the storage. Instantiated for float
/// (training) and double (gradient-check builds).
template <typename T>
class Tensor {
  public:
    using Scalar = T;

    Tensor() = default;

    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, T value);
    static Tensor from(Shape shape, std::vector<T> values);
    static Tensor scalar(T value);
    static Tensor randn(Shape shape, Rng& rng, T stddev = T(1));
    static Tensor trunc_normal(Shape shape, Rng& rng, T stddev);

    bool defined() const { return st_ != nullptr; }
    const Shape& shape() const { return st_->shape; }
    int rank() const { return static_cast<int>(st_->shape.size()); }
    std::int64_t dim(int i) const { return st_->shape[static_cast<std::size_t>(i)]; }
    std::int64_t numel() const { return static_cast<std::int64_t>(st_->data.size()); }

    std::span<const T> data() const { return st_->data; }
    /// Mutation is only legal between recorded forward passes (e.g. optimizer
    /// updates); recorded ops treat their inputs as immutable.
    std::span<T> mutable_data() { return st_->data; }

    bool requires_grad() const { return st_->requires_grad; }
    Tensor& set_requires_grad(bool flag) {
        st_->requires_grad = flag;
        return *this;
    }

    bool has_grad() const { return !st_->grad.empty(); }
    std::span<const T> grad() const { return st_->grad; }
    void zero_grad() {
        if (st_) {
            std::fill(st_->grad.begin(), st_->grad.end(), T(0));
        }
    }
    void drop_grad() {
        if (st_) {
            st_->grad.clear();
        }
    }

    T item() const {
        if (numel() != 1) {
            throw ShapeError("item() requires a scalar tensor, got shape " + shape_str(shape()));
        }
        return st_->data[0];
    }

    /// Deep copy detached from any graph; does not require grad.
    Tensor clone() const {
        Tensor out;
        out.st_ = std::make_shared<detail::Storage<T>>();
        out.st_->shape = st_->shape;
        out.st_->data = st_->data;
        return out;
    }

    template <typename U>
    Tensor<U> cast() const {
        std::vector<U> v(st_->data.size());
        for (std::size_t i = 0; i < v.size(); ++i) {
            v[i] = static_cast<U>(st_->data[i]);
        }
        return Tensor<U>::from(st_->shape, std::move(v));
    }

    const std::shared_ptr<detail::Storage<T>>& storage() const { return st_; }

  private:
    std::shared_ptr<detail::Storage<T>> st_;
};

/// Tape of executed differentiable operations, in execution order (hence
/// topologically sorted). backward() walks it exactly once in reverse; a
/// second backward without a fresh forward is an error.
template <typename T>
class Graph {
  public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;
    ~Graph() {
        if (tl_current == this) {
            tl_current = nullptr;
        }
    }

    /// RAII activation; ops record onto the innermost active graph.
    class Scope {
      public:
        explicit Scope(Graph& g) : prev_(tl_current) { tl_current = &g; }
        ~Scope() { tl_current = prev_; }
        Scope(const Scope&) = delete;
        Scope& operator=(const Scope&) = delete;

      private:
        Graph* prev_;
    };

    static Graph* current() { return tl_current; }

    void record(std::string_view op, const Tensor<T>& out, std::function<void()> backward_fn) {
        out.storage()->tape = this;
        nodes_.push_back(Node{std::string(op), out.storage(), std::move(backward_fn)});
    }

    void backward(const Tensor<T>& loss);

    bool consumed() const { return consumed_; }
    std::size_t size() const { return nodes_.size(); }

    /// Label and output of the first node whose output holds a non-finite
    /// value, or empty string if all recorded outputs are finite.
    std::string first_nonfinite() const;

  private:
    struct Node {
        std::string op;
        std::shared_ptr<detail::Storage<T>> out;
        std::function<void()> fn;
    };

    std::vector<Node> nodes_;
    bool consumed_ = false;

    inline static thread_local Graph* tl_current = nullptr;
};

/// True when gradients must flow through this tensor in the active graph.
template <typename T>
bool tracked(const Tensor<T>& t) {
    if (!t.defined()) {
        return false;
    }
    return t.requires_grad() || (Graph<T>::current() != nullptr && t.storage()->tape == Graph<T>::current());
}

template <typename T>
bool all_finite(std::span<const T> values);

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template class Graph<float>;
extern template class Graph<double>;
extern template bool all_finite<float>(std::span<const float>);
extern template bool all_finite<double>(std::span<const double>);

} // namespace sparseswin
