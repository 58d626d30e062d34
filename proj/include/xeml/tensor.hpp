#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace xeml {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

class Tape;

namespace detail {

// Leaves elements default-initialized on resize, so buffers that an op
// overwrites completely are not zero-filled first.
template <class T>
struct UninitAllocator : std::allocator<T> {
  template <class U>
  struct rebind {
    using other = UninitAllocator<U>;
  };
  UninitAllocator() = default;
  template <class U>
  UninitAllocator(const UninitAllocator<U>&) noexcept {}
  template <class U>
  void construct(U* p) noexcept {
    ::new (static_cast<void*>(p)) U;
  }
  template <class U, class... Args>
  void construct(U* p, Args&&... args) {
    ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
  }
};

using FloatBuffer = std::vector<float, UninitAllocator<float>>;

struct TensorImpl {
  Shape shape;
  FloatBuffer data;
  std::vector<float> grad;  // empty until first accumulation
  bool requires_grad = false;
  // Node handle: the tape this tensor was produced on, if any.
  Tape* tape = nullptr;
  bool stale = false;  // produced on a tape that has since been cleared or consumed
};

}  // namespace detail

/// Dense row-major float32 array with optional gradient storage.
///
/// Tensor is a shared handle: copies alias the same storage. Values are
/// treated as immutable once an op has consumed them; parameters are the
/// exception and are updated in place by the optimizer between tapes.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  /// Contents unspecified; for outputs that are fully overwritten.
  static Tensor uninitialized(Shape shape);
  static Tensor full(Shape shape, float value);
  static Tensor from(Shape shape, std::vector<float> values);
  static Tensor scalar(float value);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return impl_->shape.at(axis); }
  std::size_t numel() const { return impl_->data.size(); }

  std::span<const float> data() const { return impl_->data; }
  std::span<float> mutable_data() { return impl_->data; }
  float item() const;
  float operator[](std::size_t i) const { return impl_->data[i]; }

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool on);

  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const float> grad() const { return impl_->grad; }
  /// Gradient storage, allocated as zeros on first use.
  std::span<float> grad_storage() const;
  void zero_grad();
  void clear_grad() { impl_->grad.clear(); }

  /// True when this tensor is the output of an op recorded on a live tape.
  bool recorded() const { return impl_->tape != nullptr; }
  bool stale() const { return impl_->stale; }
  Tape* tape() const { return impl_->tape; }

  /// Deep copy of the values; no gradient, no tape linkage.
  Tensor clone() const;
  /// Copy with a new shape of the same element count (not differentiable).
  Tensor reshaped(Shape shape) const;

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}

  std::shared_ptr<detail::TensorImpl> impl_;

  friend class Tape;
};

/// Ordered record of differentiable operations for one forward pass.
///
/// Ops append records in execution order, so the list is topologically
/// sorted. backward() walks it in reverse and then consumes the tape: every
/// tensor produced on it becomes stale, and using a stale tensor as the input
/// of a recorded op (or calling backward on it again) raises TapeError.
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  ~Tape();

  /// Registers `output` as produced from `inputs`. `backward_fn` reads the
  /// output gradient and accumulates into input gradients.
  void record(const std::vector<Tensor>& inputs, Tensor& output, BackwardFn backward_fn);

  /// True when an op over `inputs` should be recorded here.
  bool wants(const std::vector<Tensor>& inputs) const;

  void backward(const Tensor& loss);
  void clear();

  std::size_t size() const { return records_.size(); }

 private:
  struct Record {
    std::vector<std::shared_ptr<detail::TensorImpl>> inputs;
    std::shared_ptr<detail::TensorImpl> output;
    BackwardFn backward_fn;
  };

  void check_input(const Tensor& t) const;

  std::vector<Record> records_;
};

/// Runs backward on the tape that produced `loss`.
void backward(const Tensor& loss);

/// Activation buffers are tens of megabytes. Serves them from the heap and
/// keeps freed memory there, so episodes reuse pages instead of faulting new
/// ones. Idempotent; no-op outside glibc.
void keep_large_buffers_on_heap();

}  // namespace xeml
