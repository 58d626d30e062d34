#include "xeml/tensor.hpp"

#include <algorithm>
#include <mutex>
#include <sstream>

#include "xeml/errors.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace xeml {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i != 0) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0f); }

Tensor Tensor::uninitialized(Shape shape) {
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->data.resize(shape_numel(shape));
  impl->shape = std::move(shape);
  return Tensor(std::move(impl));
}

Tensor Tensor::full(Shape shape, float value) {
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->data.assign(shape_numel(shape), value);
  impl->shape = std::move(shape);
  return Tensor(std::move(impl));
}

Tensor Tensor::from(Shape shape, std::vector<float> values) {
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("tensor shape " + shape_string(shape) + " holds " +
                         std::to_string(shape_numel(shape)) + " elements, got " +
                         std::to_string(values.size()) + " values");
  }
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->data.assign(values.begin(), values.end());
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(float value) { return from({1}, {value}); }

float Tensor::item() const {
  if (numel() != 1) {
    throw ContractError("item() on tensor of shape " + shape_string(shape()));
  }
  return impl_->data[0];
}

Tensor& Tensor::set_requires_grad(bool on) {
  impl_->requires_grad = on;
  return *this;
}

std::span<float> Tensor::grad_storage() const {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0f);
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0f);
}

Tensor Tensor::clone() const {
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = impl_->shape;
  impl->data = impl_->data;
  return Tensor(std::move(impl));
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != numel()) {
    throw DimensionError("cannot reshape " + shape_string(impl_->shape) + " to " +
                         shape_string(shape));
  }
  Tensor out = clone();
  out.impl_->shape = std::move(shape);
  return out;
}

Tape::~Tape() { clear(); }

void Tape::check_input(const Tensor& t) const {
  if (t.stale()) {
    throw TapeError("input tensor " + shape_string(t.shape()) +
                    " belongs to a cleared or consumed tape");
  }
  if (t.recorded() && t.tape() != this) {
    throw TapeError("input tensor " + shape_string(t.shape()) + " was recorded on another tape");
  }
}

bool Tape::wants(const std::vector<Tensor>& inputs) const {
  bool any = false;
  for (const Tensor& t : inputs) {
    if (!t.requires_grad()) continue;
    check_input(t);
    any = true;
  }
  return any;
}

void Tape::record(const std::vector<Tensor>& inputs, Tensor& output, BackwardFn backward_fn) {
  Record rec;
  rec.inputs.reserve(inputs.size());
  for (const Tensor& t : inputs) {
    if (!t.requires_grad()) continue;
    check_input(t);
    rec.inputs.push_back(t.impl_);
  }
  output.impl_->requires_grad = true;
  output.impl_->tape = this;
  rec.output = output.impl_;
  rec.backward_fn = std::move(backward_fn);
  records_.push_back(std::move(rec));
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined()) throw ContractError("backward on an undefined tensor");
  if (loss.stale()) throw TapeError("backward on a tensor whose tape was already consumed");
  if (loss.numel() != 1) {
    throw ContractError("backward needs a scalar loss, got shape " + shape_string(loss.shape()));
  }
  if (loss.tape() != this) throw ContractError("loss was not recorded on this tape");

  loss.impl_->grad.assign(1, 1.0f);
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    if (it->output->grad.empty()) continue;  // not reachable from the loss
    for (auto& in : it->inputs) {
      if (in->grad.empty()) in->grad.assign(in->data.size(), 0.0f);
    }
    it->backward_fn();
  }
  // Every requires_grad input seen by the tape ends with a populated gradient,
  // zeros when the loss does not depend on it.
  for (auto& rec : records_) {
    for (auto& in : rec.inputs) {
      if (in->grad.empty()) in->grad.assign(in->data.size(), 0.0f);
    }
  }
  clear();
}

void Tape::clear() {
  for (auto& rec : records_) {
    rec.output->tape = nullptr;
    rec.output->stale = true;
  }
  records_.clear();
}

void backward(const Tensor& loss) {
  if (!loss.defined()) throw ContractError("backward on an undefined tensor");
  if (loss.stale()) throw TapeError("backward on a tensor whose tape was already consumed");
  if (!loss.recorded()) throw ContractError("backward on a tensor that is not tape-recorded");
  loss.tape()->backward(loss);
}

void keep_large_buffers_on_heap() {
#if defined(__GLIBC__)
  static std::once_flag once;
  std::call_once(once, [] {
    mallopt(M_MMAP_MAX, 0);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
  });
#endif
}

}  // namespace xeml
