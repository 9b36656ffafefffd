#pragma once

#include <Eigen/Dense>
#include <array>
#include <cassert>
#include <cmath>
#include <initializer_list>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "unibci/common.hpp"

namespace unibci {

// Fixed 64-byte buffer alignment keeps Eigen's runtime-dispatched kernels on
// one code path regardless of heap state, so repeated runs stay bitwise
// identical.
template <typename T>
struct AlignedAlloc {
  using value_type = T;
  static constexpr std::size_t alignment = 64;

  AlignedAlloc() = default;
  template <typename U>
  AlignedAlloc(const AlignedAlloc<U>&) {}

  T* allocate(std::size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t{alignment}));
  }
  void deallocate(T* p, std::size_t) noexcept {
    ::operator delete(p, std::align_val_t{alignment});
  }
  template <typename U>
  bool operator==(const AlignedAlloc<U>&) const {
    return true;
  }
  template <typename U>
  bool operator!=(const AlignedAlloc<U>&) const {
    return false;
  }
};

// Dense extents, rank 1..4. A default-constructed Shape (rank 0) is the
// "no tensor" sentinel used for lazily allocated gradients.
class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<Index> ext) {
    init(std::vector<Index>(ext));
  }
  explicit Shape(const std::vector<Index>& ext) { init(ext); }

  int rank() const { return rank_; }
  Index extent(int i) const {
    assert(i >= 0 && i < rank_);
    return ext_[static_cast<std::size_t>(i)];
  }
  Index numel() const {
    Index n = 1;
    for (int i = 0; i < rank_; ++i) n *= ext_[static_cast<std::size_t>(i)];
    return rank_ == 0 ? 0 : n;
  }
  bool operator==(const Shape& o) const {
    if (rank_ != o.rank_) return false;
    for (int i = 0; i < rank_; ++i)
      if (ext_[static_cast<std::size_t>(i)] != o.ext_[static_cast<std::size_t>(i)]) return false;
    return true;
  }
  bool operator!=(const Shape& o) const { return !(*this == o); }

  std::string str() const {
    std::ostringstream os;
    os << "[";
    for (int i = 0; i < rank_; ++i) os << (i ? "," : "") << extent(i);
    os << "]";
    return os.str();
  }

  // Row-major strides.
  std::array<Index, 4> strides() const {
    std::array<Index, 4> s{0, 0, 0, 0};
    Index acc = 1;
    for (int i = rank_ - 1; i >= 0; --i) {
      s[static_cast<std::size_t>(i)] = acc;
      acc *= extent(i);
    }
    return s;
  }

 private:
  void init(const std::vector<Index>& ext) {
    if (ext.empty() || ext.size() > 4)
      fail(ErrorKind::dimension, "shape: rank must be 1..4, got " + std::to_string(ext.size()));
    rank_ = static_cast<int>(ext.size());
    for (int i = 0; i < rank_; ++i) {
      if (ext[static_cast<std::size_t>(i)] < 1)
        fail(ErrorKind::dimension, "shape: extent must be >= 1");
      ext_[static_cast<std::size_t>(i)] = ext[static_cast<std::size_t>(i)];
    }
  }

  std::array<Index, 4> ext_{0, 0, 0, 0};
  int rank_ = 0;
};

// Row-major dense array over a contiguous buffer. Eigen::Map views expose the
// buffer to Eigen kernels; Eigen is the only math backend underneath.
template <typename S>
class Tensor {
 public:
  using MatMap = Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using ConstMatMap =
      Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using ArrMap = Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>>;
  using ConstArrMap = Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>>;
  using Buffer = std::vector<S, AlignedAlloc<S>>;

  Tensor() = default;
  explicit Tensor(Shape shape)
      : shape_(shape), data_(static_cast<std::size_t>(shape.numel()), S(0)) {}
  Tensor(Shape shape, const std::vector<S>& data)
      : shape_(shape), data_(data.begin(), data.end()) {
    if (static_cast<Index>(data_.size()) != shape_.numel())
      fail(ErrorKind::dimension, "tensor: data length " + std::to_string(data_.size()) +
                                     " does not match shape " + shape_.str());
  }

  static Tensor zeros(Shape shape) { return Tensor(shape); }
  static Tensor full(Shape shape, S v) {
    Tensor t(shape);
    for (auto& x : t.data_) x = v;
    return t;
  }

  bool defined() const { return shape_.rank() > 0; }
  const Shape& shape() const { return shape_; }
  int rank() const { return shape_.rank(); }
  Index extent(int i) const { return shape_.extent(i); }
  Index numel() const { return shape_.numel(); }

  S* data() { return data_.data(); }
  const S* data() const { return data_.data(); }
  Buffer& buffer() { return data_; }
  const Buffer& buffer() const { return data_; }

  S& operator[](Index i) { return data_[static_cast<std::size_t>(i)]; }
  S operator[](Index i) const { return data_[static_cast<std::size_t>(i)]; }

  S& operator()(Index i) { return data_[static_cast<std::size_t>(i)]; }
  S& operator()(Index i, Index j) {
    return data_[static_cast<std::size_t>(i * shape_.extent(1) + j)];
  }
  S& operator()(Index i, Index j, Index k) {
    const auto st = shape_.strides();
    return data_[static_cast<std::size_t>(i * st[0] + j * st[1] + k)];
  }
  S& operator()(Index i, Index j, Index k, Index l) {
    const auto st = shape_.strides();
    return data_[static_cast<std::size_t>(i * st[0] + j * st[1] + k * st[2] + l)];
  }
  S operator()(Index i) const { return data_[static_cast<std::size_t>(i)]; }
  S operator()(Index i, Index j) const {
    return data_[static_cast<std::size_t>(i * shape_.extent(1) + j)];
  }
  S operator()(Index i, Index j, Index k) const {
    const auto st = shape_.strides();
    return data_[static_cast<std::size_t>(i * st[0] + j * st[1] + k)];
  }
  S operator()(Index i, Index j, Index k, Index l) const {
    const auto st = shape_.strides();
    return data_[static_cast<std::size_t>(i * st[0] + j * st[1] + k * st[2] + l)];
  }

  // View the buffer as a rows x cols row-major matrix; rows*cols must cover it.
  MatMap mat(Index rows, Index cols) {
    assert(rows * cols == numel());
    return MatMap(data(), rows, cols);
  }
  ConstMatMap mat(Index rows, Index cols) const {
    assert(rows * cols == numel());
    return ConstMatMap(data(), rows, cols);
  }
  // Rank-2 view with the tensor's own extents.
  MatMap mat() {
    assert(rank() == 2);
    return mat(extent(0), extent(1));
  }
  ConstMatMap mat() const {
    assert(rank() == 2);
    return mat(extent(0), extent(1));
  }
  ArrMap array() { return ArrMap(data(), numel()); }
  ConstArrMap array() const { return ConstArrMap(data(), numel()); }

  Tensor reshaped(Shape s) const {
    if (s.numel() != numel())
      fail(ErrorKind::dimension,
           "reshape: numel mismatch " + shape_.str() + " -> " + s.str());
    Tensor out = *this;
    out.shape_ = s;
    return out;
  }

  template <typename T>
  Tensor<T> cast() const {
    Tensor<T> out(shape_);
    for (Index i = 0; i < numel(); ++i)
      out[i] = static_cast<T>(data_[static_cast<std::size_t>(i)]);
    return out;
  }

 private:
  Shape shape_;
  Buffer data_;
};

// ---- forward kernels -------------------------------------------------------
// Shared by the autodiff tape (as op forwards) and by plain evaluation code.

template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.extent(1) != b.extent(0))
    fail(ErrorKind::dimension,
         "matmul: incompatible shapes " + a.shape().str() + " x " + b.shape().str());
  Tensor<S> out(Shape{a.extent(0), b.extent(1)});
  out.mat().noalias() = a.mat() * b.mat();
  return out;
}

// Batched matmul over the leading axis with optional transposes on the
// per-batch operands. transpose on both sides is unused and unsupported.
template <typename S>
Tensor<S> bmm(const Tensor<S>& a, const Tensor<S>& b, bool ta = false, bool tb = false) {
  if (a.rank() != 3 || b.rank() != 3 || a.extent(0) != b.extent(0))
    fail(ErrorKind::dimension,
         "bmm: incompatible shapes " + a.shape().str() + " x " + b.shape().str());
  if (ta && tb) fail(ErrorKind::contract, "bmm: both transpose flags unsupported");
  const Index B = a.extent(0);
  const Index am = ta ? a.extent(2) : a.extent(1);
  const Index ak = ta ? a.extent(1) : a.extent(2);
  const Index bk = tb ? b.extent(2) : b.extent(1);
  const Index bn = tb ? b.extent(1) : b.extent(2);
  if (ak != bk)
    fail(ErrorKind::dimension,
         "bmm: inner extent mismatch " + a.shape().str() + " x " + b.shape().str());
  Tensor<S> out(Shape{B, am, bn});
  const Index an = a.extent(1) * a.extent(2);
  const Index bnn = b.extent(1) * b.extent(2);
  for (Index i = 0; i < B; ++i) {
    typename Tensor<S>::ConstMatMap ma(a.data() + i * an, a.extent(1), a.extent(2));
    typename Tensor<S>::ConstMatMap mb(b.data() + i * bnn, b.extent(1), b.extent(2));
    typename Tensor<S>::MatMap mo(out.data() + i * am * bn, am, bn);
    if (ta)
      mo.noalias() = ma.transpose() * mb;
    else if (tb)
      mo.noalias() = ma * mb.transpose();
    else
      mo.noalias() = ma * mb;
  }
  return out;
}

inline std::vector<int> inverse_perm(const std::vector<int>& perm) {
  std::vector<int> inv(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) inv[static_cast<std::size_t>(perm[i])] = static_cast<int>(i);
  return inv;
}

template <typename S>
Tensor<S> transpose(const Tensor<S>& x, const std::vector<int>& perm) {
  const int r = x.rank();
  if (static_cast<int>(perm.size()) != r)
    fail(ErrorKind::dimension, "transpose: perm length != rank");
  std::vector<bool> seen(static_cast<std::size_t>(r), false);
  for (int p : perm) {
    if (p < 0 || p >= r || seen[static_cast<std::size_t>(p)])
      fail(ErrorKind::dimension, "transpose: invalid permutation");
    seen[static_cast<std::size_t>(p)] = true;
  }
  std::vector<Index> oext(static_cast<std::size_t>(r));
  for (int i = 0; i < r; ++i) oext[static_cast<std::size_t>(i)] = x.extent(perm[static_cast<std::size_t>(i)]);
  Tensor<S> out{Shape(oext)};
  const auto xst = x.shape().strides();
  const auto ost = out.shape().strides();
  // Walk the output in order; gather from the input through permuted strides.
  std::array<Index, 4> gst{0, 0, 0, 0};
  for (int i = 0; i < r; ++i) gst[static_cast<std::size_t>(i)] = xst[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
  std::array<Index, 4> ext{1, 1, 1, 1};
  for (int i = 0; i < r; ++i) ext[static_cast<std::size_t>(i)] = out.extent(i);
  Index o = 0;
  for (Index i0 = 0; i0 < ext[0]; ++i0)
    for (Index i1 = 0; i1 < ext[1]; ++i1)
      for (Index i2 = 0; i2 < ext[2]; ++i2)
        for (Index i3 = 0; i3 < ext[3]; ++i3)
          out[o++] = x[i0 * gst[0] + i1 * gst[1] + i2 * gst[2] + i3 * gst[3]];
  (void)ost;
  return out;
}

// Transpose rank-2.
template <typename S>
Tensor<S> transpose(const Tensor<S>& x) {
  return transpose(x, {1, 0});
}

// Rows with no finite entry have no defined softmax.
template <typename S>
Tensor<S> softmax_lastaxis(const Tensor<S>& x) {
  const Index d = x.extent(x.rank() - 1);
  const Index rows = x.numel() / d;
  Tensor<S> out(x.shape());
  for (Index r = 0; r < rows; ++r) {
    const S* in = x.data() + r * d;
    S* o = out.data() + r * d;
    S mx = -std::numeric_limits<S>::infinity();
    for (Index j = 0; j < d; ++j)
      if (in[j] > mx) mx = in[j];
    if (!std::isfinite(mx))
      fail(ErrorKind::degenerate, "softmax: row " + std::to_string(r) + " has no finite entry");
    S sum = 0;
    for (Index j = 0; j < d; ++j) {
      o[j] = std::exp(in[j] - mx);
      sum += o[j];
    }
    for (Index j = 0; j < d; ++j) o[j] /= sum;
  }
  return out;
}

// Normalizes the last axis; biased variance, eps inside the square root.
template <typename S>
Tensor<S> layernorm(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta,
                    S eps = S(1e-5)) {
  const Index d = x.extent(x.rank() - 1);
  if (gamma.rank() != 1 || gamma.extent(0) != d || beta.rank() != 1 || beta.extent(0) != d)
    fail(ErrorKind::dimension, "layernorm: gain/shift must be rank-1 of the last extent");
  const Index rows = x.numel() / d;
  Tensor<S> out(x.shape());
  for (Index r = 0; r < rows; ++r) {
    const S* in = x.data() + r * d;
    S* o = out.data() + r * d;
    S mu = 0;
    for (Index j = 0; j < d; ++j) mu += in[j];
    mu /= static_cast<S>(d);
    S var = 0;
    for (Index j = 0; j < d; ++j) var += (in[j] - mu) * (in[j] - mu);
    var /= static_cast<S>(d);
    const S inv = S(1) / std::sqrt(var + eps);
    for (Index j = 0; j < d; ++j) o[j] = (in[j] - mu) * inv * gamma[j] + beta[j];
  }
  return out;
}

// Mean over one axis; the axis is removed from the shape.
template <typename S>
Tensor<S> avgpool_axis(const Tensor<S>& x, int axis) {
  const int r = x.rank();
  if (axis < 0 || axis >= r) fail(ErrorKind::dimension, "avgpool: axis out of range");
  if (r == 1) fail(ErrorKind::dimension, "avgpool: cannot remove the only axis");
  Index pre = 1, post = 1;
  const Index n = x.extent(axis);
  for (int i = 0; i < axis; ++i) pre *= x.extent(i);
  for (int i = axis + 1; i < r; ++i) post *= x.extent(i);
  std::vector<Index> oext;
  for (int i = 0; i < r; ++i)
    if (i != axis) oext.push_back(x.extent(i));
  Tensor<S> out{Shape(oext)};
  for (Index p = 0; p < pre; ++p)
    for (Index q = 0; q < post; ++q) {
      S acc = 0;
      for (Index k = 0; k < n; ++k) acc += x[(p * n + k) * post + q];
      out[p * post + q] = acc / static_cast<S>(n);
    }
  return out;
}

template <typename S>
S gelu_scalar(S x) {
  return S(0.5) * x * (S(1) + std::erf(x * S(1.0 / std::numbers::sqrt2)));
}

template <typename S>
S gelu_grad_scalar(S x) {
  const S phi = std::exp(S(-0.5) * x * x) * S(1.0 / std::sqrt(2.0 * std::numbers::pi));
  return S(0.5) * (S(1) + std::erf(x * S(1.0 / std::numbers::sqrt2))) + x * phi;
}

template <typename S>
Tensor<S> gelu(const Tensor<S>& x) {
  Tensor<S> out(x.shape());
  for (Index i = 0; i < x.numel(); ++i) out[i] = gelu_scalar(x[i]);
  return out;
}

template <typename S>
bool all_finite(const Tensor<S>& x) {
  for (Index i = 0; i < x.numel(); ++i)
    if (!std::isfinite(x[i])) return false;
  return true;
}

}  // namespace unibci
