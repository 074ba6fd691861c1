#include "mdpar/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mdpar/errors.hpp"

namespace mdpar {

namespace {

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shapes " + shape_str(a.shape()) +
                     " and " + shape_str(b.shape()) + " differ");
  }
}

void check_rank(const char* op, const Tensor& t, int rank) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " +
                     std::to_string(rank) + ", got shape " +
                     shape_str(t.shape()));
  }
}

bool wants_grad(std::initializer_list<const Tensor*> inputs) {
  if (!grad_enabled()) return false;
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

// Attaches the autodiff record to `out`.
void record(Tensor& out, std::initializer_list<const Tensor*> inputs,
            std::function<void()> fn) {
  auto impl = out.impl();
  impl->requires_grad = true;
  for (const Tensor* t : inputs) impl->parents.push_back(t->impl());
  impl->backward_fn = std::move(fn);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape("add", a, b);
  std::vector<Scalar> out(a.numel());
  auto da = a.data(), db = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] + db[i];
  Tensor r = Tensor::from_data(a.shape(), std::move(out));
  if (wants_grad({&a, &b})) {
    auto* self = r.impl().get();
    auto* pa = a.impl().get();
    auto* pb = b.impl().get();
    record(r, {&a, &b}, [self, pa, pb] {
      const auto& g = self->pass_grad;
      if (pa->requires_grad) {
        auto ga = pa->pass_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (pb->requires_grad) {
        auto gb = pb->pass_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      }
    });
  }
  return r;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape("sub", a, b);
  std::vector<Scalar> out(a.numel());
  auto da = a.data(), db = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] - db[i];
  Tensor r = Tensor::from_data(a.shape(), std::move(out));
  if (wants_grad({&a, &b})) {
    auto* self = r.impl().get();
    auto* pa = a.impl().get();
    auto* pb = b.impl().get();
    record(r, {&a, &b}, [self, pa, pb] {
      const auto& g = self->pass_grad;
      if (pa->requires_grad) {
        auto ga = pa->pass_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (pb->requires_grad) {
        auto gb = pb->pass_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      }
    });
  }
  return r;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape("mul", a, b);
  std::vector<Scalar> out(a.numel());
  auto da = a.data(), db = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] * db[i];
  Tensor r = Tensor::from_data(a.shape(), std::move(out));
  if (wants_grad({&a, &b})) {
    auto* self = r.impl().get();
    auto* pa = a.impl().get();
    auto* pb = b.impl().get();
    record(r, {&a, &b}, [self, pa, pb] {
      const auto& g = self->pass_grad;
      if (pa->requires_grad) {
        auto ga = pa->pass_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * pb->data[i];
      }
      if (pb->requires_grad) {
        auto gb = pb->pass_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * pa->data[i];
      }
    });
  }
  return r;
}

Tensor scale(const Tensor& a, Scalar s) {
  std::vector<Scalar> out(a.numel());
  auto da = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] * s;
  Tensor r = Tensor::from_data(a.shape(), std::move(out));
  if (wants_grad({&a})) {
    auto* self = r.impl().get();
    auto* pa = a.impl().get();
    record(r, {&a}, [self, pa, s] {
      const auto& g = self->pass_grad;
      auto ga = pa->pass_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * s;
    });
  }
  return r;
}

Tensor add_rows(const Tensor& x, const Tensor& v) {
  check_rank("add_rows", x, 2);
  check_rank("add_rows", v, 1);
  const int rows = x.dim(0), cols = x.dim(1);
  if (v.dim(0) != cols) {
    throw ShapeError("add_rows: vector " + shape_str(v.shape()) +
                     " does not match columns of " + shape_str(x.shape()));
  }
  std::vector<Scalar> out(x.numel());
  auto dx = x.data(), dv = v.data();
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      out[static_cast<size_t>(r) * cols + c] =
          dx[static_cast<size_t>(r) * cols + c] + dv[c];
  Tensor r = Tensor::from_data(x.shape(), std::move(out));
  if (wants_grad({&x, &v})) {
    auto* self = r.impl().get();
    auto* px = x.impl().get();
    auto* pv = v.impl().get();
    record(r, {&x, &v}, [self, px, pv, rows, cols] {
      const auto& g = self->pass_grad;
      if (px->requires_grad) {
        auto gx = px->pass_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      }
      if (pv->requires_grad) {
        auto gv = pv->pass_buffer();
        for (int rr = 0; rr < rows; ++rr)
          for (int c = 0; c < cols; ++c)
            gv[c] += g[static_cast<size_t>(rr) * cols + c];
      }
    });
  }
  return r;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_rank("matmul", a, 2);
  check_rank("matmul", b, 2);
  const int m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
  if (k != k2) {
    throw ShapeError("matmul: inner dimensions of " + shape_str(a.shape()) +
                     " and " + shape_str(b.shape()) + " do not match");
  }
  std::vector<Scalar> out(static_cast<size_t>(m) * n, Scalar{0});
  auto da = a.data(), db = b.data();
  for (int i = 0; i < m; ++i) {
    for (int p = 0; p < k; ++p) {
      const Scalar av = da[static_cast<size_t>(i) * k + p];
      if (av == Scalar{0}) continue;
      const std::size_t brow = static_cast<size_t>(p) * n;
      const std::size_t orow = static_cast<size_t>(i) * n;
      for (int j = 0; j < n; ++j) out[orow + j] += av * db[brow + j];
    }
  }
  Tensor r = Tensor::from_data({m, n}, std::move(out));
  if (wants_grad({&a, &b})) {
    auto* self = r.impl().get();
    auto* pa = a.impl().get();
    auto* pb = b.impl().get();
    record(r, {&a, &b}, [self, pa, pb, m, k, n] {
      const auto& g = self->pass_grad;
      if (pa->requires_grad) {  // dA = G * B^T
        auto ga = pa->pass_buffer();
        for (int i = 0; i < m; ++i)
          for (int p = 0; p < k; ++p) {
            Scalar acc{0};
            for (int j = 0; j < n; ++j)
              acc += g[static_cast<size_t>(i) * n + j] *
                     pb->data[static_cast<size_t>(p) * n + j];
            ga[static_cast<size_t>(i) * k + p] += acc;
          }
      }
      if (pb->requires_grad) {  // dB = A^T * G
        auto gb = pb->pass_buffer();
        for (int p = 0; p < k; ++p)
          for (int j = 0; j < n; ++j) {
            Scalar acc{0};
            for (int i = 0; i < m; ++i)
              acc += pa->data[static_cast<size_t>(i) * k + p] *
                     g[static_cast<size_t>(i) * n + j];
            gb[static_cast<size_t>(p) * n + j] += acc;
          }
      }
    });
  }
  return r;
}

Tensor transpose(const Tensor& a) {
  check_rank("transpose", a, 2);
  const int m = a.dim(0), n = a.dim(1);
  std::vector<Scalar> out(a.numel());
  auto da = a.data();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      out[static_cast<size_t>(j) * m + i] = da[static_cast<size_t>(i) * n + j];
  Tensor r = Tensor::from_data({n, m}, std::move(out));
  if (wants_grad({&a})) {
    auto* self = r.impl().get();
    auto* pa = a.impl().get();
    record(r, {&a}, [self, pa, m, n] {
      const auto& g = self->pass_grad;
      auto ga = pa->pass_buffer();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
          ga[static_cast<size_t>(i) * n + j] +=
              g[static_cast<size_t>(j) * m + i];
    });
  }
  return r;
}

Tensor reshape(const Tensor& x, std::vector<int> shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<size_t>(std::max(d, 0));
  if (n != x.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                     shape_str(shape));
  }
  std::vector<Scalar> out(x.data().begin(), x.data().end());
  Tensor r = Tensor::from_data(std::move(shape), std::move(out));
  if (wants_grad({&x})) {
    auto* self = r.impl().get();
    auto* px = x.impl().get();
    record(r, {&x}, [self, px] {
      const auto& g = self->pass_grad;
      auto gx = px->pass_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
  }
  return r;
}

namespace {

Tensor concat_axis(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: empty part list");
  for (const auto& p : parts) check_rank("concat", p, 2);
  const int fixed = axis == 0 ? 1 : 0;
  const int fixed_dim = parts[0].dim(fixed);
  int total = 0;
  for (const auto& p : parts) {
    if (p.dim(fixed) != fixed_dim) {
      throw ShapeError("concat: incompatible shapes " +
                       shape_str(parts[0].shape()) + " and " +
                       shape_str(p.shape()));
    }
    total += p.dim(axis);
  }
  const int rows = axis == 0 ? total : fixed_dim;
  const int cols = axis == 0 ? fixed_dim : total;
  std::vector<Scalar> out(static_cast<size_t>(rows) * cols);
  int cursor = 0;
  for (const auto& p : parts) {
    auto dp = p.data();
    const int pr = p.dim(0), pc = p.dim(1);
    for (int i = 0; i < pr; ++i)
      for (int j = 0; j < pc; ++j) {
        const int oi = axis == 0 ? cursor + i : i;
        const int oj = axis == 0 ? j : cursor + j;
        out[static_cast<size_t>(oi) * cols + oj] =
            dp[static_cast<size_t>(i) * pc + j];
      }
    cursor += p.dim(axis);
  }
  Tensor r = Tensor::from_data({rows, cols}, std::move(out));
  bool grad = false;
  for (const auto& p : parts) grad |= p.requires_grad();
  if (grad_enabled() && grad) {
    auto impl = r.impl();
    impl->requires_grad = true;
    std::vector<TensorImpl*> raw;
    for (const auto& p : parts) {
      impl->parents.push_back(p.impl());
      raw.push_back(p.impl().get());
    }
    auto* self = impl.get();
    impl->backward_fn = [self, raw, axis, cols] {
      const auto& g = self->pass_grad;
      int cursor2 = 0;
      for (auto* p : raw) {
        const int pr = p->shape[0], pc = p->shape[1];
        if (p->requires_grad) {
          auto gp = p->pass_buffer();
          for (int i = 0; i < pr; ++i)
            for (int j = 0; j < pc; ++j) {
              const int oi = axis == 0 ? cursor2 + i : i;
              const int oj = axis == 0 ? j : cursor2 + j;
              gp[static_cast<size_t>(i) * pc + j] +=
                  g[static_cast<size_t>(oi) * cols + oj];
            }
        }
        cursor2 += axis == 0 ? pr : pc;
      }
    };
  }
  return r;
}

Tensor slice_axis(const Tensor& x, int axis, int offset, int count) {
  check_rank("slice", x, 2);
  const int rows = x.dim(0), cols = x.dim(1);
  const int extent = axis == 0 ? rows : cols;
  if (offset < 0 || count < 1 || offset + count > extent) {
    throw ShapeError("slice: range [" + std::to_string(offset) + ", " +
                     std::to_string(offset + count) + ") out of bounds for " +
                     shape_str(x.shape()));
  }
  const int orows = axis == 0 ? count : rows;
  const int ocols = axis == 0 ? cols : count;
  std::vector<Scalar> out(static_cast<size_t>(orows) * ocols);
  auto dx = x.data();
  for (int i = 0; i < orows; ++i)
    for (int j = 0; j < ocols; ++j) {
      const int si = axis == 0 ? offset + i : i;
      const int sj = axis == 0 ? j : offset + j;
      out[static_cast<size_t>(i) * ocols + j] =
          dx[static_cast<size_t>(si) * cols + sj];
    }
  Tensor r = Tensor::from_data({orows, ocols}, std::move(out));
  if (wants_grad({&x})) {
    auto* self = r.impl().get();
    auto* px = x.impl().get();
    record(r, {&x}, [self, px, axis, offset, orows, ocols, cols] {
      const auto& g = self->pass_grad;
      auto gx = px->pass_buffer();
      for (int i = 0; i < orows; ++i)
        for (int j = 0; j < ocols; ++j) {
          const int si = axis == 0 ? offset + i : i;
          const int sj = axis == 0 ? j : offset + j;
          gx[static_cast<size_t>(si) * cols + sj] +=
              g[static_cast<size_t>(i) * ocols + j];
        }
    });
  }
  return r;
}

}  // namespace

Tensor concat_rows(const std::vector<Tensor>& parts) {
  return concat_axis(parts, 0);
}
Tensor concat_cols(const std::vector<Tensor>& parts) {
  return concat_axis(parts, 1);
}
Tensor slice_rows(const Tensor& x, int offset, int count) {
  return slice_axis(x, 0, offset, count);
}
Tensor slice_cols(const Tensor& x, int offset, int count) {
  return slice_axis(x, 1, offset, count);
}

Tensor stack0(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("stack0: empty part list");
  const auto& base = parts[0].shape();
  for (const auto& p : parts) {
    if (p.shape() != base) {
      throw ShapeError("stack0: mixed shapes " + shape_str(base) + " and " +
                       shape_str(p.shape()));
    }
  }
  std::vector<int> shape;
  shape.push_back(static_cast<int>(parts.size()));
  shape.insert(shape.end(), base.begin(), base.end());
  const std::size_t slab = parts[0].numel();
  std::vector<Scalar> out(slab * parts.size());
  for (std::size_t k = 0; k < parts.size(); ++k) {
    auto dp = parts[k].data();
    std::copy(dp.begin(), dp.end(), out.begin() + k * slab);
  }
  Tensor r = Tensor::from_data(std::move(shape), std::move(out));
  bool grad = false;
  for (const auto& p : parts) grad |= p.requires_grad();
  if (grad_enabled() && grad) {
    auto impl = r.impl();
    impl->requires_grad = true;
    std::vector<TensorImpl*> raw;
    for (const auto& p : parts) {
      impl->parents.push_back(p.impl());
      raw.push_back(p.impl().get());
    }
    auto* self = impl.get();
    impl->backward_fn = [self, raw, slab] {
      const auto& g = self->pass_grad;
      for (std::size_t k = 0; k < raw.size(); ++k) {
        if (!raw[k]->requires_grad) continue;
        auto gp = raw[k]->pass_buffer();
        for (std::size_t i = 0; i < slab; ++i) gp[i] += g[k * slab + i];
      }
    };
  }
  return r;
}

Tensor softmax_rows(const Tensor& x) {
  check_rank("softmax_rows", x, 2);
  const int rows = x.dim(0), cols = x.dim(1);
  std::vector<Scalar> out(x.numel());
  auto dx = x.data();
  for (int r = 0; r < rows; ++r) {
    const std::size_t base = static_cast<size_t>(r) * cols;
    Scalar mx = dx[base];
    for (int c = 1; c < cols; ++c) mx = std::max(mx, dx[base + c]);
    Scalar denom{0};
    for (int c = 0; c < cols; ++c) {
      out[base + c] = std::exp(dx[base + c] - mx);
      denom += out[base + c];
    }
    for (int c = 0; c < cols; ++c) out[base + c] /= denom;
  }
  Tensor r = Tensor::from_data(x.shape(), std::move(out));
  if (wants_grad({&x})) {
    auto* self = r.impl().get();
    auto* px = x.impl().get();
    record(r, {&x}, [self, px, rows, cols] {
      const auto& g = self->pass_grad;
      const auto& p = self->data;
      auto gx = px->pass_buffer();
      for (int rr = 0; rr < rows; ++rr) {
        const std::size_t base = static_cast<size_t>(rr) * cols;
        Scalar dot{0};
        for (int c = 0; c < cols; ++c) dot += g[base + c] * p[base + c];
        for (int c = 0; c < cols; ++c)
          gx[base + c] += p[base + c] * (g[base + c] - dot);
      }
    });
  }
  return r;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  Scalar eps) {
  check_rank("layer_norm", x, 2);
  check_rank("layer_norm", gain, 1);
  check_rank("layer_norm", bias, 1);
  const int rows = x.dim(0), cols = x.dim(1);
  if (gain.dim(0) != cols || bias.dim(0) != cols) {
    throw ShapeError("layer_norm: gain " + shape_str(gain.shape()) +
                     " / bias " + shape_str(bias.shape()) +
                     " do not match last dimension of " +
                     shape_str(x.shape()));
  }
  if (!(eps > Scalar{0})) throw ContractError("layer_norm: eps must be > 0");
  std::vector<Scalar> out(x.numel());
  std::vector<Scalar> inv_std(rows);
  std::vector<Scalar> xhat(x.numel());
  auto dx = x.data();
  auto dg = gain.data(), db = bias.data();
  for (int r = 0; r < rows; ++r) {
    const std::size_t base = static_cast<size_t>(r) * cols;
    Scalar mean{0};
    for (int c = 0; c < cols; ++c) mean += dx[base + c];
    mean /= static_cast<Scalar>(cols);
    Scalar var{0};
    for (int c = 0; c < cols; ++c) {
      const Scalar d = dx[base + c] - mean;
      var += d * d;
    }
    var /= static_cast<Scalar>(cols);
    const Scalar inv = Scalar{1} / std::sqrt(var + eps);
    inv_std[r] = inv;
    for (int c = 0; c < cols; ++c) {
      xhat[base + c] = (dx[base + c] - mean) * inv;
      out[base + c] = dg[c] * xhat[base + c] + db[c];
    }
  }
  Tensor r = Tensor::from_data(x.shape(), std::move(out));
  if (wants_grad({&x, &gain, &bias})) {
    auto* self = r.impl().get();
    auto* px = x.impl().get();
    auto* pg = gain.impl().get();
    auto* pb = bias.impl().get();
    record(r, {&x, &gain, &bias},
           [self, px, pg, pb, rows, cols, inv_std = std::move(inv_std),
            xhat = std::move(xhat)] {
             const auto& g = self->pass_grad;
             for (int rr = 0; rr < rows; ++rr) {
               const std::size_t base = static_cast<size_t>(rr) * cols;
               if (pg->requires_grad) {
                 auto gg = pg->pass_buffer();
                 for (int c = 0; c < cols; ++c)
                   gg[c] += g[base + c] * xhat[base + c];
               }
               if (pb->requires_grad) {
                 auto gb = pb->pass_buffer();
                 for (int c = 0; c < cols; ++c) gb[c] += g[base + c];
               }
               if (px->requires_grad) {
                 auto gx = px->pass_buffer();
                 Scalar sum_gy{0}, sum_gy_xhat{0};
                 for (int c = 0; c < cols; ++c) {
                   const Scalar gy = g[base + c] * pg->data[c];
                   sum_gy += gy;
                   sum_gy_xhat += gy * xhat[base + c];
                 }
                 const Scalar n = static_cast<Scalar>(cols);
                 for (int c = 0; c < cols; ++c) {
                   const Scalar gy = g[base + c] * pg->data[c];
                   gx[base + c] += inv_std[rr] * (gy - sum_gy / n -
                                                  xhat[base + c] *
                                                      sum_gy_xhat / n);
                 }
               }
             }
           });
  }
  return r;
}

Tensor gelu(const Tensor& x) {
  std::vector<Scalar> out(x.numel());
  auto dx = x.data();
  constexpr Scalar inv_sqrt2 = Scalar{0.70710678118654752440};
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = Scalar{0.5} * dx[i] *
             (Scalar{1} + static_cast<Scalar>(std::erf(dx[i] * inv_sqrt2)));
  }
  Tensor r = Tensor::from_data(x.shape(), std::move(out));
  if (wants_grad({&x})) {
    auto* self = r.impl().get();
    auto* px = x.impl().get();
    record(r, {&x}, [self, px] {
      const auto& g = self->pass_grad;
      auto gx = px->pass_buffer();
      constexpr Scalar inv_sqrt2pi = Scalar{0.39894228040143267794};
      constexpr Scalar is2 = Scalar{0.70710678118654752440};
      for (std::size_t i = 0; i < g.size(); ++i) {
        const Scalar v = px->data[i];
        const Scalar cdf =
            Scalar{0.5} * (Scalar{1} + static_cast<Scalar>(std::erf(v * is2)));
        const Scalar pdf =
            inv_sqrt2pi * static_cast<Scalar>(std::exp(-Scalar{0.5} * v * v));
        gx[i] += g[i] * (cdf + v * pdf);
      }
    });
  }
  return r;
}

Tensor sigmoid(const Tensor& x) {
  std::vector<Scalar> out(x.numel());
  auto dx = x.data();
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = Scalar{1} / (Scalar{1} + std::exp(-dx[i]));
  Tensor r = Tensor::from_data(x.shape(), std::move(out));
  if (wants_grad({&x})) {
    auto* self = r.impl().get();
    auto* px = x.impl().get();
    record(r, {&x}, [self, px] {
      const auto& g = self->pass_grad;
      auto gx = px->pass_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) {
        const Scalar p = self->data[i];
        gx[i] += g[i] * p * (Scalar{1} - p);
      }
    });
  }
  return r;
}

Tensor sum_all(const Tensor& x) {
  Scalar acc{0};
  for (Scalar v : x.data()) acc += v;
  Tensor r = Tensor::from_data({1}, {acc});
  if (wants_grad({&x})) {
    auto* self = r.impl().get();
    auto* px = x.impl().get();
    record(r, {&x}, [self, px] {
      const Scalar g = self->pass_grad[0];
      auto gx = px->pass_buffer();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
    });
  }
  return r;
}

Tensor rowwise_dot(const Tensor& a, const Tensor& b) {
  check_rank("rowwise_dot", a, 2);
  check_same_shape("rowwise_dot", a, b);
  const int rows = a.dim(0), cols = a.dim(1);
  std::vector<Scalar> out(static_cast<size_t>(rows));
  auto da = a.data(), db = b.data();
  for (int r = 0; r < rows; ++r) {
    Scalar acc{0};
    const std::size_t base = static_cast<size_t>(r) * cols;
    for (int c = 0; c < cols; ++c) acc += da[base + c] * db[base + c];
    out[r] = acc;
  }
  Tensor r = Tensor::from_data({rows}, std::move(out));
  if (wants_grad({&a, &b})) {
    auto* self = r.impl().get();
    auto* pa = a.impl().get();
    auto* pb = b.impl().get();
    record(r, {&a, &b}, [self, pa, pb, rows, cols] {
      const auto& g = self->pass_grad;
      for (int rr = 0; rr < rows; ++rr) {
        const std::size_t base = static_cast<size_t>(rr) * cols;
        if (pa->requires_grad) {
          auto ga = pa->pass_buffer();
          for (int c = 0; c < cols; ++c)
            ga[base + c] += g[rr] * pb->data[base + c];
        }
        if (pb->requires_grad) {
          auto gb = pb->pass_buffer();
          for (int c = 0; c < cols; ++c)
            gb[base + c] += g[rr] * pa->data[base + c];
        }
      }
    });
  }
  return r;
}

Tensor batchnorm_train(const Tensor& x, const Tensor& gain, const Tensor& bias,
                       Scalar eps, std::vector<Scalar>* batch_mean,
                       std::vector<Scalar>* batch_var) {
  check_rank("batchnorm_train", x, 2);
  const int batch = x.dim(0), channels = x.dim(1);
  if (gain.dim(0) != channels || bias.dim(0) != channels) {
    throw ShapeError("batchnorm_train: gain/bias do not match " +
                     shape_str(x.shape()));
  }
  if (batch < 2) {
    throw ContractError(
        "batchnorm_train: batch size must be >= 2 for batch statistics, got " +
        std::to_string(batch));
  }
  std::vector<Scalar> mean(channels, Scalar{0}), var(channels, Scalar{0});
  auto dx = x.data();
  for (int b = 0; b < batch; ++b)
    for (int c = 0; c < channels; ++c)
      mean[c] += dx[static_cast<size_t>(b) * channels + c];
  for (int c = 0; c < channels; ++c) mean[c] /= static_cast<Scalar>(batch);
  for (int b = 0; b < batch; ++b)
    for (int c = 0; c < channels; ++c) {
      const Scalar d = dx[static_cast<size_t>(b) * channels + c] - mean[c];
      var[c] += d * d;
    }
  for (int c = 0; c < channels; ++c) var[c] /= static_cast<Scalar>(batch);

  std::vector<Scalar> inv_std(channels);
  for (int c = 0; c < channels; ++c)
    inv_std[c] = Scalar{1} / std::sqrt(var[c] + eps);

  std::vector<Scalar> xhat(x.numel()), out(x.numel());
  auto dg = gain.data(), db = bias.data();
  for (int b = 0; b < batch; ++b)
    for (int c = 0; c < channels; ++c) {
      const std::size_t i = static_cast<size_t>(b) * channels + c;
      xhat[i] = (dx[i] - mean[c]) * inv_std[c];
      out[i] = dg[c] * xhat[i] + db[c];
    }
  if (batch_mean) *batch_mean = mean;
  if (batch_var) *batch_var = var;

  Tensor r = Tensor::from_data(x.shape(), std::move(out));
  if (wants_grad({&x, &gain, &bias})) {
    auto* self = r.impl().get();
    auto* px = x.impl().get();
    auto* pg = gain.impl().get();
    auto* pb = bias.impl().get();
    record(r, {&x, &gain, &bias},
           [self, px, pg, pb, batch, channels, inv_std = std::move(inv_std),
            xhat = std::move(xhat)] {
             const auto& g = self->pass_grad;
             const Scalar n = static_cast<Scalar>(batch);
             for (int c = 0; c < channels; ++c) {
               Scalar sum_g{0}, sum_g_xhat{0};
               for (int b = 0; b < batch; ++b) {
                 const std::size_t i = static_cast<size_t>(b) * channels + c;
                 sum_g += g[i];
                 sum_g_xhat += g[i] * xhat[i];
               }
               if (pg->requires_grad) pg->pass_buffer()[c] += sum_g_xhat;
               if (pb->requires_grad) pb->pass_buffer()[c] += sum_g;
               if (px->requires_grad) {
                 auto gx = px->pass_buffer();
                 const Scalar k = pg->data[c] * inv_std[c];
                 for (int b = 0; b < batch; ++b) {
                   const std::size_t i = static_cast<size_t>(b) * channels + c;
                   gx[i] += k * (g[i] - sum_g / n - xhat[i] * sum_g_xhat / n);
                 }
               }
             }
           });
  }
  return r;
}

Tensor batchnorm_eval(const Tensor& x, const Tensor& gain, const Tensor& bias,
                      const std::vector<Scalar>& running_mean,
                      const std::vector<Scalar>& running_var, Scalar eps) {
  check_rank("batchnorm_eval", x, 2);
  const int batch = x.dim(0), channels = x.dim(1);
  if (static_cast<int>(running_mean.size()) != channels ||
      static_cast<int>(running_var.size()) != channels) {
    throw ShapeError("batchnorm_eval: running stats do not match " +
                     shape_str(x.shape()));
  }
  std::vector<Scalar> inv_std(channels);
  for (int c = 0; c < channels; ++c)
    inv_std[c] = Scalar{1} / std::sqrt(running_var[c] + eps);
  std::vector<Scalar> out(x.numel());
  auto dx = x.data();
  auto dg = gain.data(), db = bias.data();
  for (int b = 0; b < batch; ++b)
    for (int c = 0; c < channels; ++c) {
      const std::size_t i = static_cast<size_t>(b) * channels + c;
      out[i] = dg[c] * (dx[i] - running_mean[c]) * inv_std[c] + db[c];
    }
  Tensor r = Tensor::from_data(x.shape(), std::move(out));
  if (wants_grad({&x, &gain, &bias})) {
    auto* self = r.impl().get();
    auto* px = x.impl().get();
    auto* pg = gain.impl().get();
    auto* pb = bias.impl().get();
    record(r, {&x, &gain, &bias},
           [self, px, pg, pb, batch, channels, inv_std,
            mean = running_mean] {
             const auto& g = self->pass_grad;
             for (int b = 0; b < batch; ++b)
               for (int c = 0; c < channels; ++c) {
                 const std::size_t i = static_cast<size_t>(b) * channels + c;
                 if (px->requires_grad)
                   px->pass_buffer()[i] += g[i] * pg->data[c] * inv_std[c];
                 if (pg->requires_grad)
                   pg->pass_buffer()[c] +=
                       g[i] * (px->data[i] - mean[c]) * inv_std[c];
                 if (pb->requires_grad) pb->pass_buffer()[c] += g[i];
               }
           });
  }
  return r;
}

}  // namespace mdpar
