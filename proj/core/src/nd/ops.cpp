#include "higraph/nd/ops.hpp"

#include <algorithm>
#include <cmath>

namespace higraph::nd {

namespace {

constexpr double kBceEps = 1e-12;

void require(bool ok, const std::string& msg) {
  if (!ok) throw ShapeMismatch(msg);
}

bool any_grad(const Tensor& a) { return a.requires_grad(); }
bool any_grad(const Tensor& a, const Tensor& b) {
  return a.requires_grad() || b.requires_grad();
}

Tensor make_out(Tape& tape, std::vector<std::size_t> shape, bool wants_grad) {
  return Tensor::zeros(std::move(shape), wants_grad && tape.recording());
}

}  // namespace

Csr Csr::from_triplets(std::size_t rows, std::size_t cols,
                       const std::vector<std::size_t>& r,
                       const std::vector<std::size_t>& c,
                       const std::vector<double>& v) {
  Csr m;
  m.rows = rows;
  m.cols = cols;
  m.indptr.assign(rows + 1, 0);
  for (auto ri : r) m.indptr[ri + 1]++;
  for (std::size_t i = 0; i < rows; ++i) m.indptr[i + 1] += m.indptr[i];
  m.indices.resize(r.size());
  m.values.resize(r.size());
  std::vector<std::size_t> cursor(m.indptr.begin(), m.indptr.end() - 1);
  for (std::size_t i = 0; i < r.size(); ++i) {
    std::size_t p = cursor[r[i]]++;
    m.indices[p] = c[i];
    m.values[p] = v[i];
  }
  return m;
}

Csr Csr::transposed() const {
  std::vector<std::size_t> r, c;
  std::vector<double> v;
  r.reserve(values.size());
  c.reserve(values.size());
  v.reserve(values.size());
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t p = indptr[i]; p < indptr[i + 1]; ++p) {
      r.push_back(indices[p]);
      c.push_back(i);
      v.push_back(values[p]);
    }
  return from_triplets(cols, rows, r, c, v);
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(),
          "add: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor out = make_out(tape, a.shape(), any_grad(a, b));
  for (std::size_t i = 0; i < a.size(); ++i) out(i) = a(i) + b(i);
  if (out.requires_grad())
    tape.record([a, b, out]() mutable {
      const auto& g = out.grad();
      if (a.requires_grad()) {
        auto& ga = a.grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        auto& gb = b.grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      }
    });
  return out;
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(),
          "sub: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor out = make_out(tape, a.shape(), any_grad(a, b));
  for (std::size_t i = 0; i < a.size(); ++i) out(i) = a(i) - b(i);
  if (out.requires_grad())
    tape.record([a, b, out]() mutable {
      const auto& g = out.grad();
      if (a.requires_grad()) {
        auto& ga = a.grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        auto& gb = b.grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      }
    });
  return out;
}

Tensor elementwise_mul(Tape& tape, const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(),
          "elementwise_mul: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor out = make_out(tape, a.shape(), any_grad(a, b));
  for (std::size_t i = 0; i < a.size(); ++i) out(i) = a(i) * b(i);
  if (out.requires_grad())
    tape.record([a, b, out]() mutable {
      const auto& g = out.grad();
      if (a.requires_grad()) {
        auto& ga = a.grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b(i);
      }
      if (b.requires_grad()) {
        auto& gb = b.grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a(i);
      }
    });
  return out;
}

Tensor scale(Tape& tape, const Tensor& a, double c) {
  Tensor out = make_out(tape, a.shape(), any_grad(a));
  for (std::size_t i = 0; i < a.size(); ++i) out(i) = a(i) * c;
  if (out.requires_grad())
    tape.record([a, out, c]() mutable {
      const auto& g = out.grad();
      auto& ga = a.grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * c;
    });
  return out;
}

Tensor broadcast_add(Tape& tape, const Tensor& x, const Tensor& v) {
  require(x.rank() == 2 && v.rank() == 1 && x.dim(1) == v.dim(0),
          "broadcast_add: " + shape_str(x.shape()) + " + " + shape_str(v.shape()));
  const std::size_t m = x.dim(0), n = x.dim(1);
  Tensor out = make_out(tape, {m, n}, any_grad(x, v));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, j) = x(i, j) + v(j);
  if (out.requires_grad())
    tape.record([x, v, out, m, n]() mutable {
      const auto& g = out.grad();
      if (x.requires_grad()) {
        auto& gx = x.grad();
        for (std::size_t i = 0; i < m * n; ++i) gx[i] += g[i];
      }
      if (v.requires_grad()) {
        auto& gv = v.grad();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) gv[j] += g[i * n + j];
      }
    });
  return out;
}

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  require(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(0),
          "matmul: " + shape_str(a.shape()) + " * " + shape_str(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out = make_out(tape, {m, n}, any_grad(a, b));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t t = 0; t < k; ++t) {
      const double av = a(i, t);
      if (av == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) out(i, j) += av * b(t, j);
    }
  if (out.requires_grad())
    tape.record([a, b, out, m, k, n]() mutable {
      const auto& g = out.grad();
      if (a.requires_grad()) {
        auto& ga = a.grad();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t t = 0; t < k; ++t) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * b(t, j);
            ga[i * k + t] += acc;
          }
      }
      if (b.requires_grad()) {
        auto& gb = b.grad();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t t = 0; t < k; ++t) {
            const double av = a(i, t);
            if (av == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) gb[t * n + j] += av * g[i * n + j];
          }
      }
    });
  return out;
}

Tensor transpose(Tape& tape, const Tensor& a) {
  require(a.rank() == 2, "transpose: expected rank-2, got " + shape_str(a.shape()));
  const std::size_t m = a.dim(0), n = a.dim(1);
  Tensor out = make_out(tape, {n, m}, any_grad(a));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out(j, i) = a(i, j);
  if (out.requires_grad())
    tape.record([a, out, m, n]() mutable {
      const auto& g = out.grad();
      auto& ga = a.grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
    });
  return out;
}

Tensor matvec(Tape& tape, const Tensor& a, const Tensor& x) {
  require(a.rank() == 2 && x.rank() == 1 && a.dim(1) == x.dim(0),
          "matvec: " + shape_str(a.shape()) + " * " + shape_str(x.shape()));
  const std::size_t m = a.dim(0), n = a.dim(1);
  Tensor out = make_out(tape, {m}, any_grad(a, x));
  for (std::size_t i = 0; i < m; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += a(i, j) * x(j);
    out(i) = acc;
  }
  if (out.requires_grad())
    tape.record([a, x, out, m, n]() mutable {
      const auto& g = out.grad();
      if (a.requires_grad()) {
        auto& ga = a.grad();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[i] * x(j);
      }
      if (x.requires_grad()) {
        auto& gx = x.grad();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) gx[j] += g[i] * a(i, j);
      }
    });
  return out;
}

Tensor tmatvec(Tape& tape, const Tensor& a, const Tensor& x) {
  require(a.rank() == 2 && x.rank() == 1 && a.dim(0) == x.dim(0),
          "tmatvec: " + shape_str(a.shape()) + "^T * " + shape_str(x.shape()));
  const std::size_t m = a.dim(0), n = a.dim(1);
  Tensor out = make_out(tape, {n}, any_grad(a, x));
  for (std::size_t i = 0; i < m; ++i) {
    const double xv = x(i);
    for (std::size_t j = 0; j < n; ++j) out(j) += a(i, j) * xv;
  }
  if (out.requires_grad())
    tape.record([a, x, out, m, n]() mutable {
      const auto& g = out.grad();
      if (a.requires_grad()) {
        auto& ga = a.grad();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j] * x(i);
      }
      if (x.requires_grad()) {
        auto& gx = x.grad();
        for (std::size_t i = 0; i < m; ++i) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += a(i, j) * g[j];
          gx[i] += acc;
        }
      }
    });
  return out;
}

Tensor concat_vec(Tape& tape, const Tensor& a, const Tensor& b) {
  return concat_many(tape, {a, b});
}

Tensor concat_many(Tape& tape, const std::vector<Tensor>& parts) {
  std::size_t total = 0;
  bool wants = false;
  for (const auto& p : parts) {
    require(p.rank() == 1, "concat: expected rank-1 parts");
    total += p.size();
    wants = wants || p.requires_grad();
  }
  Tensor out = make_out(tape, {total}, wants);
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.data(), p.data() + p.size(), out.data() + off);
    off += p.size();
  }
  if (out.requires_grad())
    tape.record([parts, out]() mutable {
      const auto& g = out.grad();
      std::size_t off = 0;
      for (auto& p : parts) {
        if (p.requires_grad()) {
          auto& gp = p.grad();
          for (std::size_t i = 0; i < p.size(); ++i) gp[i] += g[off + i];
        }
        off += p.size();
      }
    });
  return out;
}

Tensor slice_rows(Tape& tape, const Tensor& x, std::size_t r0, std::size_t r1) {
  require(x.rank() == 2 && r0 <= r1 && r1 <= x.dim(0),
          "slice_rows: bad range on " + shape_str(x.shape()));
  const std::size_t n = x.dim(1), m = r1 - r0;
  Tensor out = make_out(tape, {m, n}, any_grad(x));
  std::copy(x.data() + r0 * n, x.data() + r1 * n, out.data());
  if (out.requires_grad())
    tape.record([x, out, r0, m, n]() mutable {
      const auto& g = out.grad();
      auto& gx = x.grad();
      for (std::size_t i = 0; i < m * n; ++i) gx[r0 * n + i] += g[i];
    });
  return out;
}

Tensor row_vec(Tape& tape, const Tensor& x, std::size_t i) {
  require(x.rank() == 2 && i < x.dim(0), "row_vec: bad row on " + shape_str(x.shape()));
  const std::size_t n = x.dim(1);
  Tensor out = make_out(tape, {n}, any_grad(x));
  std::copy(x.data() + i * n, x.data() + (i + 1) * n, out.data());
  if (out.requires_grad())
    tape.record([x, out, i, n]() mutable {
      const auto& g = out.grad();
      auto& gx = x.grad();
      for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += g[j];
    });
  return out;
}

Tensor stack_rows(Tape& tape, const std::vector<Tensor>& rows) {
  require(!rows.empty(), "stack_rows: empty input");
  const std::size_t n = rows.front().size();
  bool wants = false;
  for (const auto& r : rows) {
    require(r.rank() == 1 && r.size() == n, "stack_rows: ragged rows");
    wants = wants || r.requires_grad();
  }
  Tensor out = make_out(tape, {rows.size(), n}, wants);
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy(rows[i].data(), rows[i].data() + n, out.data() + i * n);
  if (out.requires_grad())
    tape.record([rows, out, n]() mutable {
      const auto& g = out.grad();
      for (std::size_t i = 0; i < rows.size(); ++i) {
        if (!rows[i].requires_grad()) continue;
        auto& gr = rows[i].grad();
        for (std::size_t j = 0; j < n; ++j) gr[j] += g[i * n + j];
      }
    });
  return out;
}

Tensor mean_rows(Tape& tape, const Tensor& x) {
  require(x.rank() == 2, "mean_rows: expected rank-2, got " + shape_str(x.shape()));
  const std::size_t m = x.dim(0), n = x.dim(1);
  Tensor out = make_out(tape, {m}, any_grad(x));
  for (std::size_t i = 0; i < m; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += x(i, j);
    out(i) = acc / static_cast<double>(n);
  }
  if (out.requires_grad())
    tape.record([x, out, m, n]() mutable {
      const auto& g = out.grad();
      auto& gx = x.grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += g[i] / static_cast<double>(n);
    });
  return out;
}

Tensor mean_cols(Tape& tape, const Tensor& x) {
  require(x.rank() == 2, "mean_cols: expected rank-2, got " + shape_str(x.shape()));
  const std::size_t m = x.dim(0), n = x.dim(1);
  Tensor out = make_out(tape, {n}, any_grad(x));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out(j) += x(i, j);
  for (std::size_t j = 0; j < n; ++j) out(j) /= static_cast<double>(m);
  if (out.requires_grad())
    tape.record([x, out, m, n]() mutable {
      const auto& g = out.grad();
      auto& gx = x.grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += g[j] / static_cast<double>(m);
    });
  return out;
}

Tensor sum_all(Tape& tape, const Tensor& x) {
  Tensor out = make_out(tape, {1}, any_grad(x));
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += x(i);
  out(0) = acc;
  if (out.requires_grad())
    tape.record([x, out]() mutable {
      const double g = out.grad()[0];
      auto& gx = x.grad();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
    });
  return out;
}

Tensor relu(Tape& tape, const Tensor& x) {
  Tensor out = make_out(tape, x.shape(), any_grad(x));
  for (std::size_t i = 0; i < x.size(); ++i) out(i) = x(i) > 0.0 ? x(i) : 0.0;
  if (out.requires_grad())
    tape.record([x, out]() mutable {
      const auto& g = out.grad();
      auto& gx = x.grad();
      for (std::size_t i = 0; i < g.size(); ++i)
        if (x(i) > 0.0) gx[i] += g[i];
    });
  return out;
}

Tensor sigmoid(Tape& tape, const Tensor& x) {
  Tensor out = make_out(tape, x.shape(), any_grad(x));
  for (std::size_t i = 0; i < x.size(); ++i) out(i) = 1.0 / (1.0 + std::exp(-x(i)));
  if (out.requires_grad())
    tape.record([x, out]() mutable {
      const auto& g = out.grad();
      auto& gx = x.grad();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * out(i) * (1.0 - out(i));
    });
  return out;
}

Tensor softmax_vec(Tape& tape, const Tensor& x) {
  require(x.rank() == 1, "softmax_vec: expected rank-1, got " + shape_str(x.shape()));
  const std::size_t n = x.dim(0);
  Tensor out = make_out(tape, {n}, any_grad(x));
  double mx = x(0);
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, x(i));
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out(i) = std::exp(x(i) - mx);
    z += out(i);
  }
  for (std::size_t i = 0; i < n; ++i) out(i) /= z;
  if (out.requires_grad())
    tape.record([x, out, n]() mutable {
      const auto& g = out.grad();
      auto& gx = x.grad();
      double dot = 0.0;
      for (std::size_t i = 0; i < n; ++i) dot += g[i] * out(i);
      for (std::size_t i = 0; i < n; ++i) gx[i] += out(i) * (g[i] - dot);
    });
  return out;
}

Tensor conv1d(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& b) {
  require(x.rank() == 2 && w.rank() == 3 && b.rank() == 1,
          "conv1d: bad ranks " + shape_str(x.shape()) + ", " + shape_str(w.shape()));
  const std::size_t l = x.dim(0), cin = x.dim(1);
  const std::size_t k = w.dim(0), cout = w.dim(2);
  require(w.dim(1) == cin && b.dim(0) == cout && k % 2 == 1,
          "conv1d: kernel " + shape_str(w.shape()) + " does not fit input " +
              shape_str(x.shape()));
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>((k - 1) / 2);
  Tensor out = make_out(tape, {l, cout}, any_grad(x, w) || b.requires_grad());
  const double* xd = x.data();
  const double* wd = w.data();
  for (std::size_t i = 0; i < l; ++i) {
    for (std::size_t o = 0; o < cout; ++o) out(i, o) = b(o);
    for (std::size_t t = 0; t < k; ++t) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(i + t) - pad;
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(l)) continue;
      for (std::size_t c = 0; c < cin; ++c) {
        const double xv = xd[src * cin + c];
        if (xv == 0.0) continue;
        const double* wrow = wd + (t * cin + c) * cout;
        for (std::size_t o = 0; o < cout; ++o) out(i, o) += xv * wrow[o];
      }
    }
  }
  if (out.requires_grad())
    tape.record([x, w, b, out, l, cin, k, cout, pad]() mutable {
      const auto& g = out.grad();
      if (b.requires_grad()) {
        auto& gb = b.grad();
        for (std::size_t i = 0; i < l; ++i)
          for (std::size_t o = 0; o < cout; ++o) gb[o] += g[i * cout + o];
      }
      const double* xd = x.data();
      const double* wd = w.data();
      for (std::size_t i = 0; i < l; ++i)
        for (std::size_t t = 0; t < k; ++t) {
          const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(i + t) - pad;
          if (src < 0 || src >= static_cast<std::ptrdiff_t>(l)) continue;
          if (w.requires_grad()) {
            auto& gw = w.grad();
            for (std::size_t c = 0; c < cin; ++c) {
              const double xv = xd[src * cin + c];
              if (xv == 0.0) continue;
              for (std::size_t o = 0; o < cout; ++o)
                gw[(t * cin + c) * cout + o] += xv * g[i * cout + o];
            }
          }
          if (x.requires_grad()) {
            auto& gx = x.grad();
            for (std::size_t c = 0; c < cin; ++c) {
              const double* wrow = wd + (t * cin + c) * cout;
              double acc = 0.0;
              for (std::size_t o = 0; o < cout; ++o) acc += wrow[o] * g[i * cout + o];
              gx[src * cin + c] += acc;
            }
          }
        }
    });
  return out;
}

Tensor batchnorm(Tape& tape, const Tensor& x, const Tensor& gamma, const Tensor& beta,
                 Tensor running_mean, Tensor running_var, bool train, double momentum,
                 double eps) {
  require(x.rank() == 2, "batchnorm: expected rank-2 input, got " + shape_str(x.shape()));
  const std::size_t l = x.dim(0), c = x.dim(1);
  require(gamma.size() == c && beta.size() == c && running_mean.size() == c &&
              running_var.size() == c,
          "batchnorm: channel mismatch on " + shape_str(x.shape()));
  Tensor out = make_out(tape, {l, c}, any_grad(x, gamma) || beta.requires_grad());

  if (train) {
    if (l < 2) throw DegenerateBatch("batchnorm: train mode needs at least 2 positions");
    std::vector<double> mu(c, 0.0), var(c, 0.0), inv(c, 0.0);
    for (std::size_t i = 0; i < l; ++i)
      for (std::size_t j = 0; j < c; ++j) mu[j] += x(i, j);
    for (std::size_t j = 0; j < c; ++j) mu[j] /= static_cast<double>(l);
    for (std::size_t i = 0; i < l; ++i)
      for (std::size_t j = 0; j < c; ++j) {
        const double d = x(i, j) - mu[j];
        var[j] += d * d;
      }
    for (std::size_t j = 0; j < c; ++j) {
      var[j] /= static_cast<double>(l);
      inv[j] = 1.0 / std::sqrt(var[j] + eps);
    }
    for (std::size_t i = 0; i < l; ++i)
      for (std::size_t j = 0; j < c; ++j)
        out(i, j) = gamma(j) * (x(i, j) - mu[j]) * inv[j] + beta(j);
    // Fold batch statistics into the running buffers (unbiased variance).
    const double unbias = static_cast<double>(l) / static_cast<double>(l - 1);
    for (std::size_t j = 0; j < c; ++j) {
      running_mean(j) = (1.0 - momentum) * running_mean(j) + momentum * mu[j];
      running_var(j) = (1.0 - momentum) * running_var(j) + momentum * var[j] * unbias;
    }
    if (out.requires_grad())
      tape.record([x, gamma, beta, out, mu, inv, l, c]() mutable {
        const auto& g = out.grad();
        if (beta.requires_grad()) {
          auto& gb = beta.grad();
          for (std::size_t i = 0; i < l; ++i)
            for (std::size_t j = 0; j < c; ++j) gb[j] += g[i * c + j];
        }
        std::vector<double> xhat(l * c);
        for (std::size_t i = 0; i < l; ++i)
          for (std::size_t j = 0; j < c; ++j)
            xhat[i * c + j] = (x(i, j) - mu[j]) * inv[j];
        if (gamma.requires_grad()) {
          auto& gg = gamma.grad();
          for (std::size_t i = 0; i < l; ++i)
            for (std::size_t j = 0; j < c; ++j) gg[j] += g[i * c + j] * xhat[i * c + j];
        }
        if (x.requires_grad()) {
          auto& gx = x.grad();
          for (std::size_t j = 0; j < c; ++j) {
            double sum_g = 0.0, sum_gx = 0.0;
            for (std::size_t i = 0; i < l; ++i) {
              sum_g += g[i * c + j];
              sum_gx += g[i * c + j] * xhat[i * c + j];
            }
            const double nl = static_cast<double>(l);
            for (std::size_t i = 0; i < l; ++i)
              gx[i * c + j] += gamma(j) * inv[j] *
                               (g[i * c + j] - sum_g / nl - xhat[i * c + j] * sum_gx / nl);
          }
        }
      });
  } else {
    std::vector<double> inv(c);
    for (std::size_t j = 0; j < c; ++j) inv[j] = 1.0 / std::sqrt(running_var(j) + eps);
    for (std::size_t i = 0; i < l; ++i)
      for (std::size_t j = 0; j < c; ++j)
        out(i, j) = gamma(j) * (x(i, j) - running_mean(j)) * inv[j] + beta(j);
    if (out.requires_grad())
      tape.record([x, gamma, beta, out, running_mean, inv, l, c]() mutable {
        const auto& g = out.grad();
        if (beta.requires_grad()) {
          auto& gb = beta.grad();
          for (std::size_t i = 0; i < l; ++i)
            for (std::size_t j = 0; j < c; ++j) gb[j] += g[i * c + j];
        }
        if (gamma.requires_grad()) {
          auto& gg = gamma.grad();
          for (std::size_t i = 0; i < l; ++i)
            for (std::size_t j = 0; j < c; ++j)
              gg[j] += g[i * c + j] * (x(i, j) - running_mean(j)) * inv[j];
        }
        if (x.requires_grad()) {
          auto& gx = x.grad();
          for (std::size_t i = 0; i < l; ++i)
            for (std::size_t j = 0; j < c; ++j)
              gx[i * c + j] += g[i * c + j] * gamma(j) * inv[j];
        }
      });
  }
  return out;
}

Tensor embed_rows(Tape& tape, const Tensor& table, const std::vector<std::size_t>& ids) {
  require(table.rank() == 2, "embed_rows: table must be rank-2");
  const std::size_t v = table.dim(0), d = table.dim(1);
  for (auto id : ids)
    require(id < v, "embed_rows: index " + std::to_string(id) + " out of range");
  Tensor out = make_out(tape, {ids.size(), d}, any_grad(table));
  for (std::size_t i = 0; i < ids.size(); ++i)
    std::copy(table.data() + ids[i] * d, table.data() + (ids[i] + 1) * d,
              out.data() + i * d);
  if (out.requires_grad())
    tape.record([table, out, ids, d]() mutable {
      const auto& g = out.grad();
      auto& gt = table.grad();
      for (std::size_t i = 0; i < ids.size(); ++i)
        for (std::size_t j = 0; j < d; ++j) gt[ids[i] * d + j] += g[i * d + j];
    });
  return out;
}

Tensor spmm(Tape& tape, const Csr& a, const Tensor& x) {
  require(x.rank() == 2 && x.dim(0) == a.cols,
          "spmm: " + std::to_string(a.rows) + "x" + std::to_string(a.cols) + " * " +
              shape_str(x.shape()));
  const std::size_t d = x.dim(1);
  Tensor out = make_out(tape, {a.rows, d}, any_grad(x));
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t p = a.indptr[i]; p < a.indptr[i + 1]; ++p) {
      const std::size_t j = a.indices[p];
      const double v = a.values[p];
      for (std::size_t t = 0; t < d; ++t) out(i, t) += v * x(j, t);
    }
  if (out.requires_grad())
    tape.record([a, x, out, d]() mutable {
      const auto& g = out.grad();
      auto& gx = x.grad();
      for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t p = a.indptr[i]; p < a.indptr[i + 1]; ++p) {
          const std::size_t j = a.indices[p];
          const double v = a.values[p];
          for (std::size_t t = 0; t < d; ++t) gx[j * d + t] += v * g[i * d + t];
        }
    });
  return out;
}

Tensor bce_loss(Tape& tape, const Tensor& yhat, const Tensor& y) {
  require(yhat.rank() == 1 && y.shape() == yhat.shape(),
          "bce_loss: " + shape_str(yhat.shape()) + " vs " + shape_str(y.shape()));
  const std::size_t n = yhat.dim(0);
  Tensor out = make_out(tape, {1}, any_grad(yhat));
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = std::clamp(yhat(i), kBceEps, 1.0 - kBceEps);
    acc -= y(i) * std::log(p) + (1.0 - y(i)) * std::log(1.0 - p);
  }
  out(0) = acc / static_cast<double>(n);
  if (out.requires_grad())
    tape.record([yhat, y, out, n]() mutable {
      const double g = out.grad()[0];
      auto& gy = yhat.grad();
      for (std::size_t i = 0; i < n; ++i) {
        const double p = yhat(i);
        if (p <= kBceEps || p >= 1.0 - kBceEps) continue;  // clamped region
        gy[i] += g * (-y(i) / p + (1.0 - y(i)) / (1.0 - p)) / static_cast<double>(n);
      }
    });
  return out;
}

}  // namespace higraph::nd
