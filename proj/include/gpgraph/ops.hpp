#pragma once

// Differentiable primitives. Each op computes its forward value eagerly and
// registers a backward closure on the tape of its inputs.

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "gpgraph/array.hpp"
#include "gpgraph/partition.hpp"
#include "gpgraph/tape.hpp"

namespace gpgraph {

namespace detail {

template <typename Fwd, typename Dfdx>
Var unary(Var x, Fwd fwd, Dfdx dfdx) {
  const Array& xv = x.value();
  Array out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
  Array y = out;
  return x.tape().record(std::move(out), {x}, [x, y, dfdx](Tape& t, const Array& g) {
    const Array& xv = x.value();
    Array dx(xv.shape());
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] = g[i] * dfdx(xv[i], y[i]);
    t.accumulate(x, dx);
  });
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise

inline Var add(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "add");
  Array out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& t, const Array& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

inline Var sub(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "sub");
  Array out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& t, const Array& g) {
    t.accumulate(a, g);
    Array nb = g;
    for (std::size_t i = 0; i < nb.size(); ++i) nb[i] = -nb[i];
    t.accumulate(b, nb);
  });
}

inline Var mul(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "mul");
  Array out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& t, const Array& g) {
    Array da = g, db = g;
    for (std::size_t i = 0; i < g.size(); ++i) {
      da[i] *= b.value()[i];
      db[i] *= a.value()[i];
    }
    t.accumulate(a, da);
    t.accumulate(b, db);
  });
}

inline Var div(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "div");
  Array out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] /= b.value()[i];
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& t, const Array& g) {
    Array da = g, db = g;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double bv = b.value()[i];
      da[i] /= bv;
      db[i] *= -a.value()[i] / (bv * bv);
    }
    t.accumulate(a, da);
    t.accumulate(b, db);
  });
}

// scale * x + shift, with constant coefficients.
inline Var affine(Var x, double scale, double shift = 0.0) {
  Array out = x.value();
  for (auto& v : out.values()) v = scale * v + shift;
  return x.tape().record(std::move(out), {x}, [x, scale](Tape& t, const Array& g) {
    Array dx = g;
    for (auto& v : dx.values()) v *= scale;
    t.accumulate(x, dx);
  });
}

inline Var exp(Var x) {
  return detail::unary(
      x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

inline Var log(Var x) {
  return detail::unary(
      x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

inline Var tanh(Var x) {
  return detail::unary(
      x, [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

inline double sigmoid_value(double v) {
  return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
}

inline Var sigmoid(Var x) {
  return detail::unary(
      x, sigmoid_value, [](double, double y) { return y * (1.0 - y); });
}

inline Var square(Var x) { return mul(x, x); }

// log(sigmoid(x)) without underflow for large |x|.
inline double log_sigmoid_value(double v) {
  return v < 0 ? v - std::log1p(std::exp(v)) : -std::log1p(std::exp(-v));
}

inline Var log_sigmoid(Var x) {
  return detail::unary(
      x, log_sigmoid_value, [](double v, double) { return sigmoid_value(-v); });
}

// Parametric ReLU with one learnable slope shared by every element.
inline Var prelu(Var x, Var slope) {
  if (slope.value().size() != 1) {
    throw DimensionError("prelu: slope must hold one value, got " +
                         shape_string(slope.shape()));
  }
  const double a = slope.value()[0];
  Array out = x.value();
  for (auto& v : out.values()) v = v > 0 ? v : a * v;
  return x.tape().record(std::move(out), {x, slope}, [x, slope](Tape& t, const Array& g) {
    const double a = slope.value()[0];
    const Array& xv = x.value();
    Array dx(xv.shape());
    double da = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (xv[i] > 0) {
        dx[i] = g[i];
      } else {
        dx[i] = a * g[i];
        da += xv[i] * g[i];
      }
    }
    t.accumulate(x, dx);
    t.accumulate(slope, Array::scalar(da));
  });
}

// ---------------------------------------------------------------------------
// Reductions and shape plumbing

// Neumaier-compensated, so finite-difference checks see rounding-level noise.
inline double compensated_sum(std::span<const double> values) {
  double s = 0.0, c = 0.0;
  for (double v : values) {
    const double t = s + v;
    c += std::abs(s) >= std::abs(v) ? (s - t) + v : (v - t) + s;
    s = t;
  }
  return s + c;
}

inline Var sum(Var x) {
  const double s = compensated_sum(x.value().values());
  return x.tape().record(Array::scalar(s), {x}, [x](Tape& t, const Array& g) {
    t.accumulate(x, Array(x.shape(), g[0]));
  });
}

inline Var mean(Var x) {
  const double n = static_cast<double>(x.value().size());
  return affine(sum(x), 1.0 / n);
}

// Expands a one-element var to the given shape.
inline Var broadcast(Var s, Shape shape) {
  if (s.value().size() != 1) {
    throw DimensionError("broadcast: source must hold one value, got " +
                         shape_string(s.shape()));
  }
  Array out(std::move(shape), s.value()[0]);
  return s.tape().record(std::move(out), {s}, [s](Tape& t, const Array& g) {
    double acc = 0.0;
    for (double v : g.values()) acc += v;
    t.accumulate(s, Array::scalar(acc));
  });
}

inline Var reshape(Var x, Shape shape) {
  Array out = x.value().reshaped(std::move(shape));
  return x.tape().record(std::move(out), {x}, [x](Tape& t, const Array& g) {
    t.accumulate(x, g.reshaped(x.shape()));
  });
}

inline Var transpose(Var x) {
  require_rank(x.value(), 2, "transpose");
  const std::size_t r = x.shape()[0], c = x.shape()[1];
  Array out({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.at(j, i) = x.value().at(i, j);
  return x.tape().record(std::move(out), {x}, [x, r, c](Tape& t, const Array& g) {
    Array dx({r, c});
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) dx.at(i, j) = g.at(j, i);
    t.accumulate(x, dx);
  });
}

// N x A x B -> N x B x A.
inline Var swap_last_two(Var x) {
  require_rank(x.value(), 3, "swap_last_two");
  const std::size_t n = x.shape()[0], a = x.shape()[1], b = x.shape()[2];
  Array out({n, b, a});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < a; ++j)
      for (std::size_t k = 0; k < b; ++k) out.at(i, k, j) = x.value().at(i, j, k);
  return x.tape().record(std::move(out), {x}, [x, n, a, b](Tape& t, const Array& g) {
    Array dx({n, a, b});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < a; ++j)
        for (std::size_t k = 0; k < b; ++k) dx.at(i, j, k) = g.at(i, k, j);
    t.accumulate(x, dx);
  });
}

// Concatenates rank-3 vars along the last axis. Leading dims must agree.
inline Var concat_last(const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("concat_last: no inputs");
  const Shape& s0 = parts[0].shape();
  require_rank(parts[0].value(), 3, "concat_last");
  std::size_t total = 0;
  for (const Var& p : parts) {
    require_rank(p.value(), 3, "concat_last");
    if (p.shape()[0] != s0[0] || p.shape()[1] != s0[1]) {
      throw DimensionError("concat_last: shape mismatch " + shape_string(s0) +
                           " vs " + shape_string(p.shape()));
    }
    total += p.shape()[2];
  }
  const std::size_t n = s0[0], tt = s0[1];
  Array out({n, tt, total});
  std::size_t off = 0;
  for (const Var& p : parts) {
    const std::size_t c = p.shape()[2];
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < tt; ++j)
        for (std::size_t k = 0; k < c; ++k) out.at(i, j, off + k) = p.value().at(i, j, k);
    off += c;
  }
  return parts[0].tape().record(std::move(out), parts, [parts](Tape& t, const Array& g) {
    const std::size_t n = g.shape()[0], tt = g.shape()[1];
    std::size_t off = 0;
    for (const Var& p : parts) {
      const std::size_t c = p.shape()[2];
      Array dp({n, tt, c});
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < tt; ++j)
          for (std::size_t k = 0; k < c; ++k) dp.at(i, j, k) = g.at(i, j, off + k);
      t.accumulate(p, dp);
      off += c;
    }
  });
}

// Slice of the last axis at `index`; drops that axis.
inline Var select_last(Var x, std::size_t index) {
  const Shape& s = x.shape();
  if (s.empty() || index >= s.back()) {
    throw DimensionError("select_last: index " + std::to_string(index) +
                         " out of range for " + shape_string(s));
  }
  const std::size_t c = s.back();
  const std::size_t outer = x.value().size() / c;
  Shape os(s.begin(), s.end() - 1);
  if (os.empty()) os = {1};
  Array out(os);
  for (std::size_t i = 0; i < outer; ++i) out[i] = x.value()[i * c + index];
  return x.tape().record(std::move(out), {x}, [x, index, c, outer](Tape& t, const Array& g) {
    Array dx(x.shape());
    for (std::size_t i = 0; i < outer; ++i) dx[i * c + index] = g[i];
    t.accumulate(x, dx);
  });
}

// ---------------------------------------------------------------------------
// Linear algebra

inline Var matmul(Var a, Var b) {
  const Array& av = a.value();
  const Array& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_string(av.shape()) +
                         " and " + shape_string(bv.shape()));
  }
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  Array out({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av.at(i, p);
      for (std::size_t j = 0; j < n; ++j) out.at(i, j) += aip * bv.at(p, j);
    }
  return a.tape().record(std::move(out), {a, b}, [a, b, m, k, n](Tape& t, const Array& g) {
    const Array& av = a.value();
    const Array& bv = b.value();
    if (a.requires_grad()) {
      Array da({m, k});
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += g.at(i, j) * bv.at(p, j);
          da.at(i, p) = acc;
        }
      t.accumulate(a, da);
    }
    if (b.requires_grad()) {
      Array db({k, n});
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = av.at(i, p);
          for (std::size_t j = 0; j < n; ++j) db.at(p, j) += aip * g.at(i, j);
        }
      t.accumulate(b, db);
    }
  });
}

// One-dimensional convolution along the time axis, zero padded so the output
// keeps length T. x: N x T x C, kernel: k x C x C', bias: C'. Pedestrians are
// independent.
inline Var temporal_conv(Var x, Var kernel, Var bias) {
  const Array& xv = x.value();
  const Array& kv = kernel.value();
  require_rank(xv, 3, "temporal_conv");
  require_rank(kv, 3, "temporal_conv kernel");
  const std::size_t k = kv.dim(0);
  if (k % 2 == 0) {
    throw ConfigError("temporal_conv: kernel size must be odd, got " + std::to_string(k));
  }
  const std::size_t n = xv.dim(0), tt = xv.dim(1), c = xv.dim(2), co = kv.dim(2);
  if (kv.dim(1) != c || bias.value().size() != co) {
    throw DimensionError("temporal_conv: input " + shape_string(xv.shape()) +
                         " incompatible with kernel " + shape_string(kv.shape()) +
                         " and bias " + shape_string(bias.shape()));
  }
  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(k / 2);
  Array out({n, tt, co});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t s = 0; s < tt; ++s) {
      double* o = &out.at(i, s, 0);
      for (std::size_t q = 0; q < co; ++q) o[q] = bias.value()[q];
      for (std::size_t d = 0; d < k; ++d) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(s) + static_cast<std::ptrdiff_t>(d) - half;
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(tt)) continue;
        const double* in = &xv.at(i, static_cast<std::size_t>(src), 0);
        for (std::size_t p = 0; p < c; ++p) {
          const double* w = &kv.at(d, p, 0);
          const double v = in[p];
          for (std::size_t q = 0; q < co; ++q) o[q] += v * w[q];
        }
      }
    }
  return x.tape().record(
      std::move(out), {x, kernel, bias},
      [x, kernel, bias, n, tt, c, co, k, half](Tape& t, const Array& g) {
        const Array& xv = x.value();
        const Array& kv = kernel.value();
        Array dx({n, tt, c});
        Array dk({k, c, co});
        Array db({co});
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t s = 0; s < tt; ++s) {
            const double* go = &g.at(i, s, 0);
            for (std::size_t q = 0; q < co; ++q) db[q] += go[q];
            for (std::size_t d = 0; d < k; ++d) {
              const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(s) + static_cast<std::ptrdiff_t>(d) - half;
              if (src < 0 || src >= static_cast<std::ptrdiff_t>(tt)) continue;
              const std::size_t su = static_cast<std::size_t>(src);
              for (std::size_t p = 0; p < c; ++p) {
                const double* w = &kv.at(d, p, 0);
                double* dw = &dk.at(d, p, 0);
                const double v = xv.at(i, su, p);
                double acc = 0.0;
                for (std::size_t q = 0; q < co; ++q) {
                  acc += go[q] * w[q];
                  dw[q] += v * go[q];
                }
                dx.at(i, su, p) += acc;
              }
            }
          }
        t.accumulate(x, dx);
        t.accumulate(kernel, dk);
        t.accumulate(bias, db);
      });
}

// Per-timestep neighbourhood mixing: out[i,t,:] = sum_j adj[t,i,j] x[j,t,:].
// The adjacency (T x n x n) is a constant of the graph, not differentiated.
inline Var graph_mix(const Array& adj, Var x) {
  const Array& xv = x.value();
  require_rank(xv, 3, "graph_mix");
  require_rank(adj, 3, "graph_mix adjacency");
  const std::size_t n = xv.dim(0), tt = xv.dim(1), c = xv.dim(2);
  if (adj.dim(0) != tt || adj.dim(1) != n || adj.dim(2) != n) {
    throw DimensionError("graph_mix: adjacency " + shape_string(adj.shape()) +
                         " does not match features " + shape_string(xv.shape()));
  }
  Array out({n, tt, c});
  for (std::size_t s = 0; s < tt; ++s)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const double w = adj.at(s, i, j);
        if (w == 0.0) continue;
        for (std::size_t p = 0; p < c; ++p) out.at(i, s, p) += w * xv.at(j, s, p);
      }
  return x.tape().record(std::move(out), {x}, [x, adj, n, tt, c](Tape& t, const Array& g) {
    Array dx({n, tt, c});
    for (std::size_t s = 0; s < tt; ++s)
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          const double w = adj.at(s, i, j);
          if (w == 0.0) continue;
          for (std::size_t p = 0; p < c; ++p) dx.at(j, s, p) += w * g.at(i, s, p);
        }
    t.accumulate(x, dx);
  });
}

// Divides every column by its sum: y[i,j] = x[i,j] / sum_r x[r,j].
inline Var column_normalize(Var x) {
  const Array& xv = x.value();
  require_rank(xv, 2, "column_normalize");
  const std::size_t r = xv.dim(0), c = xv.dim(1);
  std::vector<double> colsum(c, 0.0);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) colsum[j] += xv.at(i, j);
  Array out({r, c});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.at(i, j) = xv.at(i, j) / colsum[j];
  Array y = out;
  return x.tape().record(std::move(out), {x}, [x, y, colsum, r, c](Tape& t, const Array& g) {
    // dy[i,j]/dx[m,j] = (delta_im - y[i,j]) / S_j
    Array dx({r, c});
    for (std::size_t j = 0; j < c; ++j) {
      double gy = 0.0;
      for (std::size_t i = 0; i < r; ++i) gy += g.at(i, j) * y.at(i, j);
      for (std::size_t m = 0; m < r; ++m) dx.at(m, j) = (g.at(m, j) - gy) / colsum[j];
    }
    t.accumulate(x, dx);
  });
}

// Softmax down each column: y[i,j] = exp(x[i,j]) / sum_r exp(x[r,j]).
inline Var column_softmax(Var x) {
  const Array& xv = x.value();
  require_rank(xv, 2, "column_softmax");
  const std::size_t r = xv.dim(0), c = xv.dim(1);
  Array out({r, c});
  for (std::size_t j = 0; j < c; ++j) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < r; ++i) m = std::max(m, xv.at(i, j));
    double z = 0.0;
    for (std::size_t i = 0; i < r; ++i) z += std::exp(xv.at(i, j) - m);
    for (std::size_t i = 0; i < r; ++i) out.at(i, j) = std::exp(xv.at(i, j) - m) / z;
  }
  Array y = out;
  return x.tape().record(std::move(out), {x}, [x, y, r, c](Tape& t, const Array& g) {
    Array dx({r, c});
    for (std::size_t j = 0; j < c; ++j) {
      double gy = 0.0;
      for (std::size_t i = 0; i < r; ++i) gy += g.at(i, j) * y.at(i, j);
      for (std::size_t i = 0; i < r; ++i) dx.at(i, j) = y.at(i, j) * (g.at(i, j) - gy);
    }
    t.accumulate(x, dx);
  });
}

// Mean over the middle axis: N x T x C -> N x C.
inline Var time_mean(Var x) {
  const Array& xv = x.value();
  require_rank(xv, 3, "time_mean");
  const std::size_t n = xv.dim(0), tt = xv.dim(1), c = xv.dim(2);
  Array out({n, c});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t s = 0; s < tt; ++s)
      for (std::size_t p = 0; p < c; ++p) out.at(i, p) += xv.at(i, s, p);
  for (auto& v : out.values()) v /= static_cast<double>(tt);
  return x.tape().record(std::move(out), {x}, [x, n, tt, c](Tape& t, const Array& g) {
    Array dx({n, tt, c});
    const double inv = 1.0 / static_cast<double>(tt);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t s = 0; s < tt; ++s)
        for (std::size_t p = 0; p < c; ++p) dx.at(i, s, p) = g.at(i, p) * inv;
    t.accumulate(x, dx);
  });
}

// Euclidean distance between every pair of rows of e (N x F). The adjoint is
// taken as zero where a distance is exactly zero (the diagonal, coincident
// rows), where the norm has no derivative.
inline Var pairwise_distance(Var e) {
  const Array& ev = e.value();
  require_rank(ev, 2, "pairwise_distance");
  const std::size_t n = ev.dim(0), f = ev.dim(1);
  Array out({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < f; ++p) {
        const double d = ev.at(i, p) - ev.at(j, p);
        acc += d * d;
      }
      out.at(i, j) = out.at(j, i) = std::sqrt(acc);
    }
  Array dist = out;
  return e.tape().record(std::move(out), {e}, [e, dist, n, f](Tape& t, const Array& g) {
    const Array& ev = e.value();
    Array de({n, f});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j || dist.at(i, j) == 0.0) continue;
        const double w = g.at(i, j) / dist.at(i, j);
        for (std::size_t p = 0; p < f; ++p) {
          const double d = w * (ev.at(i, p) - ev.at(j, p));
          de.at(i, p) += d;
          de.at(j, p) -= d;
        }
      }
    t.accumulate(e, de);
  });
}

// ---------------------------------------------------------------------------
// Group plumbing over the leading axis

// Row k of the output is the mean of rows in group k. Trailing axes are kept.
inline Var segment_mean(Var x, const GroupPartition& part) {
  const Array& xv = x.value();
  if (xv.rank() < 1 || xv.dim(0) != part.universe_size()) {
    throw PartitionError("segment_mean: partition over " +
                         std::to_string(part.universe_size()) +
                         " rows applied to " + shape_string(xv.shape()));
  }
  const std::size_t rows = xv.dim(0);
  const std::size_t width = rows ? xv.size() / rows : 0;
  const std::size_t kk = part.group_count();
  Shape os = xv.shape();
  os[0] = kk;
  Array out(os);
  for (std::size_t g = 0; g < kk; ++g) {
    const auto& members = part.group(g);
    if (members.empty()) throw PartitionError("segment_mean: empty segment");
    // first member plus the mean offset from it: exact when members agree
    const double count = static_cast<double>(members.size());
    const std::size_t lead = members.front();
    for (std::size_t p = 0; p < width; ++p) {
      double acc = 0.0;
      for (std::size_t i : members) acc += xv[i * width + p] - xv[lead * width + p];
      out[g * width + p] = xv[lead * width + p] + acc / count;
    }
  }
  return x.tape().record(std::move(out), {x}, [x, part, width](Tape& t, const Array& g) {
    Array dx(x.shape());
    for (std::size_t k = 0; k < part.group_count(); ++k) {
      const auto& members = part.group(k);
      const double inv = 1.0 / static_cast<double>(members.size());
      for (std::size_t i : members)
        for (std::size_t p = 0; p < width; ++p) dx[i * width + p] = g[k * width + p] * inv;
    }
    t.accumulate(x, dx);
  });
}

// out[r] = x[index[r]] over the leading axis.
inline Var gather_rows(Var x, const std::vector<std::size_t>& index) {
  const Array& xv = x.value();
  if (xv.rank() < 1) throw DimensionError("gather_rows: scalar input");
  const std::size_t rows = xv.dim(0);
  const std::size_t width = rows ? xv.size() / rows : 0;
  Shape os = xv.shape();
  os[0] = index.size();
  Array out(os);
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] >= rows) {
      throw DimensionError("gather_rows: row " + std::to_string(index[r]) +
                           " out of range for " + shape_string(xv.shape()));
    }
    for (std::size_t p = 0; p < width; ++p) out[r * width + p] = xv[index[r] * width + p];
  }
  return x.tape().record(std::move(out), {x}, [x, index, width](Tape& t, const Array& g) {
    Array dx(x.shape());
    for (std::size_t r = 0; r < index.size(); ++r)
      for (std::size_t p = 0; p < width; ++p) dx[index[r] * width + p] += g[r * width + p];
    t.accumulate(x, dx);
  });
}

}  // namespace gpgraph
