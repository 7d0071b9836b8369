#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "pairsim/errors.hpp"
#include "pairsim/tensor.hpp"

// Autodiff primitives. Each op computes its forward value eagerly and, when
// an input is tracked, appends a node whose closure accumulates gradients
// into the parents. Backward closures capture the shared storage of the
// values they need; nothing is recomputed.

namespace pairsim {

namespace detail {

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw ShapeError(msg);
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}

// Branch form; never evaluates exp on a positive argument.
inline double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) + b.at(i);
  Tape* tape = common_tape({&a, &b});
  std::size_t n = a.size();
  return make_tracked(tape, a.shape(), std::move(out), {node_of(a, tape), node_of(b, tape)},
                      [n](const double* g, const std::vector<double*>& pg) {
                        for (std::size_t i = 0; i < n; ++i) {
                          if (pg[0]) pg[0][i] += g[i];
                          if (pg[1]) pg[1][i] += g[i];
                        }
                      });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) - b.at(i);
  Tape* tape = common_tape({&a, &b});
  std::size_t n = a.size();
  return make_tracked(tape, a.shape(), std::move(out), {node_of(a, tape), node_of(b, tape)},
                      [n](const double* g, const std::vector<double*>& pg) {
                        for (std::size_t i = 0; i < n; ++i) {
                          if (pg[0]) pg[0][i] += g[i];
                          if (pg[1]) pg[1][i] -= g[i];
                        }
                      });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * b.at(i);
  Tape* tape = common_tape({&a, &b});
  auto da = a.storage();
  auto db = b.storage();
  std::size_t n = a.size();
  return make_tracked(tape, a.shape(), std::move(out), {node_of(a, tape), node_of(b, tape)},
                      [n, da, db](const double* g, const std::vector<double*>& pg) {
                        for (std::size_t i = 0; i < n; ++i) {
                          if (pg[0]) pg[0][i] += g[i] * (*db)[i];
                          if (pg[1]) pg[1][i] += g[i] * (*da)[i];
                        }
                      });
}

// a*x + c, elementwise.
inline Tensor scale_add(const Tensor& x, double a, double c) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * x.at(i) + c;
  Tape* tape = common_tape({&x});
  std::size_t n = x.size();
  return make_tracked(tape, x.shape(), std::move(out), {node_of(x, tape)},
                      [n, a](const double* g, const std::vector<double*>& pg) {
                        if (!pg[0]) return;
                        for (std::size_t i = 0; i < n; ++i) pg[0][i] += a * g[i];
                      });
}

inline Tensor scale(const Tensor& x, double a) { return scale_add(x, a, 0.0); }
inline Tensor one_minus(const Tensor& x) { return scale_add(x, -1.0, 1.0); }

// ---------------------------------------------------------------------------
// linear algebra
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(0),
                  "matmul: incompatible shapes " + a.shape_str() + " x " + b.shape_str());
  std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      double av = a.at(i, p);
      if (av == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += av * b.at(p, j);
    }
  Tape* tape = common_tape({&a, &b});
  auto da = a.storage();
  auto db = b.storage();
  return make_tracked(tape, {m, n}, std::move(out), {node_of(a, tape), node_of(b, tape)},
                      [m, k, n, da, db](const double* g, const std::vector<double*>& pg) {
                        if (pg[0])
                          for (std::size_t i = 0; i < m; ++i)
                            for (std::size_t j = 0; j < n; ++j) {
                              double gv = g[i * n + j];
                              for (std::size_t p = 0; p < k; ++p)
                                pg[0][i * k + p] += gv * (*db)[p * n + j];
                            }
                        if (pg[1])
                          for (std::size_t i = 0; i < m; ++i)
                            for (std::size_t p = 0; p < k; ++p) {
                              double av = (*da)[i * k + p];
                              for (std::size_t j = 0; j < n; ++j)
                                pg[1][p * n + j] += av * g[i * n + j];
                            }
                      });
}

// a . b^T without materializing the transpose.
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  detail::require(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(1),
                  "matmul_nt: incompatible shapes " + a.shape_str() + " x " + b.shape_str());
  std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a.at(i, p) * b.at(j, p);
      out[i * n + j] = s;
    }
  Tape* tape = common_tape({&a, &b});
  auto da = a.storage();
  auto db = b.storage();
  return make_tracked(tape, {m, n}, std::move(out), {node_of(a, tape), node_of(b, tape)},
                      [m, k, n, da, db](const double* g, const std::vector<double*>& pg) {
                        for (std::size_t i = 0; i < m; ++i)
                          for (std::size_t j = 0; j < n; ++j) {
                            double gv = g[i * n + j];
                            if (gv == 0.0) continue;
                            for (std::size_t p = 0; p < k; ++p) {
                              if (pg[0]) pg[0][i * k + p] += gv * (*db)[j * k + p];
                              if (pg[1]) pg[1][j * k + p] += gv * (*da)[i * k + p];
                            }
                          }
                      });
}

// x[d] . W[d,o] for a single vector.
inline Tensor linear(const Tensor& x, const Tensor& w) {
  detail::require(x.rank() == 1 && w.rank() == 2 && x.dim(0) == w.dim(0),
                  "linear: incompatible shapes " + x.shape_str() + " x " + w.shape_str());
  std::size_t d = x.dim(0), o = w.dim(1);
  std::vector<double> out(o, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    double xv = x.at(i);
    if (xv == 0.0) continue;
    for (std::size_t j = 0; j < o; ++j) out[j] += xv * w.at(i, j);
  }
  Tape* tape = common_tape({&x, &w});
  auto dx = x.storage();
  auto dw = w.storage();
  return make_tracked(tape, {o}, std::move(out), {node_of(x, tape), node_of(w, tape)},
                      [d, o, dx, dw](const double* g, const std::vector<double*>& pg) {
                        for (std::size_t i = 0; i < d; ++i) {
                          double xv = (*dx)[i];
                          for (std::size_t j = 0; j < o; ++j) {
                            if (pg[0]) pg[0][i] += g[j] * (*dw)[i * o + j];
                            if (pg[1]) pg[1][i * o + j] += xv * g[j];
                          }
                        }
                      });
}

// Broadcast-add a row vector to every row.
inline Tensor add_rowwise(const Tensor& x, const Tensor& b) {
  detail::require(x.rank() == 2 && b.rank() == 1 && x.dim(1) == b.dim(0),
                  "add_rowwise: incompatible shapes " + x.shape_str() + " + " + b.shape_str());
  std::size_t n = x.dim(0), d = x.dim(1);
  std::vector<double> out(n * d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = x.at(i, j) + b.at(j);
  Tape* tape = common_tape({&x, &b});
  return make_tracked(tape, {n, d}, std::move(out), {node_of(x, tape), node_of(b, tape)},
                      [n, d](const double* g, const std::vector<double*>& pg) {
                        for (std::size_t i = 0; i < n; ++i)
                          for (std::size_t j = 0; j < d; ++j) {
                            if (pg[0]) pg[0][i * d + j] += g[i * d + j];
                            if (pg[1]) pg[1][j] += g[i * d + j];
                          }
                      });
}

// x.W + b; x may be a vector [d] or a matrix [n,d].
inline Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.rank() == 1) {
    detail::require(b.rank() == 1 && b.dim(0) == w.dim(1), "affine: bias shape " + b.shape_str());
    return add(linear(x, w), b);
  }
  return add_rowwise(matmul(x, w), b);
}

// ---------------------------------------------------------------------------
// structure: concat / slice / row / gather
// ---------------------------------------------------------------------------

// Concatenate along `axis`. Rank-1 tensors concatenate along axis 0;
// rank-2 along axis 0 (rows) or 1 (columns).
inline Tensor concat(const std::vector<Tensor>& parts, std::size_t axis = 0) {
  detail::require(!parts.empty(), "concat: no inputs");
  std::size_t rank = parts[0].rank();
  detail::require(axis < rank, "concat: axis out of range");
  for (const Tensor& p : parts)
    detail::require(p.rank() == rank, "concat: mixed ranks");

  std::vector<const Tensor*> ptrs;
  for (const Tensor& p : parts) ptrs.push_back(&p);
  Tape* tape = nullptr;
  for (const Tensor* p : ptrs) {
    Tape* t = common_tape({p});
    if (t != nullptr) {
      detail::require(tape == nullptr || tape == t, "concat: operands on different tapes");
      tape = t;
    }
  }
  std::vector<int> parents;
  for (const Tensor* p : ptrs) parents.push_back(node_of(*p, tape));

  if (rank == 1 || axis == 0) {
    std::size_t cols = rank == 2 ? parts[0].dim(1) : 0;
    std::size_t total = 0;
    std::vector<std::size_t> sizes;
    for (const Tensor& p : parts) {
      if (rank == 2)
        detail::require(p.dim(1) == cols, "concat axis0: column mismatch " + p.shape_str());
      sizes.push_back(p.size());
      total += p.size();
    }
    std::vector<double> out;
    out.reserve(total);
    for (const Tensor& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
    std::vector<std::size_t> shape =
        rank == 1 ? std::vector<std::size_t>{total} : std::vector<std::size_t>{total / cols, cols};
    return make_tracked(tape, std::move(shape), std::move(out), std::move(parents),
                        [sizes](const double* g, const std::vector<double*>& pg) {
                          std::size_t off = 0;
                          for (std::size_t p = 0; p < sizes.size(); ++p) {
                            if (pg[p])
                              for (std::size_t i = 0; i < sizes[p]; ++i) pg[p][i] += g[off + i];
                            off += sizes[p];
                          }
                        });
  }

  // axis == 1, rank 2
  std::size_t rows = parts[0].dim(0);
  std::size_t width = 0;
  std::vector<std::size_t> widths;
  for (const Tensor& p : parts) {
    detail::require(p.dim(0) == rows, "concat axis1: row mismatch " + p.shape_str());
    widths.push_back(p.dim(1));
    width += p.dim(1);
  }
  std::vector<double> out(rows * width);
  std::size_t off = 0;
  for (const Tensor& p : parts) {
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < p.dim(1); ++j) out[i * width + off + j] = p.at(i, j);
    off += p.dim(1);
  }
  return make_tracked(tape, {rows, width}, std::move(out), std::move(parents),
                      [rows, width, widths](const double* g, const std::vector<double*>& pg) {
                        std::size_t o = 0;
                        for (std::size_t p = 0; p < widths.size(); ++p) {
                          if (pg[p])
                            for (std::size_t i = 0; i < rows; ++i)
                              for (std::size_t j = 0; j < widths[p]; ++j)
                                pg[p][i * widths[p] + j] += g[i * width + o + j];
                          o += widths[p];
                        }
                      });
}

// Rows [r0, r1) of a rank-2 tensor.
inline Tensor slice_rows(const Tensor& x, std::size_t r0, std::size_t r1) {
  detail::require(x.rank() == 2 && r0 < r1 && r1 <= x.dim(0),
                  "slice_rows: bad range on " + x.shape_str());
  std::size_t d = x.dim(1), n = r1 - r0;
  std::vector<double> out(x.values().begin() + r0 * d, x.values().begin() + r1 * d);
  Tape* tape = common_tape({&x});
  return make_tracked(tape, {n, d}, std::move(out), {node_of(x, tape)},
                      [r0, n, d](const double* g, const std::vector<double*>& pg) {
                        if (!pg[0]) return;
                        for (std::size_t i = 0; i < n * d; ++i) pg[0][r0 * d + i] += g[i];
                      });
}

// Row t as a vector [d].
inline Tensor row(const Tensor& x, std::size_t t) {
  detail::require(x.rank() == 2 && t < x.dim(0), "row: index out of range on " + x.shape_str());
  std::size_t d = x.dim(1);
  std::vector<double> out(x.values().begin() + t * d, x.values().begin() + (t + 1) * d);
  Tape* tape = common_tape({&x});
  return make_tracked(tape, {d}, std::move(out), {node_of(x, tape)},
                      [t, d](const double* g, const std::vector<double*>& pg) {
                        if (!pg[0]) return;
                        for (std::size_t j = 0; j < d; ++j) pg[0][t * d + j] += g[j];
                      });
}

// Append zero rows until the matrix has `target_rows` rows (internal
// padding for convolutions over short sequences).
inline Tensor pad_rows(const Tensor& x, std::size_t target_rows) {
  detail::require(x.rank() == 2, "pad_rows: input must be rank 2");
  std::size_t n = x.dim(0), d = x.dim(1);
  if (n >= target_rows) return x;
  std::vector<double> out(target_rows * d, 0.0);
  std::copy(x.values().begin(), x.values().end(), out.begin());
  Tape* tape = common_tape({&x});
  return make_tracked(tape, {target_rows, d}, std::move(out), {node_of(x, tape)},
                      [n, d](const double* g, const std::vector<double*>& pg) {
                        if (!pg[0]) return;
                        for (std::size_t i = 0; i < n * d; ++i) pg[0][i] += g[i];
                      });
}

// Embedding lookup: rows of `table` selected by ids. Gradients accumulate
// only into selected rows; rows whose id equals `skip_grad_id` (the PAD row,
// when masked) receive none.
inline Tensor gather(const Tensor& table, const std::vector<int>& ids, int skip_grad_id = -1) {
  detail::require(table.rank() == 2, "gather: table must be rank 2");
  std::size_t v = table.dim(0), d = table.dim(1);
  for (int id : ids)
    detail::require(id >= 0 && static_cast<std::size_t>(id) < v,
                    "gather: id " + std::to_string(id) + " out of range for " + table.shape_str());
  std::size_t n = ids.size();
  std::vector<double> out(n * d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = table.at(static_cast<std::size_t>(ids[i]), j);
  Tape* tape = common_tape({&table});
  std::vector<int> ids_copy = ids;
  return make_tracked(tape, {n, d}, std::move(out), {node_of(table, tape)},
                      [ids_copy, d, skip_grad_id](const double* g, const std::vector<double*>& pg) {
                        if (!pg[0]) return;
                        for (std::size_t i = 0; i < ids_copy.size(); ++i) {
                          if (ids_copy[i] == skip_grad_id) continue;
                          for (std::size_t j = 0; j < d; ++j)
                            pg[0][static_cast<std::size_t>(ids_copy[i]) * d + j] += g[i * d + j];
                        }
                      });
}

// ---------------------------------------------------------------------------
// convolution and pooling
// ---------------------------------------------------------------------------

// Valid 1-d convolution: input [T, c_in], kernels [w, c_in, c_out] -> [T-w+1, c_out].
inline Tensor conv1d(const Tensor& input, const Tensor& kernels, const Tensor& bias) {
  detail::require(input.rank() == 2 && kernels.rank() == 3 && bias.rank() == 1,
                  "conv1d: expected input [T,c_in], kernels [w,c_in,c_out], bias [c_out]");
  std::size_t t_len = input.dim(0), c_in = input.dim(1);
  std::size_t w = kernels.dim(0), c_out = kernels.dim(2);
  detail::require(kernels.dim(1) == c_in,
                  "conv1d: channel mismatch " + input.shape_str() + " vs " + kernels.shape_str());
  detail::require(bias.dim(0) == c_out, "conv1d: bias shape " + bias.shape_str());
  detail::require(t_len >= w, "conv1d: input length " + std::to_string(t_len) +
                                  " shorter than filter width " + std::to_string(w));
  std::size_t t_out = t_len - w + 1;
  std::vector<double> out(t_out * c_out);
  for (std::size_t t = 0; t < t_out; ++t)
    for (std::size_t o = 0; o < c_out; ++o) {
      double s = bias.at(o);
      for (std::size_t k = 0; k < w; ++k)
        for (std::size_t c = 0; c < c_in; ++c) s += input.at(t + k, c) * kernels.at(k, c, o);
      out[t * c_out + o] = s;
    }
  Tape* tape = common_tape({&input, &kernels, &bias});
  auto din = input.storage();
  auto dk = kernels.storage();
  return make_tracked(
      tape, {t_out, c_out}, std::move(out),
      {node_of(input, tape), node_of(kernels, tape), node_of(bias, tape)},
      [t_out, c_out, w, c_in, din, dk](const double* g, const std::vector<double*>& pg) {
        for (std::size_t t = 0; t < t_out; ++t)
          for (std::size_t o = 0; o < c_out; ++o) {
            double gv = g[t * c_out + o];
            if (gv == 0.0) continue;
            if (pg[2]) pg[2][o] += gv;
            for (std::size_t k = 0; k < w; ++k)
              for (std::size_t c = 0; c < c_in; ++c) {
                if (pg[0]) pg[0][(t + k) * c_in + c] += gv * (*dk)[(k * c_in + c) * c_out + o];
                if (pg[1]) pg[1][(k * c_in + c) * c_out + o] += gv * (*din)[(t + k) * c_in + c];
              }
          }
      });
}

// Max over non-overlapping windows (stride = window, partial final window
// kept). Backward routes gradient to the first argmax of each window.
inline Tensor max_pool1d(const Tensor& x, std::size_t window) {
  detail::require(x.rank() == 2, "max_pool1d: input must be rank 2");
  detail::require(window >= 1, "max_pool1d: window must be >= 1");
  std::size_t t_len = x.dim(0), c = x.dim(1);
  std::size_t t_out = (t_len + window - 1) / window;
  std::vector<double> out(t_out * c);
  std::vector<std::size_t> argmax(t_out * c);
  for (std::size_t i = 0; i < t_out; ++i) {
    std::size_t lo = i * window, hi = std::min(lo + window, t_len);
    for (std::size_t j = 0; j < c; ++j) {
      std::size_t best = lo;
      double bv = x.at(lo, j);
      for (std::size_t t = lo + 1; t < hi; ++t)
        if (x.at(t, j) > bv) {
          bv = x.at(t, j);
          best = t;
        }
      out[i * c + j] = bv;
      argmax[i * c + j] = best;
    }
  }
  Tape* tape = common_tape({&x});
  return make_tracked(tape, {t_out, c}, std::move(out), {node_of(x, tape)},
                      [argmax, t_out, c](const double* g, const std::vector<double*>& pg) {
                        if (!pg[0]) return;
                        for (std::size_t i = 0; i < t_out * c; ++i)
                          pg[0][argmax[i] * c + (i % c)] += g[i];
                      });
}

// Max over all time steps -> [c].
inline Tensor global_max_pool(const Tensor& x) {
  detail::require(x.rank() == 2, "global_max_pool: input must be rank 2");
  std::size_t t_len = x.dim(0), c = x.dim(1);
  std::vector<double> out(c);
  std::vector<std::size_t> argmax(c, 0);
  for (std::size_t j = 0; j < c; ++j) {
    double bv = x.at(0, j);
    for (std::size_t t = 1; t < t_len; ++t)
      if (x.at(t, j) > bv) {
        bv = x.at(t, j);
        argmax[j] = t;
      }
    out[j] = bv;
  }
  Tape* tape = common_tape({&x});
  return make_tracked(tape, {c}, std::move(out), {node_of(x, tape)},
                      [argmax, c](const double* g, const std::vector<double*>& pg) {
                        if (!pg[0]) return;
                        for (std::size_t j = 0; j < c; ++j) pg[0][argmax[j] * c + j] += g[j];
                      });
}

// ---------------------------------------------------------------------------
// activations
// ---------------------------------------------------------------------------

inline Tensor relu(const Tensor& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.at(i) > 0.0 ? x.at(i) : 0.0;
  Tape* tape = common_tape({&x});
  auto dx = x.storage();
  std::size_t n = x.size();
  return make_tracked(tape, x.shape(), std::move(out), {node_of(x, tape)},
                      [n, dx](const double* g, const std::vector<double*>& pg) {
                        if (!pg[0]) return;
                        for (std::size_t i = 0; i < n; ++i)
                          if ((*dx)[i] > 0.0) pg[0][i] += g[i];
                      });
}

inline Tensor sigmoid(const Tensor& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = detail::stable_sigmoid(x.at(i));
  Tape* tape = common_tape({&x});
  auto saved = std::make_shared<std::vector<double>>(out);
  std::size_t n = x.size();
  return make_tracked(tape, x.shape(), std::move(out), {node_of(x, tape)},
                      [n, saved](const double* g, const std::vector<double*>& pg) {
                        if (!pg[0]) return;
                        for (std::size_t i = 0; i < n; ++i) {
                          double s = (*saved)[i];
                          pg[0][i] += g[i] * s * (1.0 - s);
                        }
                      });
}

inline Tensor tanh_op(const Tensor& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(x.at(i));
  Tape* tape = common_tape({&x});
  auto saved = std::make_shared<std::vector<double>>(out);
  std::size_t n = x.size();
  return make_tracked(tape, x.shape(), std::move(out), {node_of(x, tape)},
                      [n, saved](const double* g, const std::vector<double*>& pg) {
                        if (!pg[0]) return;
                        for (std::size_t i = 0; i < n; ++i)
                          pg[0][i] += g[i] * (1.0 - (*saved)[i] * (*saved)[i]);
                      });
}

// ---------------------------------------------------------------------------
// softmax / losses / similarity
// ---------------------------------------------------------------------------

namespace detail {
inline void softmax_into(const double* x, double* y, std::size_t n) {
  double m = x[0];
  for (std::size_t i = 1; i < n; ++i) m = std::max(m, x[i]);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = std::exp(x[i] - m);
    z += y[i];
  }
  for (std::size_t i = 0; i < n; ++i) y[i] /= z;
}
}  // namespace detail

// Softmax over a vector, computed with max subtraction.
inline Tensor softmax(const Tensor& logits) {
  detail::require(logits.rank() == 1 && logits.size() > 0, "softmax: nonempty vector required");
  std::size_t n = logits.size();
  std::vector<double> out(n);
  detail::softmax_into(logits.values().data(), out.data(), n);
  Tape* tape = common_tape({&logits});
  auto saved = std::make_shared<std::vector<double>>(out);
  return make_tracked(tape, {n}, std::move(out), {node_of(logits, tape)},
                      [n, saved](const double* g, const std::vector<double*>& pg) {
                        if (!pg[0]) return;
                        double dot = 0.0;
                        for (std::size_t i = 0; i < n; ++i) dot += g[i] * (*saved)[i];
                        for (std::size_t i = 0; i < n; ++i)
                          pg[0][i] += (*saved)[i] * (g[i] - dot);
                      });
}

// Row-wise softmax of a [n,m] matrix (attention weights).
inline Tensor softmax_rows(const Tensor& scores) {
  detail::require(scores.rank() == 2, "softmax_rows: input must be rank 2");
  std::size_t n = scores.dim(0), m = scores.dim(1);
  std::vector<double> out(n * m);
  for (std::size_t i = 0; i < n; ++i)
    detail::softmax_into(scores.values().data() + i * m, out.data() + i * m, m);
  Tape* tape = common_tape({&scores});
  auto saved = std::make_shared<std::vector<double>>(out);
  return make_tracked(tape, {n, m}, std::move(out), {node_of(scores, tape)},
                      [n, m, saved](const double* g, const std::vector<double*>& pg) {
                        if (!pg[0]) return;
                        for (std::size_t i = 0; i < n; ++i) {
                          const double* s = saved->data() + i * m;
                          const double* gi = g + i * m;
                          double dot = 0.0;
                          for (std::size_t j = 0; j < m; ++j) dot += gi[j] * s[j];
                          for (std::size_t j = 0; j < m; ++j)
                            pg[0][i * m + j] += s[j] * (gi[j] - dot);
                        }
                      });
}

// -log softmax(logits)[label] in fused log-sum-exp form.
inline Tensor cross_entropy(const Tensor& logits, int label) {
  detail::require(logits.rank() == 1 && logits.size() >= 2, "cross_entropy: logits vector of >= 2");
  detail::require(label >= 0 && static_cast<std::size_t>(label) < logits.size(),
                  "cross_entropy: label " + std::to_string(label) + " out of range");
  std::size_t n = logits.size();
  const double* x = logits.values().data();
  double m = x[0];
  for (std::size_t i = 1; i < n; ++i) m = std::max(m, x[i]);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) z += std::exp(x[i] - m);
  double loss = m + std::log(z) - x[static_cast<std::size_t>(label)];
  Tape* tape = common_tape({&logits});
  auto probs = std::make_shared<std::vector<double>>(n);
  detail::softmax_into(x, probs->data(), n);
  return make_tracked(tape, {1}, {loss}, {node_of(logits, tape)},
                      [n, probs, label](const double* g, const std::vector<double*>& pg) {
                        if (!pg[0]) return;
                        for (std::size_t i = 0; i < n; ++i) {
                          double onehot = (static_cast<int>(i) == label) ? 1.0 : 0.0;
                          pg[0][i] += g[0] * ((*probs)[i] - onehot);
                        }
                      });
}

// u.v / (|u||v|); errors on zero-norm input.
inline Tensor cosine_similarity(const Tensor& u, const Tensor& v) {
  detail::require(u.rank() == 1 && v.rank() == 1 && u.size() == v.size(),
                  "cosine_similarity: vectors of equal length required");
  std::size_t n = u.size();
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    dot += u.at(i) * v.at(i);
    nu += u.at(i) * u.at(i);
    nv += v.at(i) * v.at(i);
  }
  if (nu == 0.0 || nv == 0.0)
    throw NumericError("cosine_similarity: zero-norm input vector");
  nu = std::sqrt(nu);
  nv = std::sqrt(nv);
  double s = dot / (nu * nv);
  Tape* tape = common_tape({&u, &v});
  auto du = u.storage();
  auto dv = v.storage();
  return make_tracked(tape, {1}, {s}, {node_of(u, tape), node_of(v, tape)},
                      [n, du, dv, nu, nv, s](const double* g, const std::vector<double*>& pg) {
                        for (std::size_t i = 0; i < n; ++i) {
                          if (pg[0])
                            pg[0][i] += g[0] * ((*dv)[i] / (nu * nv) - s * (*du)[i] / (nu * nu));
                          if (pg[1])
                            pg[1][i] += g[0] * ((*du)[i] / (nu * nv) - s * (*dv)[i] / (nv * nv));
                        }
                      });
}

// Per-row layer normalization with learned gain/shift.
inline Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                         double eps = 1e-5) {
  detail::require(x.rank() == 2 && gamma.rank() == 1 && beta.rank() == 1 &&
                      gamma.dim(0) == x.dim(1) && beta.dim(0) == x.dim(1),
                  "layer_norm: x [n,d], gamma [d], beta [d] required");
  std::size_t n = x.dim(0), d = x.dim(1);
  std::vector<double> out(n * d);
  auto xhat = std::make_shared<std::vector<double>>(n * d);
  auto inv_std = std::make_shared<std::vector<double>>(n);
  for (std::size_t i = 0; i < n; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += x.at(i, j);
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      double c = x.at(i, j) - mean;
      var += c * c;
    }
    var /= static_cast<double>(d);
    double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[i] = is;
    for (std::size_t j = 0; j < d; ++j) {
      double xh = (x.at(i, j) - mean) * is;
      (*xhat)[i * d + j] = xh;
      out[i * d + j] = gamma.at(j) * xh + beta.at(j);
    }
  }
  Tape* tape = common_tape({&x, &gamma, &beta});
  auto dgamma = gamma.storage();
  return make_tracked(
      tape, {n, d}, std::move(out),
      {node_of(x, tape), node_of(gamma, tape), node_of(beta, tape)},
      [n, d, xhat, inv_std, dgamma](const double* g, const std::vector<double*>& pg) {
        for (std::size_t i = 0; i < n; ++i) {
          const double* gi = g + i * d;
          const double* xh = xhat->data() + i * d;
          if (pg[1] || pg[2])
            for (std::size_t j = 0; j < d; ++j) {
              if (pg[1]) pg[1][j] += gi[j] * xh[j];
              if (pg[2]) pg[2][j] += gi[j];
            }
          if (pg[0]) {
            double sum_gg = 0.0, sum_ggx = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              double gg = gi[j] * (*dgamma)[j];
              sum_gg += gg;
              sum_ggx += gg * xh[j];
            }
            double inv_d = 1.0 / static_cast<double>(d);
            for (std::size_t j = 0; j < d; ++j) {
              double gg = gi[j] * (*dgamma)[j];
              pg[0][i * d + j] +=
                  (*inv_std)[i] * (gg - inv_d * sum_gg - xh[j] * inv_d * sum_ggx);
            }
          }
        }
      });
}

// Mean of scalar tensors (the batch loss).
inline Tensor mean_scalars(const std::vector<Tensor>& xs) {
  detail::require(!xs.empty(), "mean_scalars: empty input");
  double sum = 0.0;
  Tape* tape = nullptr;
  std::vector<int> parents;
  for (const Tensor& x : xs) {
    detail::require(x.size() == 1, "mean_scalars: inputs must be scalars");
    sum += x.value();
    Tape* t = common_tape({&x});
    if (t != nullptr) {
      detail::require(tape == nullptr || tape == t, "mean_scalars: operands on different tapes");
      tape = t;
    }
  }
  for (const Tensor& x : xs) parents.push_back(node_of(x, tape));
  std::size_t n = xs.size();
  return make_tracked(tape, {1}, {sum / static_cast<double>(n)}, std::move(parents),
                      [n](const double* g, const std::vector<double*>& pg) {
                        double share = g[0] / static_cast<double>(n);
                        for (std::size_t i = 0; i < n; ++i)
                          if (pg[i]) pg[i][0] += share;
                      });
}

}  // namespace pairsim
