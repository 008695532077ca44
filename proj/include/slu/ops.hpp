#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "slu/errors.hpp"
#include "slu/rng.hpp"
#include "slu/tensor.hpp"

namespace slu {
namespace ops {

// Floor applied inside every cross-entropy log.
inline constexpr double kLogFloor = 1e-12;

template <class S>
inline void check_2d(const Tensor<S>& t, const char* who) {
  if (t.shape().size() != 2) throw ShapeError(std::string(who) + ": expected 2-D tensor, got " + shape_str(t.shape()));
}

template <class S>
inline bool wants_grad(const Tensor<S>& t) {
  return Tape<S>::active() && t.requires_grad();
}

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.shape() != b.shape())
    throw ShapeError("add: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor<S> out = Tensor<S>::zeros(a.shape());
  const S* pa = a.data();
  const S* pb = b.data();
  S* po = out.data();
  Index n = a.numel();
  for (Index i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
  if (wants_grad(a) || wants_grad(b)) {
    out.set_requires_grad(true);
    auto ad = a.impl(), bd = b.impl(), od = out.impl();
    Tape<S>::current()->record([ad, bd, od] {
      if (od->g.empty()) return;
      Index n = od->numel();
      if (ad->requires_grad) {
        ensure_grad(*ad);
        for (Index i = 0; i < n; ++i) ad->g[i] += od->g[i];
      }
      if (bd->requires_grad) {
        ensure_grad(*bd);
        for (Index i = 0; i < n; ++i) bd->g[i] += od->g[i];
      }
    });
  }
  return out;
}

template <class S>
Tensor<S> scale(const Tensor<S>& a, S c) {
  Tensor<S> out = Tensor<S>::zeros(a.shape());
  const S* pa = a.data();
  S* po = out.data();
  Index n = a.numel();
  for (Index i = 0; i < n; ++i) po[i] = pa[i] * c;
  if (wants_grad(a)) {
    out.set_requires_grad(true);
    auto ad = a.impl(), od = out.impl();
    Tape<S>::current()->record([ad, od, c] {
      if (od->g.empty()) return;
      ensure_grad(*ad);
      Index n = od->numel();
      for (Index i = 0; i < n; ++i) ad->g[i] += od->g[i] * c;
    });
  }
  return out;
}

template <class S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.shape() != b.shape())
    throw ShapeError("mul: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor<S> out = Tensor<S>::zeros(a.shape());
  const S* pa = a.data();
  const S* pb = b.data();
  S* po = out.data();
  Index n = a.numel();
  for (Index i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
  if (wants_grad(a) || wants_grad(b)) {
    out.set_requires_grad(true);
    auto ad = a.impl(), bd = b.impl(), od = out.impl();
    Tape<S>::current()->record([ad, bd, od] {
      if (od->g.empty()) return;
      Index n = od->numel();
      if (ad->requires_grad) {
        ensure_grad(*ad);
        for (Index i = 0; i < n; ++i) ad->g[i] += od->g[i] * bd->v[i];
      }
      if (bd->requires_grad) {
        ensure_grad(*bd);
        for (Index i = 0; i < n; ++i) bd->g[i] += od->g[i] * ad->v[i];
      }
    });
  }
  return out;
}

template <class S>
Tensor<S> relu(const Tensor<S>& a) {
  Tensor<S> out = Tensor<S>::zeros(a.shape());
  const S* pa = a.data();
  S* po = out.data();
  Index n = a.numel();
  for (Index i = 0; i < n; ++i) po[i] = pa[i] > S(0) ? pa[i] : S(0);
  if (wants_grad(a)) {
    out.set_requires_grad(true);
    auto ad = a.impl(), od = out.impl();
    Tape<S>::current()->record([ad, od] {
      if (od->g.empty()) return;
      ensure_grad(*ad);
      Index n = od->numel();
      for (Index i = 0; i < n; ++i)
        if (ad->v[i] > S(0)) ad->g[i] += od->g[i];
    });
  }
  return out;
}

// Values are copied; gradient flow stops here.
template <class S>
Tensor<S> detach(const Tensor<S>& a) {
  Tensor<S> out = Tensor<S>::zeros(a.shape());
  std::copy(a.data(), a.data() + a.numel(), out.data());
  return out;
}

template <class S>
Tensor<S> sum(const Tensor<S>& a) {
  Tensor<S> out = Tensor<S>::zeros({1, 1});
  const S* pa = a.data();
  S acc = 0;
  Index n = a.numel();
  for (Index i = 0; i < n; ++i) acc += pa[i];
  out.data()[0] = acc;
  if (wants_grad(a)) {
    out.set_requires_grad(true);
    auto ad = a.impl(), od = out.impl();
    Tape<S>::current()->record([ad, od] {
      if (od->g.empty()) return;
      ensure_grad(*ad);
      S g = od->g[0];
      Index n = ad->numel();
      for (Index i = 0; i < n; ++i) ad->g[i] += g;
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// matrix products
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  check_2d(a, "matmul");
  check_2d(b, "matmul");
  Index m = a.rows(), k = a.cols(), k2 = b.rows(), n = b.cols();
  if (k != k2)
    throw ShapeError("matmul: inner dimensions disagree " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  Tensor<S> out = Tensor<S>::zeros({m, n});
  const S* pa = a.data();
  const S* pb = b.data();
  S* po = out.data();
  for (Index i = 0; i < m; ++i) {
    const S* arow = pa + i * k;
    S* orow = po + i * n;
    for (Index kk = 0; kk < k; ++kk) {
      S aik = arow[kk];
      if (aik == S(0)) continue;
      const S* brow = pb + kk * n;
      for (Index j = 0; j < n; ++j) orow[j] += aik * brow[j];
    }
  }
  if (wants_grad(a) || wants_grad(b)) {
    out.set_requires_grad(true);
    auto ad = a.impl(), bd = b.impl(), od = out.impl();
    Tape<S>::current()->record([ad, bd, od, m, k, n] {
      if (od->g.empty()) return;
      const S* gc = od->g.data();
      if (ad->requires_grad) {
        ensure_grad(*ad);
        // dA = dC . B^T
        for (Index i = 0; i < m; ++i) {
          const S* grow = gc + i * n;
          S* garow = ad->g.data() + i * k;
          for (Index kk = 0; kk < k; ++kk) {
            const S* brow = bd->v.data() + kk * n;
            S acc = 0;
            for (Index j = 0; j < n; ++j) acc += grow[j] * brow[j];
            garow[kk] += acc;
          }
        }
      }
      if (bd->requires_grad) {
        ensure_grad(*bd);
        // dB = A^T . dC
        for (Index i = 0; i < m; ++i) {
          const S* arow = ad->v.data() + i * k;
          const S* grow = gc + i * n;
          for (Index kk = 0; kk < k; ++kk) {
            S aik = arow[kk];
            if (aik == S(0)) continue;
            S* gbrow = bd->g.data() + kk * n;
            for (Index j = 0; j < n; ++j) gbrow[j] += aik * grow[j];
          }
        }
      }
    });
  }
  return out;
}

// C = A . B^T ; keys/targets stay row-major.
template <class S>
Tensor<S> matmul_nt(const Tensor<S>& a, const Tensor<S>& b) {
  check_2d(a, "matmul_nt");
  check_2d(b, "matmul_nt");
  Index m = a.rows(), k = a.cols(), n = b.rows();
  if (k != b.cols())
    throw ShapeError("matmul_nt: inner dimensions disagree " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()) + "^T");
  Tensor<S> out = Tensor<S>::zeros({m, n});
  const S* pa = a.data();
  const S* pb = b.data();
  S* po = out.data();
  for (Index i = 0; i < m; ++i) {
    const S* arow = pa + i * k;
    S* orow = po + i * n;
    for (Index j = 0; j < n; ++j) {
      const S* brow = pb + j * k;
      S acc = 0;
      for (Index kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
      orow[j] = acc;
    }
  }
  if (wants_grad(a) || wants_grad(b)) {
    out.set_requires_grad(true);
    auto ad = a.impl(), bd = b.impl(), od = out.impl();
    Tape<S>::current()->record([ad, bd, od, m, k, n] {
      if (od->g.empty()) return;
      const S* gc = od->g.data();
      if (ad->requires_grad) {
        ensure_grad(*ad);
        // dA = dC . B
        for (Index i = 0; i < m; ++i) {
          const S* grow = gc + i * n;
          S* garow = ad->g.data() + i * k;
          for (Index j = 0; j < n; ++j) {
            S gij = grow[j];
            if (gij == S(0)) continue;
            const S* brow = bd->v.data() + j * k;
            for (Index kk = 0; kk < k; ++kk) garow[kk] += gij * brow[kk];
          }
        }
      }
      if (bd->requires_grad) {
        ensure_grad(*bd);
        // dB = dC^T . A
        for (Index i = 0; i < m; ++i) {
          const S* grow = gc + i * n;
          const S* arow = ad->v.data() + i * k;
          for (Index j = 0; j < n; ++j) {
            S gij = grow[j];
            if (gij == S(0)) continue;
            S* gbrow = bd->g.data() + j * k;
            for (Index kk = 0; kk < k; ++kk) gbrow[kk] += gij * arow[kk];
          }
        }
      }
    });
  }
  return out;
}

// m [RxC] + v [1xC] broadcast over rows.
template <class S>
Tensor<S> add_rowvec(const Tensor<S>& m, const Tensor<S>& v) {
  check_2d(m, "add_rowvec");
  if (v.rows() != 1 || v.cols() != m.cols())
    throw ShapeError("add_rowvec: " + shape_str(m.shape()) + " vs " + shape_str(v.shape()));
  Tensor<S> out = Tensor<S>::zeros(m.shape());
  Index r = m.rows(), c = m.cols();
  const S* pm = m.data();
  const S* pv = v.data();
  S* po = out.data();
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) po[i * c + j] = pm[i * c + j] + pv[j];
  if (wants_grad(m) || wants_grad(v)) {
    out.set_requires_grad(true);
    auto md = m.impl(), vd = v.impl(), od = out.impl();
    Tape<S>::current()->record([md, vd, od, r, c] {
      if (od->g.empty()) return;
      if (md->requires_grad) {
        ensure_grad(*md);
        Index n = od->numel();
        for (Index i = 0; i < n; ++i) md->g[i] += od->g[i];
      }
      if (vd->requires_grad) {
        ensure_grad(*vd);
        for (Index i = 0; i < r; ++i)
          for (Index j = 0; j < c; ++j) vd->g[j] += od->g[i * c + j];
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// normalization / softmax
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> softmax_rows(const Tensor<S>& x) {
  check_2d(x, "softmax_rows");
  Index r = x.rows(), c = x.cols();
  Tensor<S> out = Tensor<S>::zeros(x.shape());
  const S* px = x.data();
  S* po = out.data();
  for (Index i = 0; i < r; ++i) {
    const S* xr = px + i * c;
    S* yr = po + i * c;
    S mx = xr[0];
    for (Index j = 1; j < c; ++j) mx = std::max(mx, xr[j]);
    S denom = 0;
    for (Index j = 0; j < c; ++j) {
      yr[j] = std::exp(xr[j] - mx);
      denom += yr[j];
    }
    for (Index j = 0; j < c; ++j) yr[j] /= denom;
  }
  if (wants_grad(x)) {
    out.set_requires_grad(true);
    auto xd = x.impl(), od = out.impl();
    Tape<S>::current()->record([xd, od, r, c] {
      if (od->g.empty()) return;
      ensure_grad(*xd);
      for (Index i = 0; i < r; ++i) {
        const S* y = od->v.data() + i * c;
        const S* gy = od->g.data() + i * c;
        S* gx = xd->g.data() + i * c;
        S dot = 0;
        for (Index j = 0; j < c; ++j) dot += gy[j] * y[j];
        for (Index j = 0; j < c; ++j) gx[j] += y[j] * (gy[j] - dot);
      }
    });
  }
  return out;
}

// Normalizes each row of x, then applies gain/bias [1xd].
template <class S>
Tensor<S> layer_norm(const Tensor<S>& x, const Tensor<S>& gain, const Tensor<S>& bias, S eps) {
  check_2d(x, "layer_norm");
  Index r = x.rows(), d = x.cols();
  if (gain.rows() != 1 || gain.cols() != d || bias.rows() != 1 || bias.cols() != d)
    throw ShapeError("layer_norm: " + shape_str(x.shape()) + " vs gain " + shape_str(gain.shape()) +
                     ", bias " + shape_str(bias.shape()));
  Tensor<S> out = Tensor<S>::zeros(x.shape());
  std::vector<S> xhat(static_cast<size_t>(r * d));
  std::vector<S> inv_sigma(static_cast<size_t>(r));
  const S* px = x.data();
  const S* pg = gain.data();
  const S* pb = bias.data();
  S* po = out.data();
  for (Index i = 0; i < r; ++i) {
    const S* xr = px + i * d;
    S mean = 0;
    for (Index j = 0; j < d; ++j) mean += xr[j];
    mean /= S(d);
    S var = 0;
    for (Index j = 0; j < d; ++j) {
      S t = xr[j] - mean;
      var += t * t;
    }
    var /= S(d);
    S isg = S(1) / std::sqrt(var + eps);
    inv_sigma[static_cast<size_t>(i)] = isg;
    for (Index j = 0; j < d; ++j) {
      S xh = (xr[j] - mean) * isg;
      xhat[static_cast<size_t>(i * d + j)] = xh;
      po[i * d + j] = pg[j] * xh + pb[j];
    }
  }
  if (wants_grad(x) || wants_grad(gain) || wants_grad(bias)) {
    out.set_requires_grad(true);
    auto xd = x.impl(), gd = gain.impl(), bd = bias.impl(), od = out.impl();
    Tape<S>::current()->record([xd, gd, bd, od, r, d, xhat = std::move(xhat),
                                inv_sigma = std::move(inv_sigma)] {
      if (od->g.empty()) return;
      for (Index i = 0; i < r; ++i) {
        const S* gy = od->g.data() + i * d;
        const S* xh = xhat.data() + i * d;
        if (gd->requires_grad) {
          ensure_grad(*gd);
          for (Index j = 0; j < d; ++j) gd->g[j] += gy[j] * xh[j];
        }
        if (bd->requires_grad) {
          ensure_grad(*bd);
          for (Index j = 0; j < d; ++j) bd->g[j] += gy[j];
        }
        if (xd->requires_grad) {
          ensure_grad(*xd);
          S* gx = xd->g.data() + i * d;
          S isg = inv_sigma[static_cast<size_t>(i)];
          S mean_gg = 0, mean_ggx = 0;
          for (Index j = 0; j < d; ++j) {
            S gg = gy[j] * gd->v[j];
            mean_gg += gg;
            mean_ggx += gg * xh[j];
          }
          mean_gg /= S(d);
          mean_ggx /= S(d);
          for (Index j = 0; j < d; ++j) {
            S gg = gy[j] * gd->v[j];
            gx[j] += isg * (gg - mean_gg - xh[j] * mean_ggx);
          }
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// losses (inputs are post-softmax distributions; logs clamped at kLogFloor)
// ---------------------------------------------------------------------------

// Sum of -log pred[r][target[r]] over rows where mask (if given) is nonzero.
template <class S>
Tensor<S> ce_hard_rows(const Tensor<S>& pred, const std::vector<int>& targets,
                       const std::vector<uint8_t>* row_mask = nullptr) {
  check_2d(pred, "ce_hard_rows");
  Index r = pred.rows(), c = pred.cols();
  if (static_cast<Index>(targets.size()) != r)
    throw AlignmentError("ce_hard_rows: " + std::to_string(targets.size()) + " targets for " +
                         std::to_string(r) + " rows");
  if (row_mask && static_cast<Index>(row_mask->size()) != r)
    throw AlignmentError("ce_hard_rows: mask length mismatch");
  const S floor = static_cast<S>(kLogFloor);
  Tensor<S> out = Tensor<S>::zeros({1, 1});
  S acc = 0;
  for (Index i = 0; i < r; ++i) {
    if (row_mask && !(*row_mask)[static_cast<size_t>(i)]) continue;
    int t = targets[static_cast<size_t>(i)];
    if (t < 0 || t >= c)
      throw LabelError("class index " + std::to_string(t) + " out of range [0," + std::to_string(c) + ")");
    acc += -std::log(std::max(pred(i, t), floor));
  }
  out.data()[0] = acc;
  if (wants_grad(pred)) {
    out.set_requires_grad(true);
    auto pd = pred.impl(), od = out.impl();
    std::vector<uint8_t> mask_copy = row_mask ? *row_mask : std::vector<uint8_t>();
    Tape<S>::current()->record([pd, od, targets, mask_copy, r, c, floor] {
      if (od->g.empty()) return;
      ensure_grad(*pd);
      S g = od->g[0];
      for (Index i = 0; i < r; ++i) {
        if (!mask_copy.empty() && !mask_copy[static_cast<size_t>(i)]) continue;
        int t = targets[static_cast<size_t>(i)];
        S p = pd->v[static_cast<size_t>(i * c + t)];
        if (p > floor) pd->g[static_cast<size_t>(i * c + t)] -= g / p;
      }
    });
  }
  return out;
}

// Sum over rows of -sum_c target*log(pred). When grad_through_target is
// false the target side is treated as a constant.
template <class S>
Tensor<S> ce_soft_rows(const Tensor<S>& pred, const Tensor<S>& target,
                       const std::vector<uint8_t>* row_mask = nullptr,
                       bool grad_through_target = false) {
  check_2d(pred, "ce_soft_rows");
  if (pred.shape() != target.shape())
    throw AlignmentError("ce_soft_rows: " + shape_str(pred.shape()) + " vs " + shape_str(target.shape()));
  Index r = pred.rows(), c = pred.cols();
  if (row_mask && static_cast<Index>(row_mask->size()) != r)
    throw AlignmentError("ce_soft_rows: mask length mismatch");
  const S floor = static_cast<S>(kLogFloor);
  Tensor<S> out = Tensor<S>::zeros({1, 1});
  S acc = 0;
  for (Index i = 0; i < r; ++i) {
    if (row_mask && !(*row_mask)[static_cast<size_t>(i)]) continue;
    for (Index j = 0; j < c; ++j) acc += -target(i, j) * std::log(std::max(pred(i, j), floor));
  }
  out.data()[0] = acc;
  bool track_pred = wants_grad(pred);
  bool track_tgt = grad_through_target && wants_grad(target);
  if (track_pred || track_tgt) {
    out.set_requires_grad(true);
    auto pd = pred.impl(), td = target.impl(), od = out.impl();
    std::vector<uint8_t> mask_copy = row_mask ? *row_mask : std::vector<uint8_t>();
    Tape<S>::current()->record([pd, td, od, mask_copy, r, c, floor, track_tgt] {
      if (od->g.empty()) return;
      S g = od->g[0];
      if (pd->requires_grad) {
        ensure_grad(*pd);
        for (Index i = 0; i < r; ++i) {
          if (!mask_copy.empty() && !mask_copy[static_cast<size_t>(i)]) continue;
          for (Index j = 0; j < c; ++j) {
            S p = pd->v[static_cast<size_t>(i * c + j)];
            if (p > floor) pd->g[static_cast<size_t>(i * c + j)] -= g * td->v[static_cast<size_t>(i * c + j)] / p;
          }
        }
      }
      if (track_tgt && td->requires_grad) {
        ensure_grad(*td);
        for (Index i = 0; i < r; ++i) {
          if (!mask_copy.empty() && !mask_copy[static_cast<size_t>(i)]) continue;
          for (Index j = 0; j < c; ++j)
            td->g[static_cast<size_t>(i * c + j)] -= g * std::log(std::max(pd->v[static_cast<size_t>(i * c + j)], floor));
        }
      }
    });
  }
  return out;
}

// Single-distribution conveniences.
template <class S>
Tensor<S> cross_entropy(const Tensor<S>& pred_dist, int target_index) {
  return ce_hard_rows(pred_dist, std::vector<int>{target_index});
}

template <class S>
Tensor<S> cross_entropy(const Tensor<S>& pred_dist, const Tensor<S>& target_dist,
                        bool grad_through_target = false) {
  return ce_soft_rows(pred_dist, target_dist, nullptr, grad_through_target);
}

// ---------------------------------------------------------------------------
// dropout
// ---------------------------------------------------------------------------

// Inverted dropout; identity when not training or p == 0.
template <class S>
Tensor<S> dropout(const Tensor<S>& x, double p, bool training, Rng* rng) {
  if (p < 0.0 || p >= 1.0) throw ConfigError("dropout rate " + std::to_string(p) + " outside [0,1)");
  if (!training || p == 0.0) return x;
  if (!rng) throw ContractError("dropout: training mode requires an rng");
  Index n = x.numel();
  std::vector<uint8_t> keep(static_cast<size_t>(n));
  for (Index i = 0; i < n; ++i) keep[static_cast<size_t>(i)] = rng->bernoulli(p) ? 0 : 1;
  S inv = static_cast<S>(1.0 / (1.0 - p));
  Tensor<S> out = Tensor<S>::zeros(x.shape());
  const S* px = x.data();
  S* po = out.data();
  for (Index i = 0; i < n; ++i) po[i] = keep[static_cast<size_t>(i)] ? px[i] * inv : S(0);
  if (wants_grad(x)) {
    out.set_requires_grad(true);
    auto xd = x.impl(), od = out.impl();
    Tape<S>::current()->record([xd, od, keep = std::move(keep), inv, n] {
      if (od->g.empty()) return;
      ensure_grad(*xd);
      for (Index i = 0; i < n; ++i)
        if (keep[static_cast<size_t>(i)]) xd->g[i] += od->g[i] * inv;
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// lookup / assembly
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> embedding(const Tensor<S>& table, const std::vector<int>& ids) {
  check_2d(table, "embedding");
  Index v = table.rows(), d = table.cols();
  Index n = static_cast<Index>(ids.size());
  Tensor<S> out = Tensor<S>::zeros({n, d});
  const S* pt = table.data();
  S* po = out.data();
  for (Index i = 0; i < n; ++i) {
    int id = ids[static_cast<size_t>(i)];
    if (id < 0 || id >= v) throw LabelError("embedding id " + std::to_string(id) + " out of range [0," + std::to_string(v) + ")");
    std::copy(pt + id * d, pt + (id + 1) * d, po + i * d);
  }
  if (wants_grad(table)) {
    out.set_requires_grad(true);
    auto td = table.impl(), od = out.impl();
    Tape<S>::current()->record([td, od, ids, d, n] {
      if (od->g.empty()) return;
      ensure_grad(*td);
      for (Index i = 0; i < n; ++i) {
        S* grow = td->g.data() + ids[static_cast<size_t>(i)] * d;
        const S* gor = od->g.data() + i * d;
        for (Index j = 0; j < d; ++j) grow[j] += gor[j];
      }
    });
  }
  return out;
}

// Row i comes from table_a when pick_a[i] is nonzero, table_b otherwise;
// ids[i] indexes the selected table.
template <class S>
Tensor<S> dual_embedding(const Tensor<S>& table_a, const Tensor<S>& table_b,
                         const std::vector<int>& ids, const std::vector<uint8_t>& pick_a) {
  check_2d(table_a, "dual_embedding");
  check_2d(table_b, "dual_embedding");
  Index d = table_a.cols();
  if (table_b.cols() != d)
    throw ShapeError("dual_embedding: table widths differ " + shape_str(table_a.shape()) + " vs " +
                     shape_str(table_b.shape()));
  if (ids.size() != pick_a.size()) throw AlignmentError("dual_embedding: ids/selector length mismatch");
  Index n = static_cast<Index>(ids.size());
  Tensor<S> out = Tensor<S>::zeros({n, d});
  S* po = out.data();
  for (Index i = 0; i < n; ++i) {
    const Tensor<S>& t = pick_a[static_cast<size_t>(i)] ? table_a : table_b;
    int id = ids[static_cast<size_t>(i)];
    if (id < 0 || id >= t.rows())
      throw LabelError("dual_embedding id " + std::to_string(id) + " out of range [0," + std::to_string(t.rows()) + ")");
    std::copy(t.data() + id * d, t.data() + (id + 1) * d, po + i * d);
  }
  if (wants_grad(table_a) || wants_grad(table_b)) {
    out.set_requires_grad(true);
    auto ad = table_a.impl(), bd = table_b.impl(), od = out.impl();
    Tape<S>::current()->record([ad, bd, od, ids, pick_a, d, n] {
      if (od->g.empty()) return;
      for (Index i = 0; i < n; ++i) {
        auto& t = pick_a[static_cast<size_t>(i)] ? *ad : *bd;
        if (!t.requires_grad) continue;
        ensure_grad(t);
        S* grow = t.g.data() + ids[static_cast<size_t>(i)] * d;
        const S* gor = od->g.data() + i * d;
        for (Index j = 0; j < d; ++j) grow[j] += gor[j];
      }
    });
  }
  return out;
}

template <class S>
Tensor<S> slice_rows(const Tensor<S>& x, Index r0, Index r1) {
  check_2d(x, "slice_rows");
  if (r0 < 0 || r1 > x.rows() || r0 > r1)
    throw ShapeError("slice_rows: [" + std::to_string(r0) + "," + std::to_string(r1) + ") of " +
                     shape_str(x.shape()));
  Index c = x.cols();
  Tensor<S> out = Tensor<S>::zeros({r1 - r0, c});
  std::copy(x.data() + r0 * c, x.data() + r1 * c, out.data());
  if (wants_grad(x)) {
    out.set_requires_grad(true);
    auto xd = x.impl(), od = out.impl();
    Tape<S>::current()->record([xd, od, r0, c] {
      if (od->g.empty()) return;
      ensure_grad(*xd);
      Index n = od->numel();
      for (Index i = 0; i < n; ++i) xd->g[r0 * c + i] += od->g[i];
    });
  }
  return out;
}

template <class S>
Tensor<S> row(const Tensor<S>& x, Index i) {
  return slice_rows(x, i, i + 1);
}

template <class S>
Tensor<S> slice_cols(const Tensor<S>& x, Index c0, Index c1) {
  check_2d(x, "slice_cols");
  if (c0 < 0 || c1 > x.cols() || c0 > c1)
    throw ShapeError("slice_cols: [" + std::to_string(c0) + "," + std::to_string(c1) + ") of " +
                     shape_str(x.shape()));
  Index r = x.rows(), c = x.cols(), w = c1 - c0;
  Tensor<S> out = Tensor<S>::zeros({r, w});
  for (Index i = 0; i < r; ++i)
    std::copy(x.data() + i * c + c0, x.data() + i * c + c1, out.data() + i * w);
  if (wants_grad(x)) {
    out.set_requires_grad(true);
    auto xd = x.impl(), od = out.impl();
    Tape<S>::current()->record([xd, od, r, c, c0, w] {
      if (od->g.empty()) return;
      ensure_grad(*xd);
      for (Index i = 0; i < r; ++i)
        for (Index j = 0; j < w; ++j) xd->g[i * c + c0 + j] += od->g[i * w + j];
    });
  }
  return out;
}

template <class S>
Tensor<S> concat_rows(const std::vector<Tensor<S>>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no parts");
  Index c = parts[0].cols(), r = 0;
  for (const auto& p : parts) {
    check_2d(p, "concat_rows");
    if (p.cols() != c) throw ShapeError("concat_rows: column mismatch");
    r += p.rows();
  }
  Tensor<S> out = Tensor<S>::zeros({r, c});
  Index off = 0;
  bool track = false;
  for (const auto& p : parts) {
    std::copy(p.data(), p.data() + p.numel(), out.data() + off);
    off += p.numel();
    track = track || wants_grad(p);
  }
  if (track) {
    out.set_requires_grad(true);
    std::vector<std::shared_ptr<TensorData<S>>> impls;
    for (const auto& p : parts) impls.push_back(p.impl());
    auto od = out.impl();
    Tape<S>::current()->record([impls = std::move(impls), od] {
      if (od->g.empty()) return;
      Index off = 0;
      for (auto& pd : impls) {
        Index n = pd->numel();
        if (pd->requires_grad) {
          ensure_grad(*pd);
          for (Index i = 0; i < n; ++i) pd->g[i] += od->g[off + i];
        }
        off += n;
      }
    });
  }
  return out;
}

template <class S>
Tensor<S> concat_cols(const std::vector<Tensor<S>>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no parts");
  Index r = parts[0].rows(), c = 0;
  for (const auto& p : parts) {
    check_2d(p, "concat_cols");
    if (p.rows() != r) throw ShapeError("concat_cols: row mismatch");
    c += p.cols();
  }
  Tensor<S> out = Tensor<S>::zeros({r, c});
  Index off = 0;
  bool track = false;
  for (const auto& p : parts) {
    Index w = p.cols();
    for (Index i = 0; i < r; ++i)
      std::copy(p.data() + i * w, p.data() + (i + 1) * w, out.data() + i * c + off);
    off += w;
    track = track || wants_grad(p);
  }
  if (track) {
    out.set_requires_grad(true);
    std::vector<std::shared_ptr<TensorData<S>>> impls;
    for (const auto& p : parts) impls.push_back(p.impl());
    auto od = out.impl();
    Tape<S>::current()->record([impls = std::move(impls), od, r, c] {
      if (od->g.empty()) return;
      Index off = 0;
      for (auto& pd : impls) {
        Index w = pd->shape[1];
        if (pd->requires_grad) {
          ensure_grad(*pd);
          for (Index i = 0; i < r; ++i)
            for (Index j = 0; j < w; ++j) pd->g[i * w + j] += od->g[i * c + off + j];
        }
        off += w;
      }
    });
  }
  return out;
}

template <class S>
Tensor<S> repeat_rows(const Tensor<S>& v, Index times) {
  check_2d(v, "repeat_rows");
  if (v.rows() != 1) throw ShapeError("repeat_rows: expected [1xd], got " + shape_str(v.shape()));
  Index d = v.cols();
  Tensor<S> out = Tensor<S>::zeros({times, d});
  for (Index i = 0; i < times; ++i) std::copy(v.data(), v.data() + d, out.data() + i * d);
  if (wants_grad(v)) {
    out.set_requires_grad(true);
    auto vd = v.impl(), od = out.impl();
    Tape<S>::current()->record([vd, od, times, d] {
      if (od->g.empty()) return;
      ensure_grad(*vd);
      for (Index i = 0; i < times; ++i)
        for (Index j = 0; j < d; ++j) vd->g[j] += od->g[i * d + j];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// relative-position helpers
// ---------------------------------------------------------------------------

inline Index rel_clip(Index x, Index l) { return std::max(-l, std::min(x, l)); }

// b: [T x (2l+1)] per-query scores against the relative table;
// out[p][q] = b[p][clip(p-q,l)+l].
template <class S>
Tensor<S> gather_rel(const Tensor<S>& b, Index t, Index l) {
  check_2d(b, "gather_rel");
  if (b.rows() != t || b.cols() != 2 * l + 1)
    throw ShapeError("gather_rel: " + shape_str(b.shape()) + " vs T=" + std::to_string(t) +
                     ", l=" + std::to_string(l));
  Tensor<S> out = Tensor<S>::zeros({t, t});
  for (Index p = 0; p < t; ++p)
    for (Index q = 0; q < t; ++q) out(p, q) = b(p, rel_clip(p - q, l) + l);
  if (wants_grad(b)) {
    out.set_requires_grad(true);
    auto bd = b.impl(), od = out.impl();
    Tape<S>::current()->record([bd, od, t, l] {
      if (od->g.empty()) return;
      ensure_grad(*bd);
      Index w = 2 * l + 1;
      for (Index p = 0; p < t; ++p)
        for (Index q = 0; q < t; ++q)
          bd->g[p * w + rel_clip(p - q, l) + l] += od->g[p * t + q];
    });
  }
  return out;
}

// a: [T x T] attention weights; out[p][r] = sum_q a[p][q] [clip(p-q,l)+l == r].
template <class S>
Tensor<S> scatter_rel(const Tensor<S>& a, Index l) {
  check_2d(a, "scatter_rel");
  Index t = a.rows();
  if (a.cols() != t) throw ShapeError("scatter_rel: expected square, got " + shape_str(a.shape()));
  Index w = 2 * l + 1;
  Tensor<S> out = Tensor<S>::zeros({t, w});
  for (Index p = 0; p < t; ++p)
    for (Index q = 0; q < t; ++q) out(p, rel_clip(p - q, l) + l) += a(p, q);
  if (wants_grad(a)) {
    out.set_requires_grad(true);
    auto ad = a.impl(), od = out.impl();
    Tape<S>::current()->record([ad, od, t, l, w] {
      if (od->g.empty()) return;
      ensure_grad(*ad);
      for (Index p = 0; p < t; ++p)
        for (Index q = 0; q < t; ++q)
          ad->g[p * t + q] += od->g[p * w + rel_clip(p - q, l) + l];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// non-differentiable utilities
// ---------------------------------------------------------------------------

template <class S>
int argmax_row(const Tensor<S>& x, Index r) {
  Index c = x.cols();
  int best = 0;
  for (Index j = 1; j < c; ++j)
    if (x(r, j) > x(r, best)) best = static_cast<int>(j);
  return best;
}

}  // namespace ops
}  // namespace slu
