#include "gleason/s6.hpp"

#include <bit>
#include <cmath>

#include "gleason/errors.hpp"
#include "gleason/ops.hpp"

namespace gleason::s6 {

namespace {

// phi(z) = (e^z - 1) / z and its derivative, with phi(0) = 1.
struct Phi {
  double value;
  double deriv;
};

Phi phi(double z) {
  if (std::abs(z) < kSeriesThreshold) return {1.0 + 0.5 * z, 0.5};
  const double value = std::expm1(z) / z;
  if (std::abs(z) < 1e-2) {
    // sum_{k>=1} k z^{k-1} / (k+1)!
    const double deriv =
        0.5 + z * (1.0 / 3.0 + z * (1.0 / 8.0 + z * (1.0 / 30.0 + z * (1.0 / 144.0 + z / 840.0))));
    return {value, deriv};
  }
  return {value, (z * std::exp(z) - std::expm1(z)) / (z * z)};
}

void check_sequence(const Tensor& x, std::size_t d, const char* what) {
  if (x.rank() != 2 || x.dim(1) != d) {
    throw DimensionError(std::string(what) + ": expected [l, " + std::to_string(d) + "], got " +
                         shape_str(x.shape()));
  }
}

struct ScanDims {
  std::size_t l, d, n;
};

ScanDims scan_dims(const DiscretizedStep& step, const Tensor& C, const Tensor& D, const Tensor& x,
                   const Tensor& h0) {
  if (step.A_bar.rank() != 3) throw DimensionError("scan: A_bar must be [l, d, n]");
  require_same_shape(step.A_bar, step.B_bar, "scan: A_bar vs B_bar");
  const ScanDims s{step.A_bar.dim(0), step.A_bar.dim(1), step.A_bar.dim(2)};
  if (x.shape() != Shape{s.l, s.d}) throw DimensionError("scan: x shape " + shape_str(x.shape()));
  if (C.shape() != Shape{s.l, s.n}) throw DimensionError("scan: C shape " + shape_str(C.shape()));
  if (D.shape() != Shape{s.d}) throw DimensionError("scan: D shape " + shape_str(D.shape()));
  if (!h0.empty() && h0.shape() != Shape{s.d, s.n}) throw DimensionError("scan: h0 shape " + shape_str(h0.shape()));
  return s;
}

// y_t = <C_t, h_t> + D x_t for all t.
Tensor readout(const ScanDims& s, const Tensor& h, const Tensor& C, const Tensor& D, const Tensor& x) {
  Tensor y({s.l, s.d});
#pragma omp parallel for schedule(static) if (s.l * s.d * s.n > (1u << 15))
  for (std::size_t t = 0; t < s.l; ++t) {
    const double* ct = C.data().data() + t * s.n;
    for (std::size_t c = 0; c < s.d; ++c) {
      const double* ht = h.data().data() + (t * s.d + c) * s.n;
      double acc = 0.0;
      for (std::size_t k = 0; k < s.n; ++k) acc += ct[k] * ht[k];
      y[t * s.d + c] = acc + D[c] * x[t * s.d + c];
    }
  }
  return y;
}

void sequential_states(const ScanDims& s, const DiscretizedStep& step, const Tensor& x, const Tensor& h0,
                       Tensor& h) {
  const std::size_t lanes = s.d * s.n;
  std::vector<double> state(lanes, 0.0);
  if (!h0.empty()) state.assign(h0.data().begin(), h0.data().end());
  for (std::size_t t = 0; t < s.l; ++t) {
    const double* ab = step.A_bar.data().data() + t * lanes;
    const double* bb = step.B_bar.data().data() + t * lanes;
    double* ht = h.data().data() + t * lanes;
    for (std::size_t c = 0; c < s.d; ++c) {
      const double xv = x[t * s.d + c];
      for (std::size_t k = 0; k < s.n; ++k) {
        const std::size_t lane = c * s.n + k;
        state[lane] = ab[lane] * state[lane] + bb[lane] * xv;
        ht[lane] = state[lane];
      }
    }
  }
}

}  // namespace

S6Params S6Params::zeros(std::size_t d, std::size_t n) {
  S6Params p;
  p.d = d;
  p.n = n;
  p.A = Tensor({d, n});
  p.D = Tensor({d});
  p.W_delta = Tensor({d, d});
  p.b_delta = Tensor({d});
  p.W_B = Tensor({d, n});
  p.b_B = Tensor({n});
  p.W_C = Tensor({d, n});
  p.b_C = Tensor({n});
  return p;
}

S6Params S6Params::init(std::size_t d, std::size_t n, std::mt19937_64& rng) {
  S6Params p = zeros(d, n);
  for (std::size_t c = 0; c < d; ++c)
    for (std::size_t k = 0; k < n; ++k) p.A[c * n + k] = -static_cast<double>(k + 1);
  p.D.fill(1.0);
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  p.W_delta = Tensor::uniform({d, d}, rng, -bound, bound);
  p.W_B = Tensor::uniform({d, n}, rng, -bound, bound);
  p.W_C = Tensor::uniform({d, n}, rng, -bound, bound);
  return p;
}

std::vector<Tensor*> S6Params::tensors() {
  return {&A, &D, &W_delta, &b_delta, &W_B, &b_B, &W_C, &b_C};
}

std::vector<const Tensor*> S6Params::tensors() const {
  return {&A, &D, &W_delta, &b_delta, &W_B, &b_B, &W_C, &b_C};
}

const std::vector<std::string>& S6Params::tensor_names() {
  static const std::vector<std::string> names = {"A", "D", "W_delta", "b_delta", "W_B", "b_B", "W_C", "b_C"};
  return names;
}

Projection project_inputs(const Tensor& x, const S6Params& p) {
  check_sequence(x, p.d, "s6 project_inputs");
  Projection proj;
  proj.delta_raw = linear(x, p.W_delta, p.b_delta);
  proj.delta = activation(proj.delta_raw, Activation::softplus);
  proj.B = linear(x, p.W_B, p.b_B);
  proj.C = linear(x, p.W_C, p.b_C);
  return proj;
}

std::pair<double, double> discretize_lane(double a, double delta, double b) {
  const double z = delta * a;
  const double a_bar = std::exp(z);
  if (std::abs(z) < kSeriesThreshold) return {a_bar, delta * b * (1.0 + 0.5 * z)};
  return {a_bar, std::expm1(z) / z * delta * b};
}

DiscretizedStep discretize(const Tensor& A, const Tensor& B, const Tensor& delta) {
  if (A.rank() != 2) throw DimensionError("discretize: A must be [d, n], got " + shape_str(A.shape()));
  const std::size_t d = A.dim(0), n = A.dim(1);
  if (delta.rank() != 2 || delta.dim(1) != d) throw DimensionError("discretize: delta must be [l, d]");
  const std::size_t l = delta.dim(0);
  if (B.shape() != Shape{l, n}) throw DimensionError("discretize: B must be [l, n], got " + shape_str(B.shape()));
  DiscretizedStep step{Tensor({l, d, n}), Tensor({l, d, n})};
  for (std::size_t t = 0; t < l; ++t) {
    for (std::size_t c = 0; c < d; ++c) {
      const double dt = delta[t * d + c];
      for (std::size_t k = 0; k < n; ++k) {
        const auto [ab, bb] = discretize_lane(A[c * n + k], dt, B[t * n + k]);
        const std::size_t i = (t * d + c) * n + k;
        step.A_bar[i] = ab;
        step.B_bar[i] = bb;
      }
    }
  }
  return step;
}

Tensor scan_sequential(const DiscretizedStep& step, const Tensor& C, const Tensor& D, const Tensor& x,
                       const Tensor& h0, Tensor* states) {
  const ScanDims s = scan_dims(step, C, D, x, h0);
  Tensor h({s.l, s.d, s.n});
  sequential_states(s, step, x, h0, h);
  Tensor y = readout(s, h, C, D, x);
  if (states) *states = std::move(h);
  return y;
}

Tensor scan_parallel(const DiscretizedStep& step, const Tensor& C, const Tensor& D, const Tensor& x,
                     const Tensor& h0, Tensor* states) {
  const ScanDims s = scan_dims(step, C, D, x, h0);
  if (s.l < kParallelScanCutoff) return scan_sequential(step, C, D, x, h0, states);

  const std::size_t lanes = s.d * s.n;
  const std::size_t m = std::bit_ceil(s.l);
  // Affine map per step, padded with the identity (1, 0).
  std::vector<double> a(m * lanes, 1.0), b(m * lanes, 0.0);
  for (std::size_t t = 0; t < s.l; ++t) {
    for (std::size_t c = 0; c < s.d; ++c) {
      const double xv = x[t * s.d + c];
      for (std::size_t k = 0; k < s.n; ++k) {
        const std::size_t i = t * lanes + c * s.n + k;
        a[i] = step.A_bar[i];
        b[i] = step.B_bar[i] * xv;
      }
    }
  }
  const std::vector<double> a_elem(a.begin(), a.begin() + static_cast<std::ptrdiff_t>(s.l * lanes));
  const std::vector<double> b_elem(b.begin(), b.begin() + static_cast<std::ptrdiff_t>(s.l * lanes));

  // Up-sweep: node r accumulates (later o earlier) over its subtree.
  for (std::size_t stride = 1; stride < m; stride *= 2) {
    const std::size_t nodes = m / (2 * stride);
#pragma omp parallel for schedule(static) if (nodes * lanes > 4096)
    for (std::size_t k = 0; k < nodes; ++k) {
      const std::size_t r = ((k + 1) * 2 * stride - 1) * lanes;
      const std::size_t q = r - stride * lanes;
      for (std::size_t j = 0; j < lanes; ++j) {
        b[r + j] = a[r + j] * b[q + j] + b[r + j];
        a[r + j] = a[r + j] * a[q + j];
      }
    }
  }
  // Down-sweep to an exclusive scan.
  for (std::size_t j = 0; j < lanes; ++j) {
    a[(m - 1) * lanes + j] = 1.0;
    b[(m - 1) * lanes + j] = 0.0;
  }
  for (std::size_t stride = m / 2; stride >= 1; stride /= 2) {
    const std::size_t nodes = m / (2 * stride);
#pragma omp parallel for schedule(static) if (nodes * lanes > 4096)
    for (std::size_t k = 0; k < nodes; ++k) {
      const std::size_t r = ((k + 1) * 2 * stride - 1) * lanes;
      const std::size_t q = r - stride * lanes;
      for (std::size_t j = 0; j < lanes; ++j) {
        const double ta = a[q + j], tb = b[q + j];
        const double pa = a[r + j], pb = b[r + j];
        a[q + j] = pa;
        b[q + j] = pb;
        // left subtree total applied after the parent prefix
        a[r + j] = ta * pa;
        b[r + j] = ta * pb + tb;
      }
    }
  }

  Tensor h({s.l, s.d, s.n});
#pragma omp parallel for schedule(static) if (s.l * lanes > 4096)
  for (std::size_t t = 0; t < s.l; ++t) {
    for (std::size_t j = 0; j < lanes; ++j) {
      const std::size_t i = t * lanes + j;
      const double pa = a_elem[i] * a[i];
      const double pb = a_elem[i] * b[i] + b_elem[i];
      const double init = h0.empty() ? 0.0 : h0[j];
      h[i] = pa * init + pb;
    }
  }
  Tensor y = readout(s, h, C, D, x);
  if (states) *states = std::move(h);
  return y;
}

Tensor forward(const Tensor& x, const S6Params& p, ScanMode mode, Cache* cache) {
  Projection proj = project_inputs(x, p);
  DiscretizedStep step = discretize(p.A, proj.B, proj.delta);
  Tensor states;
  Tensor y = mode == ScanMode::parallel ? scan_parallel(step, proj.C, p.D, x, {}, &states)
                                        : scan_sequential(step, proj.C, p.D, x, {}, &states);
  if (cache) {
    cache->x = x;
    cache->proj = std::move(proj);
    cache->step = std::move(step);
    cache->states = std::move(states);
  }
  return y;
}

Grads backward(const S6Params& p, const Cache& cache, const Tensor& gy) {
  const std::size_t l = cache.x.dim(0), d = p.d, n = p.n;
  if (gy.shape() != Shape{l, d}) throw DimensionError("s6 backward: cotangent shape " + shape_str(gy.shape()));
  const Tensor& x = cache.x;
  const Tensor& delta = cache.proj.delta;
  const Tensor& Bm = cache.proj.B;
  const Tensor& Cm = cache.proj.C;
  const Tensor& A_bar = cache.step.A_bar;
  const Tensor& B_bar = cache.step.B_bar;
  const Tensor& h = cache.states;

  Grads g{Tensor({l, d}), S6Params::zeros(d, n)};
  Tensor g_delta({l, d});
  Tensor g_B({l, n});
  Tensor g_C({l, n});

  for (std::size_t t = 0; t < l; ++t) {
    for (std::size_t c = 0; c < d; ++c) {
      const double gv = gy[t * d + c];
      g.params.D[c] += gv * x[t * d + c];
      g.x[t * d + c] = gv * p.D[c];
      const double* ht = h.data().data() + (t * d + c) * n;
      for (std::size_t k = 0; k < n; ++k) g_C[t * n + k] += gv * ht[k];
    }
  }

  std::vector<double> gh(d * n, 0.0);  // dL/dh_t, carried backwards
  for (std::size_t tt = l; tt-- > 0;) {
    for (std::size_t c = 0; c < d; ++c) {
      const double gv = gy[tt * d + c];
      const double xv = x[tt * d + c];
      const double dt = delta[tt * d + c];
      double gx_acc = 0.0, gdelta_acc = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        const std::size_t lane = c * n + k;
        const std::size_t i = tt * d * n + lane;
        const double ght = gh[lane] + gv * Cm[tt * n + k];
        const double h_prev = tt > 0 ? h[i - d * n] : 0.0;
        const double g_abar = ght * h_prev;
        const double g_bbar = ght * xv;
        gx_acc += ght * B_bar[i];

        const double a = p.A[lane];
        const double z = dt * a;
        const Phi ph = phi(z);
        const double bk = Bm[tt * n + k];
        const double g_phi = g_bbar * dt * bk;
        gdelta_acc += g_bbar * ph.value * bk;
        g_B[tt * n + k] += g_bbar * ph.value * dt;
        const double gz = g_abar * A_bar[i] + g_phi * ph.deriv;
        gdelta_acc += gz * a;
        g.params.A[lane] += gz * dt;

        gh[lane] = ght * A_bar[i];
      }
      g.x[tt * d + c] += gx_acc;
      g_delta[tt * d + c] = gdelta_acc;
    }
  }

  const Tensor g_delta_raw = activation_backward(cache.proj.delta_raw, g_delta, Activation::softplus);
  const LinearGrads ld = linear_backward(x, p.W_delta, g_delta_raw);
  const LinearGrads lb = linear_backward(x, p.W_B, g_B);
  const LinearGrads lc = linear_backward(x, p.W_C, g_C);
  g.x += ld.x;
  g.x += lb.x;
  g.x += lc.x;
  g.params.W_delta = ld.W;
  g.params.b_delta = ld.b;
  g.params.W_B = lb.W;
  g.params.b_B = lb.b;
  g.params.W_C = lc.W;
  g.params.b_C = lc.b;
  return g;
}

}  // namespace gleason::s6
