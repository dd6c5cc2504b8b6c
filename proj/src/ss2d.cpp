#include "gleason/ss2d.hpp"

#include "gleason/errors.hpp"

namespace gleason::ss2d {

std::string_view direction_name(ScanDirection dir) {
  switch (dir) {
    case ScanDirection::row_forward: return "row_forward";
    case ScanDirection::row_reverse: return "row_reverse";
    case ScanDirection::col_forward: return "col_forward";
    case ScanDirection::col_reverse: return "col_reverse";
  }
  return "?";
}

std::vector<std::size_t> traversal(ScanDirection dir, std::size_t H, std::size_t W) {
  const std::size_t L = H * W;
  std::vector<std::size_t> order(L);
  for (std::size_t k = 0; k < L; ++k) {
    switch (dir) {
      case ScanDirection::row_forward: order[k] = k; break;
      case ScanDirection::row_reverse: order[k] = L - 1 - k; break;
      case ScanDirection::col_forward: order[k] = (k % H) * W + k / H; break;
      case ScanDirection::col_reverse: {
        const std::size_t r = L - 1 - k;
        order[k] = (r % H) * W + r / H;
        break;
      }
    }
  }
  return order;
}

Sequences scan_expand(const Tensor& fmap) {
  if (fmap.rank() != 4) throw DimensionError("scan_expand: expected [B, C, H, W], got " + shape_str(fmap.shape()));
  const std::size_t B = fmap.dim(0), C = fmap.dim(1), H = fmap.dim(2), W = fmap.dim(3);
  const std::size_t L = H * W;
  Sequences seqs;
  for (auto dir : kDirections) {
    const auto order = traversal(dir, H, W);
    Tensor s({B, L, C});
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t k = 0; k < L; ++k)
        for (std::size_t c = 0; c < C; ++c) s[(b * L + k) * C + c] = fmap[(b * C + c) * L + order[k]];
    seqs[static_cast<std::size_t>(dir)] = std::move(s);
  }
  return seqs;
}

Tensor scan_merge(const Sequences& seqs, std::size_t H, std::size_t W) {
  const Tensor& first = seqs[0];
  if (first.rank() != 3) throw DimensionError("scan_merge: sequences must be [B, L, C]");
  const std::size_t B = first.dim(0), L = first.dim(1), C = first.dim(2);
  if (L != H * W) {
    throw DimensionError("scan_merge: sequence length " + std::to_string(L) + " != H*W = " +
                         std::to_string(H * W));
  }
  std::array<Tensor, 4> grids;
  for (auto dir : kDirections) {
    const Tensor& s = seqs[static_cast<std::size_t>(dir)];
    if (s.shape() != first.shape()) {
      throw DimensionError("scan_merge: " + std::string(direction_name(dir)) + " has shape " +
                           shape_str(s.shape()) + ", expected " + shape_str(first.shape()));
    }
    const auto order = traversal(dir, H, W);
    Tensor& g = grids[static_cast<std::size_t>(dir)] = Tensor({B, C, H, W});
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t k = 0; k < L; ++k)
        for (std::size_t c = 0; c < C; ++c) g[(b * C + c) * L + order[k]] = s[(b * L + k) * C + c];
  }
  // (row pair) + (column pair): swapping the partners of either pair is exact
  Tensor out({B, C, H, W});
  for (std::size_t i = 0; i < out.numel(); ++i)
    out[i] = (grids[0][i] + grids[1][i]) + (grids[2][i] + grids[3][i]);
  return out;
}

Params Params::init(std::size_t channels, std::size_t state_size, std::mt19937_64& rng) {
  Params p;
  for (auto& d : p.dirs) d = s6::S6Params::init(channels, state_size, rng);
  return p;
}

namespace {

Tensor slice_batch(const Tensor& seq, std::size_t b) {
  const std::size_t L = seq.dim(1), C = seq.dim(2);
  const auto first = seq.data().begin() + static_cast<std::ptrdiff_t>(b * L * C);
  return Tensor({L, C}, std::vector<double>(first, first + static_cast<std::ptrdiff_t>(L * C)));
}

void put_batch(Tensor& seq, std::size_t b, const Tensor& part) {
  std::copy(part.data().begin(), part.data().end(),
            seq.data().begin() + static_cast<std::ptrdiff_t>(b * part.numel()));
}

}  // namespace

Tensor forward(const Tensor& fmap, const Params& params, s6::ScanMode mode, Cache* cache) {
  if (fmap.rank() != 4) throw DimensionError("ss2d: expected [B, C, H, W], got " + shape_str(fmap.shape()));
  const std::size_t B = fmap.dim(0), C = fmap.dim(1), H = fmap.dim(2), W = fmap.dim(3);
  for (const auto& p : params.dirs) {
    if (p.d != C) {
      throw DimensionError("ss2d: input has " + std::to_string(C) + " channels, S6 parameters expect " +
                           std::to_string(p.d));
    }
  }
  const Sequences in = scan_expand(fmap);
  Sequences out;
  for (auto& s : out) s = Tensor({B, H * W, C});
  std::vector<s6::Cache> runs(cache ? 4 * B : 0);

  const std::size_t tasks = 4 * B;
#pragma omp parallel for schedule(dynamic) if (tasks > 1 && H * W * C > 64)
  for (std::size_t task = 0; task < tasks; ++task) {
    const std::size_t dir = task / B, b = task % B;
    const Tensor x = slice_batch(in[dir], b);
    const Tensor y = s6::forward(x, params.dirs[dir], mode, cache ? &runs[task] : nullptr);
    put_batch(out[dir], b, y);
  }
  if (cache) {
    *cache = Cache{B, C, H, W, std::move(runs)};
  }
  return scan_merge(out, H, W);
}

Grads backward(const Params& params, const Cache& cache, const Tensor& gy) {
  const std::size_t B = cache.B, C = cache.C, H = cache.H, W = cache.W;
  if (gy.shape() != Shape{B, C, H, W}) throw DimensionError("ss2d backward: cotangent shape " + shape_str(gy.shape()));
  // merge is a sum of per-direction scatters, so its adjoint gathers gy
  // along each traversal: exactly scan_expand.
  const Sequences g_out = scan_expand(gy);
  Sequences g_in;
  for (auto& s : g_in) s = Tensor({B, H * W, C});

  const std::size_t tasks = 4 * B;
  std::vector<s6::S6Params> task_grads(tasks);
#pragma omp parallel for schedule(dynamic) if (tasks > 1 && H * W * C > 64)
  for (std::size_t task = 0; task < tasks; ++task) {
    const std::size_t dir = task / B, b = task % B;
    s6::Grads g = s6::backward(params.dirs[dir], cache.runs[task], slice_batch(g_out[dir], b));
    put_batch(g_in[dir], b, g.x);
    task_grads[task] = std::move(g.params);
  }

  Grads grads;
  grads.x = scan_merge(g_in, H, W);
  for (std::size_t dir = 0; dir < 4; ++dir) {
    grads.dirs[dir] = s6::S6Params::zeros(params.dirs[dir].d, params.dirs[dir].n);
    auto dst = grads.dirs[dir].tensors();
    for (std::size_t b = 0; b < B; ++b) {
      auto src = task_grads[dir * B + b].tensors();
      for (std::size_t i = 0; i < dst.size(); ++i) *dst[i] += *src[i];
    }
  }
  return grads;
}

}  // namespace gleason::ss2d
