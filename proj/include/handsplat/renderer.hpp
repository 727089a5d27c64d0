#pragma once

// Tiled point-splat rasterizer.
//
// Each point is a screen-space disc of radius r around (x, y). A pixel centre
// (u, v) at distance d < r receives a fragment with alpha a = 1 - d^2 / r^2.
// Every pixel keeps the kMaxFragments nearest fragments, ordered by (depth,
// point index), and composites them front to back:
//   c_pix = sum_k c_k a_k T_k,  T_k = prod_{j<k} (1 - a_j),  alpha = 1 - prod_k (1 - a_k)
//
// Points are sorted once by (depth, index) and binned into 16x16 tiles, so each
// tile sees its points already in compositing order and stops early once all
// of its pixels are full.
//
// Backward, per pixel, walks the list back to front with the tail composite
// B_{k+1} and tail transmittance R_{k+1}:
//   d c_pix / d a_k = T_k (c_k - B_{k+1}),   d alpha / d a_k = T_k R_{k+1}
// and chains to screen position and radius through
//   da/dx = 2 (u - x) / r^2,  da/dy = 2 (v - y) / r^2,  da/dr = 2 d^2 / r^3.
// Per-point gradients are accumulated per tile and reduced in tile order.

#include "handsplat/camera.hpp"
#include "handsplat/rig.hpp"

#include <algorithm>
#include <cstdint>
#include <memory>
#include <numeric>

namespace handsplat {

inline constexpr int kMaxFragments = 8;
inline constexpr int kTileSize = 16;

/// Projected splats in structure-of-arrays form.
template <class Scalar>
struct Splats {
  std::vector<Scalar> x, y, z, r;
  std::vector<Scalar> rgb;  // 3 per point

  std::size_t size() const { return x.size(); }
  void resize(std::size_t n) {
    x.assign(n, 0);
    y.assign(n, 0);
    z.assign(n, 0);
    r.assign(n, 0);
    rgb.assign(3 * n, 0);
  }
  bool drawable(std::size_t i) const { return z[i] > Scalar(kNearPlane) && r[i] > Scalar(0); }
};

template <class Scalar>
struct RenderTarget {
  int width = 0, height = 0, tile = kTileSize;
  std::vector<Scalar> rgb;    // H x W x 3
  std::vector<Scalar> alpha;  // H x W
  std::vector<std::uint8_t> count;    // fragments per pixel
  std::vector<std::uint32_t> frag_slot;  // H x W x kMaxFragments, index into the tile's point list
  std::vector<Scalar> frag_alpha;        // H x W x kMaxFragments
  // Tile binning: points of tile t are tile_points[tile_offsets[t] .. tile_offsets[t+1]).
  std::vector<std::size_t> tile_offsets;
  std::vector<std::uint32_t> tile_points;

  int tiles_x() const { return (width + tile - 1) / tile; }
  int tiles_y() const { return (height + tile - 1) / tile; }
  std::size_t pixel(int u, int v) const { return static_cast<std::size_t>(v) * static_cast<std::size_t>(width) + static_cast<std::size_t>(u); }
  int tile_of(int u, int v) const { return (v / tile) * tiles_x() + u / tile; }

  /// Global point index of fragment k at pixel (u, v).
  std::uint32_t fragment_point(int u, int v, int k) const {
    const std::size_t p = pixel(u, v) * kMaxFragments + static_cast<std::size_t>(k);
    return tile_points[tile_offsets[static_cast<std::size_t>(tile_of(u, v))] + frag_slot[p]];
  }
};

template <class Scalar>
struct RenderGrads {
  std::vector<Scalar> rgb;  // 3 per point
  std::vector<Scalar> x, y, r;
};

namespace detail {

template <class Scalar>
struct PixelBounds {
  int u0, u1, v0, v1;
};

template <class Scalar>
PixelBounds<Scalar> splat_bounds(const Splats<Scalar>& s, std::size_t i, int W, int H) {
  // Pixel centres strictly inside the disc satisfy |u - x| < r.
  const double x = s.x[i], y = s.y[i], r = s.r[i];
  PixelBounds<Scalar> b;
  b.u0 = static_cast<int>(std::max(0.0, std::floor(x - r) + 1.0));
  b.u1 = static_cast<int>(std::min<double>(W - 1, std::ceil(x + r) - 1.0));
  b.v0 = static_cast<int>(std::max(0.0, std::floor(y - r) + 1.0));
  b.v1 = static_cast<int>(std::min<double>(H - 1, std::ceil(y + r) - 1.0));
  return b;
}

}  // namespace detail

template <class Scalar>
RenderTarget<Scalar> rasterize(const Splats<Scalar>& s, int width, int height, int tile = kTileSize) {
  if (width <= 0 || height <= 0 || tile <= 0) throw std::invalid_argument("rasterize: bad image or tile size");
  RenderTarget<Scalar> t;
  t.width = width;
  t.height = height;
  t.tile = tile;
  const std::size_t npix = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  t.rgb.assign(3 * npix, Scalar(0));
  t.alpha.assign(npix, Scalar(0));
  t.count.assign(npix, 0);
  t.frag_slot.assign(npix * kMaxFragments, 0);
  t.frag_alpha.assign(npix * kMaxFragments, Scalar(0));
  const int tx = t.tiles_x(), ty = t.tiles_y();
  const std::size_t ntiles = static_cast<std::size_t>(tx) * static_cast<std::size_t>(ty);

  // Global (depth, index) order of drawable points.
  std::vector<std::uint32_t> order;
  order.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i)
    if (s.drawable(i)) order.push_back(static_cast<std::uint32_t>(i));
  std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    return s.z[a] < s.z[b] || (s.z[a] == s.z[b] && a < b);
  });

  // Counting-sort binning into tiles, preserving depth order.
  std::vector<detail::PixelBounds<Scalar>> bounds(order.size());
  t.tile_offsets.assign(ntiles + 1, 0);
  for (std::size_t k = 0; k < order.size(); ++k) {
    const auto b = detail::splat_bounds(s, order[k], width, height);
    bounds[k] = b;
    if (b.u0 > b.u1 || b.v0 > b.v1) continue;
    for (int j = b.v0 / tile; j <= b.v1 / tile; ++j)
      for (int i = b.u0 / tile; i <= b.u1 / tile; ++i) ++t.tile_offsets[static_cast<std::size_t>(j * tx + i) + 1];
  }
  std::partial_sum(t.tile_offsets.begin(), t.tile_offsets.end(), t.tile_offsets.begin());
  t.tile_points.resize(t.tile_offsets.back());
  std::vector<std::size_t> fill(t.tile_offsets.begin(), t.tile_offsets.end() - 1);
  std::vector<std::uint32_t> tile_bound_index(t.tile_points.size());
  for (std::size_t k = 0; k < order.size(); ++k) {
    const auto& b = bounds[k];
    if (b.u0 > b.u1 || b.v0 > b.v1) continue;
    for (int j = b.v0 / tile; j <= b.v1 / tile; ++j)
      for (int i = b.u0 / tile; i <= b.u1 / tile; ++i) {
        const std::size_t pos = fill[static_cast<std::size_t>(j * tx + i)]++;
        t.tile_points[pos] = order[k];
        tile_bound_index[pos] = static_cast<std::uint32_t>(k);
      }
  }

#pragma omp parallel for schedule(dynamic, 1)
  for (std::size_t ti = 0; ti < ntiles; ++ti) {
    const int tu = static_cast<int>(ti % static_cast<std::size_t>(tx)) * tile;
    const int tv = static_cast<int>(ti / static_cast<std::size_t>(tx)) * tile;
    const int tw = std::min(tile, width - tu), th = std::min(tile, height - tv);
    const int pixels = tw * th;
    std::vector<Scalar> T(static_cast<std::size_t>(pixels), Scalar(1));
    int full = 0;
    const std::size_t begin = t.tile_offsets[ti], end = t.tile_offsets[ti + 1];
    for (std::size_t pos = begin; pos < end && full < pixels; ++pos) {
      const std::uint32_t p = t.tile_points[pos];
      const auto& b = bounds[tile_bound_index[pos]];
      const Scalar px = s.x[p], py = s.y[p], r2 = s.r[p] * s.r[p];
      const Scalar inv_r2 = Scalar(1) / r2;
      const Scalar cr = s.rgb[3 * p], cg = s.rgb[3 * p + 1], cb = s.rgb[3 * p + 2];
      const int v0 = std::max(b.v0, tv), v1 = std::min(b.v1, tv + th - 1);
      const int u0 = std::max(b.u0, tu), u1 = std::min(b.u1, tu + tw - 1);
      for (int v = v0; v <= v1; ++v) {
        const Scalar dy = Scalar(v) - py;
        const Scalar dy2 = dy * dy;
        if (dy2 >= r2) continue;
        for (int u = u0; u <= u1; ++u) {
          const Scalar dx = Scalar(u) - px;
          const Scalar d2 = dx * dx + dy2;
          if (d2 >= r2) continue;
          const std::size_t pix = t.pixel(u, v);
          std::uint8_t& n = t.count[pix];
          if (n >= kMaxFragments) continue;
          const Scalar a = Scalar(1) - d2 * inv_r2;
          Scalar& tr = T[static_cast<std::size_t>((v - tv) * tw + (u - tu))];
          const Scalar w = a * tr;
          t.rgb[3 * pix] += w * cr;
          t.rgb[3 * pix + 1] += w * cg;
          t.rgb[3 * pix + 2] += w * cb;
          tr *= Scalar(1) - a;
          t.frag_slot[pix * kMaxFragments + n] = static_cast<std::uint32_t>(pos - begin);
          t.frag_alpha[pix * kMaxFragments + n] = a;
          if (++n == kMaxFragments) ++full;
        }
      }
    }
    for (int v = 0; v < th; ++v)
      for (int u = 0; u < tw; ++u)
        t.alpha[t.pixel(tu + u, tv + v)] = Scalar(1) - T[static_cast<std::size_t>(v * tw + u)];
  }
  return t;
}

/// Gradients of a scalar loss with respect to point colors, screen positions
/// and radii, given d loss / d rgb (H x W x 3) and d loss / d alpha (H x W).
/// Either upstream pointer may be null (treated as zero).
template <class Scalar>
RenderGrads<Scalar> render_backward(const RenderTarget<Scalar>& t, const Splats<Scalar>& s, const Scalar* grad_rgb,
                                    const Scalar* grad_alpha) {
  const std::size_t n = s.size();
  RenderGrads<Scalar> g;
  g.rgb.assign(3 * n, Scalar(0));
  g.x.assign(n, Scalar(0));
  g.y.assign(n, Scalar(0));
  g.r.assign(n, Scalar(0));
  const int tx = t.tiles_x(), ty = t.tiles_y();
  const std::size_t ntiles = static_cast<std::size_t>(tx) * static_cast<std::size_t>(ty);
  // Per tile: 6 accumulators (rgb, x, y, r) per entry of the tile's point list.
  std::vector<std::vector<Scalar>> local(ntiles);

#pragma omp parallel for schedule(dynamic, 1)
  for (std::size_t ti = 0; ti < ntiles; ++ti) {
    const std::size_t begin = t.tile_offsets[ti], end = t.tile_offsets[ti + 1];
    if (begin == end) continue;
    auto& acc = local[ti];
    acc.assign(6 * (end - begin), Scalar(0));
    const int tu = static_cast<int>(ti % static_cast<std::size_t>(tx)) * t.tile;
    const int tv = static_cast<int>(ti / static_cast<std::size_t>(tx)) * t.tile;
    const int tw = std::min(t.tile, t.width - tu), th = std::min(t.tile, t.height - tv);
    for (int v = tv; v < tv + th; ++v)
      for (int u = tu; u < tu + tw; ++u) {
        const std::size_t pix = t.pixel(u, v);
        const int cnt = t.count[pix];
        if (cnt == 0) continue;
        const Scalar gr = grad_rgb ? grad_rgb[3 * pix] : Scalar(0);
        const Scalar gg = grad_rgb ? grad_rgb[3 * pix + 1] : Scalar(0);
        const Scalar gb = grad_rgb ? grad_rgb[3 * pix + 2] : Scalar(0);
        const Scalar ga = grad_alpha ? grad_alpha[pix] : Scalar(0);
        if (gr == Scalar(0) && gg == Scalar(0) && gb == Scalar(0) && ga == Scalar(0)) continue;
        Scalar Tk[kMaxFragments];
        Scalar tr = Scalar(1);
        for (int k = 0; k < cnt; ++k) {
          Tk[k] = tr;
          tr *= Scalar(1) - t.frag_alpha[pix * kMaxFragments + static_cast<std::size_t>(k)];
        }
        Scalar B[3] = {0, 0, 0};
        Scalar R = Scalar(1);
        for (int k = cnt - 1; k >= 0; --k) {
          const std::size_t f = pix * kMaxFragments + static_cast<std::size_t>(k);
          const std::uint32_t slot = t.frag_slot[f];
          const std::uint32_t p = t.tile_points[begin + slot];
          const Scalar a = t.frag_alpha[f];
          const Scalar c0 = s.rgb[3 * p], c1 = s.rgb[3 * p + 1], c2 = s.rgb[3 * p + 2];
          Scalar* out = &acc[6 * slot];
          const Scalar w = a * Tk[k];
          out[0] += gr * w;
          out[1] += gg * w;
          out[2] += gb * w;
          const Scalar da = Tk[k] * (gr * (c0 - B[0]) + gg * (c1 - B[1]) + gb * (c2 - B[2])) + ga * Tk[k] * R;
          B[0] = c0 * a + (Scalar(1) - a) * B[0];
          B[1] = c1 * a + (Scalar(1) - a) * B[1];
          B[2] = c2 * a + (Scalar(1) - a) * B[2];
          R *= Scalar(1) - a;
          const Scalar dx = Scalar(u) - s.x[p], dy = Scalar(v) - s.y[p];
          const Scalar r = s.r[p];
          const Scalar inv_r2 = Scalar(1) / (r * r);
          out[3] += da * Scalar(2) * dx * inv_r2;
          out[4] += da * Scalar(2) * dy * inv_r2;
          out[5] += da * Scalar(2) * (dx * dx + dy * dy) * inv_r2 / r;
        }
      }
  }
  for (std::size_t ti = 0; ti < ntiles; ++ti) {
    const std::size_t begin = t.tile_offsets[ti];
    const auto& acc = local[ti];
    for (std::size_t k = 0; k < acc.size() / 6; ++k) {
      const std::uint32_t p = t.tile_points[begin + k];
      g.rgb[3 * p] += acc[6 * k];
      g.rgb[3 * p + 1] += acc[6 * k + 1];
      g.rgb[3 * p + 2] += acc[6 * k + 2];
      g.x[p] += acc[6 * k + 3];
      g.y[p] += acc[6 * k + 4];
      g.r[p] += acc[6 * k + 5];
    }
  }
  return g;
}

/// One fragment for the exhaustive compositing oracle.
struct SplatFragment {
  std::size_t point_index;
  double depth;
  double d;  // pixel distance
  double r;  // projected radius
  double a;  // alpha
};

/// Exhaustive front-to-back composite of an unbounded fragment list, sorted by
/// (depth, index) first. Returns {r, g, b, alpha}.
inline std::array<double, 4> reference_composite(std::vector<SplatFragment> frags, const std::vector<double>& colors) {
  std::sort(frags.begin(), frags.end(), [](const SplatFragment& a, const SplatFragment& b) {
    return a.depth < b.depth || (a.depth == b.depth && a.point_index < b.point_index);
  });
  std::array<double, 4> out{0, 0, 0, 0};
  double T = 1.0;
  for (const auto& f : frags) {
    for (std::size_t c = 0; c < 3; ++c) out[c] += colors[3 * f.point_index + c] * f.a * T;
    T *= 1.0 - f.a;
  }
  out[3] = 1.0 - T;
  return out;
}

/// Every fragment a pixel would receive without the N_z cap.
template <class Scalar>
std::vector<SplatFragment> all_fragments(const Splats<Scalar>& s, int u, int v) {
  std::vector<SplatFragment> out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!s.drawable(i)) continue;
    const double dx = u - static_cast<double>(s.x[i]), dy = v - static_cast<double>(s.y[i]);
    const double d2 = dx * dx + dy * dy, r = s.r[i];
    if (d2 < r * r) out.push_back({i, static_cast<double>(s.z[i]), std::sqrt(d2), r, 1.0 - d2 / (r * r)});
  }
  return out;
}

/// Projection of world points with a shared world radius into splats.
template <class Scalar = double>
Splats<Scalar> project_points(const RowMatrix& points, const RowMatrix& colors, const Camera& cam, double radius) {
  Splats<Scalar> s;
  const auto n = static_cast<std::size_t>(points.rows());
  s.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto e = static_cast<Eigen::Index>(i);
    const Eigen::Vector3d c = cam.to_camera(points.row(e).transpose());
    s.z[i] = static_cast<Scalar>(c.z());
    for (int k = 0; k < 3; ++k) s.rgb[3 * i + static_cast<std::size_t>(k)] = static_cast<Scalar>(colors(e, k));
    if (c.z() <= kNearPlane) continue;
    s.x[i] = static_cast<Scalar>(cam.fx * c.x() / c.z() + cam.cx);
    s.y[i] = static_cast<Scalar>(cam.fy * c.y() / c.z() + cam.cy);
    s.r[i] = static_cast<Scalar>(radius * cam.fx / c.z());
  }
  return s;
}

namespace ad {

/// Differentiable render. `projected` is N x 4 from ad::project, `colors` N x 3.
/// Output is an (H W) x 4 tensor of [r, g, b, alpha] per pixel in row-major
/// pixel order. `keep`, when given, receives the forward render target.
inline Var splat_render(Var projected, Var colors, int width, int height,
                        std::shared_ptr<RenderTarget<double>>* keep = nullptr, int tile = kTileSize) {
  const Tensor& P = projected.value();
  const Tensor& C = colors.value();
  if (P.cols() != 4 || C.cols() != 3 || P.rows() != C.rows())
    throw ShapeError(fmt::format("splat_render: projected {} and colors {} are not conformable", P.shape_str(),
                                 C.shape_str()));
  const std::size_t n = P.rows();
  auto splats = std::make_shared<Splats<double>>();
  splats->resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    splats->x[i] = P(i, 0);
    splats->y[i] = P(i, 1);
    splats->z[i] = P(i, 2);
    splats->r[i] = P(i, 3);
  }
  std::copy(C.values().begin(), C.values().end(), splats->rgb.begin());
  auto target = std::make_shared<RenderTarget<double>>(rasterize(*splats, width, height, tile));
  const std::size_t npix = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  Tensor out(npix, 4);
  for (std::size_t p = 0; p < npix; ++p) {
    out(p, 0) = target->rgb[3 * p];
    out(p, 1) = target->rgb[3 * p + 1];
    out(p, 2) = target->rgb[3 * p + 2];
    out(p, 3) = target->alpha[p];
  }
  if (keep) *keep = target;
  return projected.tape->record(
      "splat_render", std::move(out), {projected, colors},
      [target, splats, npix](const Tensor& g, std::span<Tensor* const> gi) {
        std::vector<double> grgb(3 * npix), galpha(npix);
        for (std::size_t p = 0; p < npix; ++p) {
          grgb[3 * p] = g(p, 0);
          grgb[3 * p + 1] = g(p, 1);
          grgb[3 * p + 2] = g(p, 2);
          galpha[p] = g(p, 3);
        }
        const auto rg = render_backward(*target, *splats, grgb.data(), galpha.data());
        const std::size_t n = splats->size();
        if (gi[0])
          for (std::size_t i = 0; i < n; ++i) {
            (*gi[0])(i, 0) += rg.x[i];
            (*gi[0])(i, 1) += rg.y[i];
            (*gi[0])(i, 3) += rg.r[i];
          }
        if (gi[1])
          for (std::size_t i = 0; i < 3 * n; ++i) (*gi[1])[i] += rg.rgb[i];
      });
}

}  // namespace ad

/// Filled silhouette of a posed mesh (triangle scan conversion at pixel
/// centres), H x W of 0/1.
inline std::vector<std::uint8_t> mesh_silhouette(const RowMatrix& vertices, const std::vector<Face>& faces,
                                                 const Camera& cam) {
  const int W = cam.width, H = cam.height;
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(W) * static_cast<std::size_t>(H), 0);
  std::vector<Eigen::Vector2d> px(static_cast<std::size_t>(vertices.rows()));
  std::vector<std::uint8_t> front(static_cast<std::size_t>(vertices.rows()));
  for (Eigen::Index i = 0; i < vertices.rows(); ++i) {
    const Eigen::Vector3d c = cam.to_camera(vertices.row(i).transpose());
    front[static_cast<std::size_t>(i)] = c.z() > kNearPlane;
    if (front[static_cast<std::size_t>(i)])
      px[static_cast<std::size_t>(i)] = {cam.fx * c.x() / c.z() + cam.cx, cam.fy * c.y() / c.z() + cam.cy};
  }
  for (const Face& f : faces) {
    if (!front[f[0]] || !front[f[1]] || !front[f[2]]) continue;
    const Eigen::Vector2d a = px[f[0]], b = px[f[1]], c = px[f[2]];
    const double area = (b - a).x() * (c - a).y() - (b - a).y() * (c - a).x();
    if (area == 0.0) continue;
    const int u0 = std::max(0, static_cast<int>(std::ceil(std::min({a.x(), b.x(), c.x()}))));
    const int u1 = std::min(W - 1, static_cast<int>(std::floor(std::max({a.x(), b.x(), c.x()}))));
    const int v0 = std::max(0, static_cast<int>(std::ceil(std::min({a.y(), b.y(), c.y()}))));
    const int v1 = std::min(H - 1, static_cast<int>(std::floor(std::max({a.y(), b.y(), c.y()}))));
    for (int v = v0; v <= v1; ++v)
      for (int u = u0; u <= u1; ++u) {
        const Eigen::Vector2d p(u, v);
        auto edge = [](const Eigen::Vector2d& p0, const Eigen::Vector2d& p1, const Eigen::Vector2d& q) {
          return (p1 - p0).x() * (q - p0).y() - (p1 - p0).y() * (q - p0).x();
        };
        const double w0 = edge(b, c, p), w1 = edge(c, a, p), w2 = edge(a, b, p);
        const bool inside = area > 0 ? (w0 >= 0 && w1 >= 0 && w2 >= 0) : (w0 <= 0 && w1 <= 0 && w2 <= 0);
        if (inside) mask[static_cast<std::size_t>(v) * static_cast<std::size_t>(W) + static_cast<std::size_t>(u)] = 1;
      }
  }
  return mask;
}

/// Euclidean dilation: a pixel is set if some set pixel lies within `radius`.
inline std::vector<std::uint8_t> dilate(const std::vector<std::uint8_t>& mask, int width, int height, double radius) {
  std::vector<std::uint8_t> out(mask.size(), 0);
  const int R = static_cast<int>(std::floor(radius));
  std::vector<std::pair<int, int>> disc;
  for (int dv = -R; dv <= R; ++dv)
    for (int du = -R; du <= R; ++du)
      if (du * du + dv * dv <= radius * radius) disc.emplace_back(du, dv);
  for (int v = 0; v < height; ++v)
    for (int u = 0; u < width; ++u) {
      if (!mask[static_cast<std::size_t>(v * width + u)]) continue;
      for (auto [du, dv] : disc) {
        const int uu = u + du, vv = v + dv;
        if (uu >= 0 && uu < width && vv >= 0 && vv < height) out[static_cast<std::size_t>(vv * width + uu)] = 1;
      }
    }
  return out;
}

/// Sets visible[i] for points whose rounded projected centre lands on the
/// silhouette. Flags are only ever raised, so calls accumulate over an epoch.
template <class Scalar>
void mark_visibility(const Splats<Scalar>& s, const std::vector<std::uint8_t>& silhouette, int width, int height,
                     std::vector<std::uint8_t>& visible) {
  if (visible.size() != s.size()) throw ShapeError("mark_visibility: flag count does not match point count");
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!(s.z[i] > Scalar(kNearPlane))) continue;
    const long u = std::lround(static_cast<double>(s.x[i])), v = std::lround(static_cast<double>(s.y[i]));
    if (u < 0 || v < 0 || u >= width || v >= height) continue;
    if (silhouette[static_cast<std::size_t>(v) * static_cast<std::size_t>(width) + static_cast<std::size_t>(u)])
      visible[i] = 1;
  }
}

}  // namespace handsplat
