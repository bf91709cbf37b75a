#include "coopeig/grid.hpp"

#include <algorithm>
#include <cmath>

namespace coopeig {

namespace {

struct Membership {
  const ProblemSpec* spec;
  const RegionSpec* region;
  const RegionSpec* hole;  // nullable
  double h;

  bool in_region(int i, int j, int k) const {
    Point x{i * h, spec->dim == 2 ? j * h : 0.0};
    if (!region->contains(x, spec->dim, k)) return false;
    if (hole && hole->contains(x, spec->dim, k)) return false;
    return true;
  }
  bool in_hole(int i, int j, int k) const {
    if (!hole) return false;
    Point x{i * h, spec->dim == 2 ? j * h : 0.0};
    return hole->contains(x, spec->dim, k);
  }
};

Grid build_impl(const ProblemSpec& spec, const RegionSpec& region,
                const RegionSpec* hole, double h, bool require_connected) {
  if (h <= 0.0) throw ValidationError("discretize.build_grid", "spacing must be positive");
  Box bbox = region.bounding_box(spec.dim);
  if (!spec.window.contains(bbox.lo, spec.dim, 1e-9) ||
      !spec.window.contains(bbox.hi, spec.dim, 1e-9))
    throw ValidationError("discretize.build_grid", "region exceeds problem window");

  Grid g;
  g.dim = spec.dim;
  g.h = h;
  g.n_regimes = spec.regimes;
  for (int d = 0; d < spec.dim; ++d) {
    // One ring beyond the rasterized region so every stencil reference of an
    // interior node lands inside the box.
    g.ilo[d] = static_cast<int>(std::floor(bbox.lo[d] / h - 1e-9)) - 1;
    g.ihi[d] = static_cast<int>(std::ceil(bbox.hi[d] / h + 1e-9)) + 1;
  }

  Membership mem{&spec, &region, hole, h};
  const int n_slots = g.n_slots();
  g.cls.assign(static_cast<std::size_t>(n_slots), Grid::NodeClass::Boundary);
  g.tag.assign(static_cast<std::size_t>(n_slots), Grid::BoundaryTag::Outer);
  g.row_of.assign(static_cast<std::size_t>(n_slots), -1);
  g.bcol_of.assign(static_cast<std::size_t>(n_slots), -1);

  const int jlo = spec.dim == 2 ? g.ilo[1] : 0;
  const int jhi = spec.dim == 2 ? g.ihi[1] : 0;

  for (int j = jlo; j <= jhi; ++j) {
    for (int i = g.ilo[0]; i <= g.ihi[0]; ++i) {
      int node = g.node_linear(i, j);
      for (int k = 1; k <= spec.regimes; ++k) {
        int s = g.slot(node, k);
        if (!region.has_regime(k) && !(hole && hole->has_regime(k))) {
          // Regime never participates anywhere: keep as plain exterior data row.
          g.cls[s] = Grid::NodeClass::Boundary;
          g.tag[s] = Grid::BoundaryTag::Outer;
          continue;
        }
        bool inside = mem.in_region(i, j, k);
        bool interior = inside;
        bool hole_adjacent = mem.in_hole(i, j, k);
        if (inside) {
          const int di[4] = {1, -1, 0, 0};
          const int dj[4] = {0, 0, 1, -1};
          int n_neighbors = spec.dim == 2 ? 4 : 2;
          for (int q = 0; q < n_neighbors && interior; ++q) {
            if (!mem.in_region(i + di[q], j + dj[q], k)) {
              interior = false;
              if (mem.in_hole(i + di[q], j + dj[q], k)) hole_adjacent = true;
            }
          }
        }
        if (interior) {
          g.cls[s] = Grid::NodeClass::Interior;
          g.tag[s] = Grid::BoundaryTag::None;
          g.row_of[s] = static_cast<int>(g.rows.size());
          g.rows.emplace_back(node, k);
        } else {
          g.cls[s] = Grid::NodeClass::Boundary;
          g.tag[s] = hole_adjacent ? Grid::BoundaryTag::Hole : Grid::BoundaryTag::Outer;
        }
      }
    }
  }

  // Boundary columns: every non-interior slot referenced by some stencil. We
  // simply index all boundary slots adjacent (axis or diagonal) to an
  // interior slot of the same regime, plus same-node slots of other regimes.
  auto mark_bcol = [&](int node, int k) {
    int s = g.slot(node, k);
    if (g.cls[s] == Grid::NodeClass::Boundary && g.bcol_of[s] < 0) {
      g.bcol_of[s] = static_cast<int>(g.bcols.size());
      g.bcols.emplace_back(node, k);
    }
  };
  for (auto [node, k] : g.rows) {
    auto idx = g.node_index(node);
    for (int dj = (spec.dim == 2 ? -1 : 0); dj <= (spec.dim == 2 ? 1 : 0); ++dj)
      for (int di = -1; di <= 1; ++di) {
        if (di == 0 && dj == 0) continue;
        if (g.node_in_box(idx[0] + di, idx[1] + dj))
          mark_bcol(g.node_linear(idx[0] + di, idx[1] + dj), k);
      }
    for (int k2 = 1; k2 <= spec.regimes; ++k2)
      if (k2 != k) mark_bcol(node, k2);
  }

  // Every participating regime needs interior mass.
  for (int k : region.regimes) {
    bool any = false;
    for (auto [node, kk] : g.rows) {
      (void)node;
      if (kk == k) { any = true; break; }
    }
    if (!any)
      throw NumericError("discretize.build_grid",
                         "EmptyInterior: regime " + std::to_string(k) +
                             " has no interior node at spacing h=" + std::to_string(h));
  }

  if (require_connected && !g.rows.empty()) {
    std::vector<char> seen(g.rows.size(), 0);
    std::vector<int> stack{0};
    seen[0] = 1;
    while (!stack.empty()) {
      int r = stack.back();
      stack.pop_back();
      auto [node, k] = g.rows[static_cast<std::size_t>(r)];
      auto idx = g.node_index(node);
      const int di[4] = {1, -1, 0, 0};
      const int dj[4] = {0, 0, 1, -1};
      int n_neighbors = spec.dim == 2 ? 4 : 2;
      auto visit = [&](int node2, int k2) {
        int s = g.slot(node2, k2);
        int r2 = g.row_of[s];
        if (r2 >= 0 && !seen[static_cast<std::size_t>(r2)]) {
          seen[static_cast<std::size_t>(r2)] = 1;
          stack.push_back(r2);
        }
      };
      for (int q = 0; q < n_neighbors; ++q)
        if (g.node_in_box(idx[0] + di[q], idx[1] + dj[q]))
          visit(g.node_linear(idx[0] + di[q], idx[1] + dj[q]), k);
      for (int k2 = 1; k2 <= spec.regimes; ++k2)
        if (k2 != k) visit(node, k2);
    }
    for (char s : seen)
      if (!s)
        throw NumericError("discretize.build_grid",
                           "DisconnectedInterior: interior nodes split into "
                           "multiple components");
  }

  return g;
}

}  // namespace

Grid build_grid(const ProblemSpec& spec, const RegionSpec& region, double h) {
  return build_impl(spec, region, nullptr, h, true);
}

Grid build_grid_exterior(const ProblemSpec& spec, const RegionSpec& region,
                         const RegionSpec& hole, double h) {
  return build_impl(spec, region, &hole, h, false);
}

int Grid::normalization_node() const {
  // Spiral outwards from the lattice node nearest the origin until a node
  // interior in every participating regime is found.
  auto interior_all = [&](int i, int j) {
    if (!node_in_box(i, j)) return false;
    int node = node_linear(i, j);
    bool any = false;
    for (int k = 1; k <= n_regimes; ++k) {
      if (row_of[slot(node, k)] >= 0) any = true;
      else if (cls_at(node, k) != NodeClass::Boundary || tag[slot(node, k)] != BoundaryTag::Outer)
        return false;
    }
    return any;
  };
  // Strict version first: interior for all regimes.
  auto interior_strict = [&](int i, int j) {
    if (!node_in_box(i, j)) return false;
    int node = node_linear(i, j);
    for (int k = 1; k <= n_regimes; ++k)
      if (row_of[slot(node, k)] < 0) return false;
    return true;
  };
  for (int ring = 0; ring <= std::max(nx(), ny()); ++ring) {
    for (int dj = (dim == 2 ? -ring : 0); dj <= (dim == 2 ? ring : 0); ++dj)
      for (int di = -ring; di <= ring; ++di) {
        if (std::max(std::abs(di), std::abs(dj)) != ring) continue;
        if (interior_strict(di, dj)) return node_linear(di, dj);
      }
  }
  for (int ring = 0; ring <= std::max(nx(), ny()); ++ring) {
    for (int dj = (dim == 2 ? -ring : 0); dj <= (dim == 2 ? ring : 0); ++dj)
      for (int di = -ring; di <= ring; ++di) {
        if (std::max(std::abs(di), std::abs(dj)) != ring) continue;
        if (interior_all(di, dj)) return node_linear(di, dj);
      }
  }
  throw NumericError("discretize.grid",
                     "no interior node near the origin for normalization");
}

std::vector<int> Grid::window_rows(double radius) const {
  std::vector<int> out;
  for (int r = 0; r < n_rows(); ++r) {
    Point x = coord(rows[static_cast<std::size_t>(r)].first);
    double d2 = x[0] * x[0] + (dim == 2 ? x[1] * x[1] : 0.0);
    if (d2 <= radius * radius * (1.0 + 1e-12)) out.push_back(r);
  }
  return out;
}

double GridFn::interpolate(const Point& x, int k) const {
  const Grid& g = *grid;
  auto clampi = [&](double t, int lo, int hi) {
    int i0 = static_cast<int>(std::floor(t));
    return std::clamp(i0, lo, hi - 1);
  };
  double tx = x[0] / g.h;
  int i0 = clampi(tx, g.ilo[0], g.ihi[0]);
  double fx = std::clamp(tx - i0, 0.0, 1.0);
  if (g.dim == 1) {
    double v0 = at(g.node_linear(i0), k);
    double v1 = at(g.node_linear(i0 + 1), k);
    return v0 + fx * (v1 - v0);
  }
  double ty = x[1] / g.h;
  int j0 = clampi(ty, g.ilo[1], g.ihi[1]);
  double fy = std::clamp(ty - j0, 0.0, 1.0);
  double v00 = at(g.node_linear(i0, j0), k);
  double v10 = at(g.node_linear(i0 + 1, j0), k);
  double v01 = at(g.node_linear(i0, j0 + 1), k);
  double v11 = at(g.node_linear(i0 + 1, j0 + 1), k);
  return (1 - fx) * (1 - fy) * v00 + fx * (1 - fy) * v10 + (1 - fx) * fy * v01 +
         fx * fy * v11;
}

}  // namespace coopeig
