#pragma once

#include <cstdint>
#include <memory>
#include <utility>
#include <vector>

#include "coopeig/model.hpp"

namespace coopeig {

// Uniform lattice h*Z^d shared by every grid of the same spacing, so grid
// functions computed on nested domains agree node-for-node. A slot is a
// (node, regime) pair; slots are classified as
//   Interior  - unknown row of the discrete system,
//   Boundary  - Dirichlet data carrier (region rim, exterior nodes, or the
//               rasterized hole of an exterior problem),
//   Excluded  - not part of the problem.
// A node inside the region whose axis neighbors all lie inside is Interior;
// everything else inside the bounding box is Boundary.
class Grid {
public:
  enum class NodeClass : std::uint8_t { Excluded, Interior, Boundary };
  enum class BoundaryTag : std::uint8_t { None, Outer, Hole };

  int dim = 1;
  double h = 1.0;
  int n_regimes = 1;
  std::array<int, 2> ilo{0, 0}, ihi{0, 0};

  std::vector<NodeClass> cls;
  std::vector<BoundaryTag> tag;
  std::vector<int> row_of;   // slot -> interior row index, -1 otherwise
  std::vector<int> bcol_of;  // slot -> boundary column index, -1 otherwise
  std::vector<std::pair<int, int>> rows;   // row -> (node, regime)
  std::vector<std::pair<int, int>> bcols;  // bcol -> (node, regime)

  int nx() const { return ihi[0] - ilo[0] + 1; }
  int ny() const { return dim == 2 ? ihi[1] - ilo[1] + 1 : 1; }
  int n_nodes() const { return nx() * ny(); }
  int n_rows() const { return static_cast<int>(rows.size()); }
  int n_bcols() const { return static_cast<int>(bcols.size()); }
  int n_slots() const { return n_nodes() * n_regimes; }

  int node_linear(int i, int j = 0) const {
    return (i - ilo[0]) + nx() * (j - (dim == 2 ? ilo[1] : 0));
  }
  bool node_in_box(int i, int j = 0) const {
    if (i < ilo[0] || i > ihi[0]) return false;
    if (dim == 2 && (j < ilo[1] || j > ihi[1])) return false;
    return true;
  }
  std::array<int, 2> node_index(int node) const {
    int i = node % nx() + ilo[0];
    int j = dim == 2 ? node / nx() + ilo[1] : 0;
    return {i, j};
  }
  Point coord(int node) const {
    auto idx = node_index(node);
    return {idx[0] * h, dim == 2 ? idx[1] * h : 0.0};
  }
  int slot(int node, int k) const { return node * n_regimes + (k - 1); }

  NodeClass cls_at(int node, int k) const { return cls[static_cast<std::size_t>(slot(node, k))]; }
  bool is_interior(int node, int k) const { return cls_at(node, k) == NodeClass::Interior; }

  // Node of the lattice closest to the origin that is interior for every
  // regime participating in the grid; used as the normalization node.
  int normalization_node() const;

  // Interior rows whose node lies within `radius` of the origin.
  std::vector<int> window_rows(double radius) const;
};

// Dense values over every slot of a grid. When constructed from a shared
// grid the function keeps it alive.
struct GridFn {
  const Grid* grid = nullptr;
  std::vector<double> v;
  std::shared_ptr<const Grid> owner;

  GridFn() = default;
  explicit GridFn(const Grid& g, double fill = 0.0)
      : grid(&g), v(static_cast<std::size_t>(g.n_slots()), fill) {}
  explicit GridFn(std::shared_ptr<const Grid> g, double fill = 0.0)
      : grid(g.get()), v(static_cast<std::size_t>(g->n_slots()), fill),
        owner(std::move(g)) {}

  double& at(int node, int k) { return v[static_cast<std::size_t>(grid->slot(node, k))]; }
  double at(int node, int k) const { return v[static_cast<std::size_t>(grid->slot(node, k))]; }

  template <class F>
  void fill_from(F&& f) {
    for (int node = 0; node < grid->n_nodes(); ++node) {
      Point x = grid->coord(node);
      for (int k = 1; k <= grid->n_regimes; ++k) at(node, k) = f(x, k);
    }
  }

  // Multilinear interpolation in x for fixed regime, clamped to the box.
  double interpolate(const Point& x, int k) const;
};

// Rasterizes `region` onto the lattice. Throws EmptyInterior when a
// participating regime has no interior node and DisconnectedInterior when the
// interior slots do not form a single component under axis adjacency plus
// same-node regime adjacency.
Grid build_grid(const ProblemSpec& spec, const RegionSpec& region, double h);

// Grid for the exterior problem on region \ hole: hole slots become Boundary
// with the Hole tag. Connectivity is not required here (an annulus may be
// joined only through regime switching, which the grid cannot see).
Grid build_grid_exterior(const ProblemSpec& spec, const RegionSpec& region,
                         const RegionSpec& hole, double h);

}  // namespace coopeig
