#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace bidhom {

/// Phase label of a grid cell: the healthy bidomain phase (out, "B") or the
/// diffusive inclusion phase (int, "D").
enum class Phase : std::uint8_t { out = 0, inc = 1 };

enum class Topology { disconnected, connected };

struct InclusionShape {
  enum class Kind { empty, box, tube_cross };
  Kind kind = Kind::empty;
  // box: corner coordinates in (0,1)^dim.
  // tube_cross: transverse cross-section bounds, shared by all three tubes.
  std::array<double, 3> lo{0, 0, 0};
  std::array<double, 3> hi{0, 0, 0};
};

/// Description of the periodic unit cell Y = (0,1)^dim.
struct CellSpec {
  int dim = 2;
  int resolution = 8;  // cells per side, power of two
  Topology topology = Topology::disconnected;
  InclusionShape inclusion;
};

/// One interface facet separating an inclusion cell from an out cell.
/// The unit normal is sign * e_axis and points into the out phase.
struct Facet {
  int cell_int = -1;
  int cell_out = -1;
  int axis = 0;
  double sign = 1.0;
  std::array<int, 4> nodes{-1, -1, -1, -1};  // 2 corners in 2D, 4 in 3D
  double area = 0.0;
};

/// Structured Q1 grid over a box, optionally with periodic node
/// identification. Cells carry phase labels; the facet list holds the
/// int/out interface with normals oriented into the out phase.
class Mesh {
public:
  int dim = 2;
  std::array<int, 3> cells_per_side{1, 1, 1};
  double h = 1.0;
  bool periodic = false;
  std::vector<Phase> phase;
  std::vector<Facet> facets;

  int num_cells() const { return cells_per_side[0] * cells_per_side[1] * cells_per_side[2]; }
  int nodes_per_side(int d) const {
    if (d >= dim) return 1;
    return periodic ? cells_per_side[d] : cells_per_side[d] + 1;
  }
  int num_nodes() const { return nodes_per_side(0) * nodes_per_side(1) * nodes_per_side(2); }
  int corners_per_cell() const { return 1 << dim; }
  int nodes_per_facet() const { return 1 << (dim - 1); }

  int cell_index(int i, int j, int k = 0) const {
    return i + cells_per_side[0] * (j + cells_per_side[1] * k);
  }
  void cell_coords(int c, int ijk[3]) const {
    ijk[0] = c % cells_per_side[0];
    ijk[1] = (c / cells_per_side[0]) % cells_per_side[1];
    ijk[2] = c / (cells_per_side[0] * cells_per_side[1]);
  }
  int node_index(int i, int j, int k = 0) const {
    if (periodic) {
      i %= cells_per_side[0];
      j %= cells_per_side[1];
      k %= cells_per_side[2];
    }
    return i + nodes_per_side(0) * (j + nodes_per_side(1) * k);
  }
  void node_coords(int nid, int ijk[3]) const {
    ijk[0] = nid % nodes_per_side(0);
    ijk[1] = (nid / nodes_per_side(0)) % nodes_per_side(1);
    ijk[2] = nid / (nodes_per_side(0) * nodes_per_side(1));
  }
  void node_position(int nid, double x[3]) const {
    int ijk[3];
    node_coords(nid, ijk);
    for (int d = 0; d < 3; ++d) x[d] = ijk[d] * h;
  }
  /// Corner nodes of cell c in local order a + 2b + 4c.
  void cell_nodes(int c, int out[8]) const {
    int ijk[3];
    cell_coords(c, ijk);
    int m = corners_per_cell();
    for (int a = 0; a < m; ++a)
      out[a] = node_index(ijk[0] + (a & 1), ijk[1] + ((a >> 1) & 1), ijk[2] + ((a >> 2) & 1));
  }
  bool node_on_boundary(int nid) const {
    if (periodic) return false;
    int ijk[3];
    node_coords(nid, ijk);
    for (int d = 0; d < dim; ++d)
      if (ijk[d] == 0 || ijk[d] == cells_per_side[d]) return true;
    return false;
  }
};

/// Discretized periodic unit cell with exact rational measures.
struct CellGeometry {
  CellSpec spec;
  Mesh mesh;
  long cells_int = 0;
  long cells_out = 0;
  double vol_int = 0.0;   // |Y_int|
  double vol_out = 1.0;   // |Y_out|
  double area_gamma = 0.0;  // |Gamma|
};

/// The eps-tiled macroscopic domain Omega = (0,1)^dim with the boundary-layer
/// rule applied in the disconnected case.
struct DomainGeometry {
  int k = 1;  // 1/eps
  double eps = 1.0;
  Topology topology = Topology::disconnected;
  CellGeometry cell;  // source unit cell
  Mesh mesh;          // fine mesh, k*n cells per side
  double area_gamma_eps = 0.0;  // |Gamma_eps|
  long interior_macro_cells = 0;
};

CellGeometry build_unit_cell(const CellSpec& spec);
DomainGeometry tile_domain(const CellGeometry& cell, int k);

/// Per-facet quadrature weights (facet areas); exact for piecewise-constant
/// integrands on the interface.
std::vector<double> interface_quadrature(const Mesh& mesh);

/// Lumped per-node interface weights: each facet distributes its area evenly
/// over its corners. Returned dense over all mesh nodes (zero off Gamma).
std::vector<double> interface_node_weights(const Mesh& mesh);

/// Maps a fine-mesh cell of a tiled domain to its unit-cell counterpart.
int unit_cell_of(const DomainGeometry& dom, int fine_cell);

}  // namespace bidhom
