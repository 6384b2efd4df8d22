#include "bidhom/geometry.hpp"

#include <cmath>
#include <cstdlib>
#include <queue>
#include <stdexcept>

namespace bidhom {

namespace {

// Snap a rational coordinate to the grid; rejects coordinates that do not
// lie exactly on grid facets.
int grid_aligned(double coord, int n, const char* what) {
  double scaled = coord * n;
  double rounded = std::round(scaled);
  if (std::abs(scaled - rounded) > 1e-12)
    throw std::invalid_argument(std::string(what) +
                                ": inclusion coordinate " + std::to_string(coord) +
                                " is not aligned to the n=" + std::to_string(n) + " grid");
  return static_cast<int>(rounded);
}

// Face-connected component count of the cells with the given phase,
// with periodic adjacency.
int count_components(const Mesh& mesh, Phase which) {
  const int nc = mesh.num_cells();
  std::vector<int> comp(nc, -1);
  int ncomp = 0;
  for (int seed = 0; seed < nc; ++seed) {
    if (mesh.phase[seed] != which || comp[seed] >= 0) continue;
    std::queue<int> q;
    q.push(seed);
    comp[seed] = ncomp;
    while (!q.empty()) {
      int c = q.front();
      q.pop();
      int ijk[3];
      mesh.cell_coords(c, ijk);
      for (int d = 0; d < mesh.dim; ++d) {
        for (int s = -1; s <= 1; s += 2) {
          int nb[3] = {ijk[0], ijk[1], ijk[2]};
          nb[d] += s;
          if (mesh.periodic) {
            nb[d] = (nb[d] + mesh.cells_per_side[d]) % mesh.cells_per_side[d];
          } else if (nb[d] < 0 || nb[d] >= mesh.cells_per_side[d]) {
            continue;
          }
          int c2 = mesh.cell_index(nb[0], nb[1], nb[2]);
          if (mesh.phase[c2] == which && comp[c2] < 0) {
            comp[c2] = ncomp;
            q.push(c2);
          }
        }
      }
    }
    ++ncomp;
  }
  return ncomp;
}

void build_facets(Mesh& mesh) {
  mesh.facets.clear();
  const double facet_area = std::pow(mesh.h, mesh.dim - 1);
  const int nc = mesh.num_cells();
  for (int c = 0; c < nc; ++c) {
    int ijk[3];
    mesh.cell_coords(c, ijk);
    for (int d = 0; d < mesh.dim; ++d) {
      // look only at the +d neighbour so each facet is visited once
      int nb[3] = {ijk[0], ijk[1], ijk[2]};
      nb[d] += 1;
      bool wrapped = false;
      if (nb[d] == mesh.cells_per_side[d]) {
        if (!mesh.periodic) continue;
        nb[d] = 0;
        wrapped = true;
      }
      int c2 = mesh.cell_index(nb[0], nb[1], nb[2]);
      if (mesh.phase[c] == mesh.phase[c2]) continue;
      if (wrapped)
        throw std::invalid_argument(
            "interface facet on the periodic cell boundary: |Gamma n dY| = 0 violated");
      Facet f;
      f.axis = d;
      f.area = facet_area;
      if (mesh.phase[c] == Phase::inc) {
        f.cell_int = c;
        f.cell_out = c2;
        f.sign = +1.0;  // normal points in +d, into the out phase
      } else {
        f.cell_int = c2;
        f.cell_out = c;
        f.sign = -1.0;
      }
      // corner nodes of the shared face at coordinate ijk[d]+1 along d
      int corner[3] = {ijk[0], ijk[1], ijk[2]};
      corner[d] += 1;
      int idx = 0;
      for (int a = 0; a < (1 << mesh.dim); ++a) {
        if ((a >> d) & 1) continue;  // face is constant along d
        int p[3] = {corner[0], corner[1], corner[2]};
        for (int dd = 0; dd < mesh.dim; ++dd)
          if (dd != d) p[dd] += (a >> dd) & 1;
        f.nodes[idx++] = mesh.node_index(p[0], p[1], p[2]);
      }
      mesh.facets.push_back(f);
    }
  }
}

}  // namespace

CellGeometry build_unit_cell(const CellSpec& spec) {
  if (spec.dim != 2 && spec.dim != 3)
    throw std::invalid_argument("build_unit_cell: dim must be 2 or 3");
  const int n = spec.resolution;
  if (n < 2 || (n & (n - 1)) != 0)
    throw std::invalid_argument("build_unit_cell: resolution must be a power of two >= 2");
  if (spec.topology == Topology::connected && spec.dim != 3)
    throw std::invalid_argument(
        "build_unit_cell: connected topology requires dim = 3 "
        "(two interpenetrating periodic-connected phases do not exist on a 2-torus)");
  if (spec.topology == Topology::connected &&
      spec.inclusion.kind != InclusionShape::Kind::tube_cross)
    throw std::invalid_argument("build_unit_cell: connected topology requires a tube_cross inclusion");
  if (spec.topology == Topology::disconnected &&
      spec.inclusion.kind == InclusionShape::Kind::tube_cross)
    throw std::invalid_argument("build_unit_cell: tube_cross inclusion requires connected topology");

  CellGeometry geo;
  geo.spec = spec;
  Mesh& mesh = geo.mesh;
  mesh.dim = spec.dim;
  mesh.cells_per_side = {n, n, spec.dim == 3 ? n : 1};
  mesh.h = 1.0 / n;
  mesh.periodic = true;
  mesh.phase.assign(mesh.num_cells(), Phase::out);

  switch (spec.inclusion.kind) {
    case InclusionShape::Kind::empty:
      break;
    case InclusionShape::Kind::box: {
      int lo[3] = {0, 0, 0}, hi[3] = {0, 0, 1};
      for (int d = 0; d < spec.dim; ++d) {
        lo[d] = grid_aligned(spec.inclusion.lo[d], n, "box.lo");
        hi[d] = grid_aligned(spec.inclusion.hi[d], n, "box.hi");
        if (lo[d] >= hi[d]) throw std::invalid_argument("build_unit_cell: empty box extent");
        if (lo[d] <= 0 || hi[d] >= n)
          throw std::invalid_argument(
              "build_unit_cell: disconnected inclusion must lie strictly inside Y");
      }
      for (int k = (spec.dim == 3 ? lo[2] : 0); k < (spec.dim == 3 ? hi[2] : 1); ++k)
        for (int j = lo[1]; j < hi[1]; ++j)
          for (int i = lo[0]; i < hi[0]; ++i)
            mesh.phase[mesh.cell_index(i, j, k)] = Phase::inc;
      break;
    }
    case InclusionShape::Kind::tube_cross: {
      int lo = grid_aligned(spec.inclusion.lo[0], n, "tube.lo");
      int hi = grid_aligned(spec.inclusion.hi[0], n, "tube.hi");
      if (lo >= hi) throw std::invalid_argument("build_unit_cell: empty tube cross-section");
      if (lo <= 0 || hi >= n)
        throw std::invalid_argument(
            "build_unit_cell: tube cross-section must be strictly inside laterally");
      for (int k = 0; k < n; ++k)
        for (int j = 0; j < n; ++j)
          for (int i = 0; i < n; ++i) {
            int p[3] = {i, j, k};
            bool in = false;
            for (int axis = 0; axis < 3 && !in; ++axis) {
              bool trans = true;
              for (int d = 0; d < 3; ++d)
                if (d != axis && (p[d] < lo || p[d] >= hi)) trans = false;
              in = trans;
            }
            if (in) mesh.phase[mesh.cell_index(i, j, k)] = Phase::inc;
          }
      break;
    }
  }

  build_facets(mesh);

  geo.cells_int = 0;
  for (Phase p : mesh.phase)
    if (p == Phase::inc) ++geo.cells_int;
  geo.cells_out = mesh.num_cells() - geo.cells_int;
  geo.vol_int = static_cast<double>(geo.cells_int) / mesh.num_cells();
  geo.vol_out = static_cast<double>(geo.cells_out) / mesh.num_cells();
  geo.area_gamma = 0.0;
  for (const Facet& f : mesh.facets) geo.area_gamma += f.area;

  if (geo.cells_out == 0) throw std::invalid_argument("build_unit_cell: out phase is empty");
  if (count_components(mesh, Phase::out) != 1)
    throw std::invalid_argument("build_unit_cell: out phase is not connected");
  if (spec.topology == Topology::connected) {
    if (count_components(mesh, Phase::inc) != 1)
      throw std::invalid_argument("build_unit_cell: inclusion phase is not connected");
  }
  return geo;
}

DomainGeometry tile_domain(const CellGeometry& cell, int k) {
  const Topology topo = cell.spec.topology;
  if (topo == Topology::disconnected && k < 3)
    throw std::invalid_argument("tile_domain: no interior cells (need 1/eps >= 3)");
  if (topo == Topology::connected && k < 2)
    throw std::invalid_argument("tile_domain: need 1/eps >= 2");

  DomainGeometry dom;
  dom.k = k;
  dom.eps = 1.0 / k;
  dom.topology = topo;
  dom.cell = cell;

  const int n = cell.spec.resolution;
  Mesh& mesh = dom.mesh;
  mesh.dim = cell.spec.dim;
  const int fine = k * n;
  mesh.cells_per_side = {fine, fine, mesh.dim == 3 ? fine : 1};
  mesh.h = 1.0 / fine;
  mesh.periodic = false;
  mesh.phase.assign(mesh.num_cells(), Phase::out);

  dom.interior_macro_cells = 0;
  const int kz = mesh.dim == 3 ? k : 1;
  for (int K = 0; K < kz; ++K)
    for (int J = 0; J < k; ++J)
      for (int I = 0; I < k; ++I) {
        bool boundary_cell = I == 0 || I == k - 1 || J == 0 || J == k - 1 ||
                             (mesh.dim == 3 && (K == 0 || K == k - 1));
        if (topo == Topology::disconnected && boundary_cell) continue;
        ++dom.interior_macro_cells;
        // copy the unit-cell phase pattern into macro cell (I,J,K)
        const int nz = mesh.dim == 3 ? n : 1;
        for (int kk = 0; kk < nz; ++kk)
          for (int jj = 0; jj < n; ++jj)
            for (int ii = 0; ii < n; ++ii) {
              Phase p = cell.mesh.phase[cell.mesh.cell_index(ii, jj, kk)];
              if (p == Phase::inc)
                mesh.phase[mesh.cell_index(I * n + ii, J * n + jj, K * n + kk)] = Phase::inc;
            }
      }
  if (topo == Topology::connected)
    dom.interior_macro_cells = static_cast<long>(std::pow(k, mesh.dim));

  build_facets(mesh);
  dom.area_gamma_eps = 0.0;
  for (const Facet& f : mesh.facets) dom.area_gamma_eps += f.area;
  return dom;
}

std::vector<double> interface_quadrature(const Mesh& mesh) {
  std::vector<double> w;
  w.reserve(mesh.facets.size());
  for (const Facet& f : mesh.facets) w.push_back(f.area);
  return w;
}

std::vector<double> interface_node_weights(const Mesh& mesh) {
  std::vector<double> w(mesh.num_nodes(), 0.0);
  const double share = 1.0 / mesh.nodes_per_facet();
  for (const Facet& f : mesh.facets)
    for (int a = 0; a < mesh.nodes_per_facet(); ++a) w[f.nodes[a]] += f.area * share;
  return w;
}

int unit_cell_of(const DomainGeometry& dom, int fine_cell) {
  const int n = dom.cell.spec.resolution;
  int ijk[3];
  dom.mesh.cell_coords(fine_cell, ijk);
  return dom.cell.mesh.cell_index(ijk[0] % n, ijk[1] % n, dom.mesh.dim == 3 ? ijk[2] % n : 0);
}

}  // namespace bidhom
