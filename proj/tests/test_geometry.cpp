#include <doctest.h>

#include <cmath>

#include "bidhom/geometry.hpp"

using namespace bidhom;

namespace {

CellSpec box_spec_2d(int n = 8) {
  CellSpec s;
  s.dim = 2;
  s.resolution = n;
  s.topology = Topology::disconnected;
  s.inclusion.kind = InclusionShape::Kind::box;
  s.inclusion.lo = {0.25, 0.25, 0.0};
  s.inclusion.hi = {0.75, 0.75, 0.0};
  return s;
}

CellSpec cross_spec_3d(int n = 8) {
  CellSpec s;
  s.dim = 3;
  s.resolution = n;
  s.topology = Topology::connected;
  s.inclusion.kind = InclusionShape::Kind::tube_cross;
  s.inclusion.lo = {0.375, 0.375, 0.375};
  s.inclusion.hi = {0.625, 0.625, 0.625};
  return s;
}

// independent voxel-enumeration oracle for the tube cross
long count_cross_voxels(int n, double lo, double hi) {
  long count = 0;
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        double c[3] = {(i + 0.5) / n, (j + 0.5) / n, (k + 0.5) / n};
        bool in = false;
        for (int axis = 0; axis < 3; ++axis) {
          bool trans = true;
          for (int d = 0; d < 3; ++d)
            if (d != axis && !(c[d] > lo && c[d] < hi)) trans = false;
          if (trans) in = true;
        }
        if (in) ++count;
      }
  return count;
}

}  // namespace

TEST_CASE("unit cell: 2D box measures") {
  auto geo = build_unit_cell(box_spec_2d());
  CHECK(geo.vol_int == 0.25);
  CHECK(geo.vol_out == 0.75);
  CHECK(geo.vol_int + geo.vol_out == 1.0);  // exact rational partition
  CHECK(geo.area_gamma == doctest::Approx(2.0));
}

TEST_CASE("unit cell: empty inclusion degenerates") {
  CellSpec s;
  s.dim = 2;
  s.resolution = 8;
  auto geo = build_unit_cell(s);
  CHECK(geo.vol_int == 0.0);
  CHECK(geo.mesh.facets.empty());
  CHECK(interface_quadrature(geo.mesh).empty());
}

TEST_CASE("unit cell: 3D tube cross voxel count oracle") {
  auto geo = build_unit_cell(cross_spec_3d());
  long expected = count_cross_voxels(8, 0.375, 0.625);
  CHECK(geo.cells_int == expected);
  CHECK(geo.vol_int == double(expected) / 512.0);
}

TEST_CASE("unit cell: rejections") {
  SUBCASE("connected topology in 2D") {
    CellSpec s = box_spec_2d();
    s.topology = Topology::connected;
    CHECK_THROWS(build_unit_cell(s));
  }
  SUBCASE("inclusion not grid aligned") {
    CellSpec s = box_spec_2d();
    s.inclusion.lo[0] = 0.3;  // 0.3 * 8 is not an integer
    CHECK_THROWS(build_unit_cell(s));
  }
  SUBCASE("inclusion touching the cell boundary") {
    CellSpec s = box_spec_2d();
    s.inclusion.lo[0] = 0.0;
    CHECK_THROWS(build_unit_cell(s));
  }
}

TEST_CASE("unit cell: normals satisfy the divergence theorem") {
  // sum over facets of area * nu = 0 for a closed inclusion boundary
  for (int variant = 0; variant < 2; ++variant) {
    CellGeometry geo =
        variant == 0 ? build_unit_cell(box_spec_2d()) : build_unit_cell(cross_spec_3d());
    double sum[3] = {0, 0, 0};
    for (const Facet& f : geo.mesh.facets) sum[f.axis] += f.sign * f.area;
    for (int d = 0; d < geo.mesh.dim; ++d) CHECK(sum[d] == doctest::Approx(0.0).epsilon(1e-14));
  }
}

TEST_CASE("unit cell: every facet separates int from out and nu points into out") {
  auto geo = build_unit_cell(box_spec_2d());
  CHECK(!geo.mesh.facets.empty());
  for (const Facet& f : geo.mesh.facets) {
    CHECK(geo.mesh.phase[f.cell_int] == Phase::inc);
    CHECK(geo.mesh.phase[f.cell_out] == Phase::out);
    int ci[3], co[3];
    geo.mesh.cell_coords(f.cell_int, ci);
    geo.mesh.cell_coords(f.cell_out, co);
    // the out cell sits on the side the normal points to
    CHECK(co[f.axis] - ci[f.axis] == (f.sign > 0 ? 1 : -1));
  }
}

TEST_CASE("tile_domain: interior cell counting at k=4") {
  auto cell = build_unit_cell(box_spec_2d());
  auto dom = tile_domain(cell, 4);
  CHECK(dom.interior_macro_cells == 4);
  // 12 boundary macro cells carry no inclusion
  long int_cells = 0;
  for (Phase p : dom.mesh.phase)
    if (p == Phase::inc) ++int_cells;
  CHECK(int_cells == 4 * cell.cells_int);
}

TEST_CASE("tile_domain: rejects k without interior cells") {
  auto cell = build_unit_cell(box_spec_2d());
  CHECK_THROWS(tile_domain(cell, 1));
  CHECK_THROWS(tile_domain(cell, 2));
}

TEST_CASE("tile_domain: interface measure scaling at k=8") {
  auto cell = build_unit_cell(box_spec_2d());
  auto dom = tile_domain(cell, 8);
  // facet-enumeration oracle: 36 interior cells, each carrying |Gamma| eps^{d-1}
  double expected = 36.0 * cell.area_gamma * (1.0 / 8.0);
  CHECK(dom.area_gamma_eps == doctest::Approx(expected).epsilon(1e-13));
}

TEST_CASE("tile_domain: measures match cell-count arithmetic exactly") {
  auto cell = build_unit_cell(box_spec_2d());
  auto dom = tile_domain(cell, 4);
  long int_cells = 0;
  for (Phase p : dom.mesh.phase)
    if (p == Phase::inc) ++int_cells;
  double vol_int = double(int_cells) / dom.mesh.num_cells();
  CHECK(vol_int == doctest::Approx(dom.interior_macro_cells * cell.vol_int * dom.eps * dom.eps)
                       .epsilon(1e-15));
}

TEST_CASE("interface quadrature sums to the interface measure") {
  auto cell = build_unit_cell(box_spec_2d());
  auto w = interface_quadrature(cell.mesh);
  double sum = 0;
  for (double x : w) sum += x;
  CHECK(sum == doctest::Approx(2.0).epsilon(1e-14));

  auto dom = tile_domain(cell, 4);
  auto wd = interface_quadrature(dom.mesh);
  double sumd = 0;
  for (double x : wd) sumd += x;
  CHECK(sumd == doctest::Approx(4.0 * 2.0 * 0.25).epsilon(1e-14));
}

TEST_CASE("connected tiling keeps inclusions in boundary cells") {
  auto cell = build_unit_cell(cross_spec_3d());
  auto dom = tile_domain(cell, 2);
  long int_cells = 0;
  for (Phase p : dom.mesh.phase)
    if (p == Phase::inc) ++int_cells;
  CHECK(int_cells == 8 * cell.cells_int);
}

TEST_CASE("node weights distribute facet areas") {
  auto cell = build_unit_cell(box_spec_2d());
  auto wn = interface_node_weights(cell.mesh);
  double sum = 0;
  for (double x : wn) sum += x;
  CHECK(sum == doctest::Approx(cell.area_gamma).epsilon(1e-14));
}
