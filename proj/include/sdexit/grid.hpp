#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "sdexit/generator.hpp"
#include "sdexit/rng.hpp"
#include "sdexit/sde.hpp"

namespace sdexit {

struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Domains
// ---------------------------------------------------------------------------

/// Recirculation cell of the meandering jet: the connected component of
/// {sign * (psi - psi_star) < 0} between two adjacent saddle points of psi.
/// Boundary components: crest (separatrix arc above the cell's stagnation
/// point) and trough (below).
struct EddyDomain {
  JetParams jet;
  double psi_star = 0.0;
  double inside_sign = -1.0;  // inside means inside_sign * (psi - psi_star) > 0
  double x_left = 0.0, x_right = 0.0;
  double saddle_y = 0.0;
  double center_x = 0.0, center_y = 0.0;
  double y_lo = 0.0, y_hi = 0.0;  // separatrix extent, used to isolate the cell

  bool contains(double x, double y) const {
    if (x <= x_left || x >= x_right) return false;
    if (y < y_lo - 1e-12 || y > y_hi + 1e-12) return false;
    const JetEval e = jet_stream_function(x, y, jet);
    return inside_sign * (e.psi - psi_star) > 0.0;
  }
};

struct CuboidDomain {
  std::array<std::array<double, 2>, 3> bounds{};  // [axis][lo,hi]
  int dim = 3;

  bool contains(const double* x) const {
    for (int a = 0; a < dim; ++a)
      if (!(x[a] > bounds[a][0] && x[a] < bounds[a][1])) return false;
    return true;
  }
};

struct Domain {
  int dim = 0;
  std::variant<EddyDomain, CuboidDomain> geometry;
  std::vector<std::string> gamma_names;

  bool is_eddy() const { return std::holds_alternative<EddyDomain>(geometry); }
  const EddyDomain& eddy() const { return std::get<EddyDomain>(geometry); }
  const CuboidDomain& cuboid() const { return std::get<CuboidDomain>(geometry); }

  bool contains(const double* x) const {
    if (is_eddy()) return eddy().contains(x[0], x[1]);
    return cuboid().contains(x);
  }

  int gamma_index(const std::string& name) const {
    for (std::size_t i = 0; i < gamma_names.size(); ++i)
      if (gamma_names[i] == name) return static_cast<int>(i);
    throw std::invalid_argument("domain: unknown boundary component '" + name + "'");
  }

  /// Label for a point on (or just beyond) the boundary. Eddy arcs are told
  /// apart by y relative to the cell's stagnation point.
  int label_for_position(const double* x) const {
    if (is_eddy()) return x[1] > eddy().center_y ? 0 : 1;
    const auto& c = cuboid();
    for (int a = 0; a < c.dim; ++a) {
      const double lo = c.bounds[a][0], hi = c.bounds[a][1];
      const double tol = 1e-9 * (hi - lo);
      if (x[a] <= lo + tol) return 2 * a;
      if (x[a] >= hi - tol) return 2 * a + 1;
    }
    // Not on a face; pick the nearest one.
    int best = 0;
    double bestd = std::numeric_limits<double>::max();
    for (int a = 0; a < c.dim; ++a) {
      if (x[a] - c.bounds[a][0] < bestd) { bestd = x[a] - c.bounds[a][0]; best = 2 * a; }
      if (c.bounds[a][1] - x[a] < bestd) { bestd = c.bounds[a][1] - x[a]; best = 2 * a + 1; }
    }
    return best;
  }

  /// Label for a Monte Carlo exit: `from` is the last inside state, `out`
  /// the first outside state. Cuboids use the face whose plane the segment
  /// crosses first.
  int label_for_exit(const double* from, const double* out) const {
    if (is_eddy()) return out[1] > eddy().center_y ? 0 : 1;
    const auto& c = cuboid();
    double tmin = std::numeric_limits<double>::max();
    int best = 0;
    for (int a = 0; a < c.dim; ++a) {
      const double d = out[a] - from[a];
      if (out[a] <= c.bounds[a][0] && d < 0.0) {
        const double t = (c.bounds[a][0] - from[a]) / d;
        if (t < tmin) { tmin = t; best = 2 * a; }
      }
      if (out[a] >= c.bounds[a][1] && d > 0.0) {
        const double t = (c.bounds[a][1] - from[a]) / d;
        if (t < tmin) { tmin = t; best = 2 * a + 1; }
      }
    }
    return best;
  }
};

// ---------------------------------------------------------------------------
// Grid discretization
// ---------------------------------------------------------------------------

/// Tensor grid over the domain's bounding box with nodes classified as
/// interior, boundary (Dirichlet carriers, one Gamma label each), or
/// exterior. Every interior node stores six (2*dim) arms; an arm either
/// points at another interior node or at a Dirichlet point snapped onto the
/// true boundary at distance `dist` along the axis.
class GridDiscretization {
 public:
  enum class NodeClass : std::uint8_t { Exterior, Interior, Boundary };

  struct Arm {
    std::int64_t neighbor_row = -1;  // >= 0: interior neighbor row
    double dist = 0.0;               // spacing, or snapped boundary distance
    int label = -1;                  // Gamma index for Dirichlet arms
  };

  Domain domain;
  int dim = 0;
  std::array<int, 3> npts{1, 1, 1};
  std::array<double, 3> origin{};
  std::array<double, 3> spacing{};
  std::vector<NodeClass> node_class;
  std::vector<int> node_label;          // Gamma index for boundary nodes, -1 otherwise
  std::vector<std::int64_t> row_of;     // node -> interior row, -1 otherwise
  std::vector<std::int64_t> node_of_row;
  std::vector<Arm> arms;                // node_of_row.size() * 2 * dim

  std::int64_t total_nodes() const {
    return static_cast<std::int64_t>(npts[0]) * npts[1] * npts[2];
  }
  std::int64_t interior_count() const { return static_cast<std::int64_t>(node_of_row.size()); }

  std::int64_t node_index(int i, int j, int k = 0) const {
    return (static_cast<std::int64_t>(k) * npts[1] + j) * npts[0] + i;
  }
  std::array<int, 3> node_ijk(std::int64_t node) const {
    std::array<int, 3> out{};
    out[0] = static_cast<int>(node % npts[0]);
    out[1] = static_cast<int>((node / npts[0]) % npts[1]);
    out[2] = static_cast<int>(node / (static_cast<std::int64_t>(npts[0]) * npts[1]));
    return out;
  }
  Vec node_coord(std::int64_t node) const {
    const auto ijk = node_ijk(node);
    Vec x(dim);
    for (int a = 0; a < dim; ++a) x(a) = origin[a] + ijk[a] * spacing[a];
    return x;
  }
  const Arm& arm(std::int64_t row, int axis, int side) const {
    return arms[static_cast<std::size_t>(row) * (2 * dim) + 2 * axis + side];
  }
  Arm& arm(std::int64_t row, int axis, int side) {
    return arms[static_cast<std::size_t>(row) * (2 * dim) + 2 * axis + side];
  }

  /// Cell volume attributed to an interior node; boundary-cut arms shrink
  /// the cell to its part inside the mask.
  double cell_weight(std::int64_t row) const {
    double w = 1.0;
    for (int a = 0; a < dim; ++a) {
      const double lo = std::min(arm(row, a, 0).dist, spacing[a]);
      const double hi = std::min(arm(row, a, 1).dist, spacing[a]);
      w *= 0.5 * (lo + hi);
    }
    return w;
  }

  double enclosed_volume() const {
    double v = 0.0;
    for (std::int64_t r = 0; r < interior_count(); ++r) v += cell_weight(r);
    return v;
  }

  /// Multilinear interpolation of nodal values at an interior point.
  double interpolate(const std::vector<double>& node_values, const Vec& x) const {
    std::array<int, 3> base{0, 0, 0};
    std::array<double, 3> frac{0.0, 0.0, 0.0};
    for (int a = 0; a < dim; ++a) {
      double t = (x(a) - origin[a]) / spacing[a];
      int i = static_cast<int>(std::floor(t));
      i = std::max(0, std::min(i, npts[a] - 2));
      base[a] = i;
      frac[a] = t - i;
    }
    double acc = 0.0;
    const int corners = 1 << dim;
    for (int cbits = 0; cbits < corners; ++cbits) {
      double w = 1.0;
      std::array<int, 3> ijk = base;
      for (int a = 0; a < dim; ++a) {
        if (cbits & (1 << a)) {
          ijk[a] += 1;
          w *= frac[a];
        } else {
          w *= 1.0 - frac[a];
        }
      }
      acc += w * node_values[static_cast<std::size_t>(node_index(ijk[0], ijk[1], ijk[2]))];
    }
    return acc;
  }
};

namespace detail {

/// Root of f on [lo, hi] (f(lo), f(hi) of opposite sign) by bisection with a
/// few Newton polishing steps when df is supplied.
template <class F, class DF>
double solve_scalar(F f, DF df, double lo, double hi) {
  double flo = f(lo), fhi = f(hi);
  if (!(flo * fhi < 0.0)) throw NumericalError("scalar root finder: root not bracketed");
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    const double fm = f(mid);
    if (fm == 0.0) return mid;
    if (flo * fm < 0.0) {
      hi = mid;
      fhi = fm;
    } else {
      lo = mid;
      flo = fm;
    }
    if (hi - lo < 1e-15 * (1.0 + std::abs(lo))) break;
  }
  double x = 0.5 * (lo + hi);
  for (int i = 0; i < 4; ++i) {
    const double d = df(x);
    if (d == 0.0) break;
    const double step = f(x) / d;
    if (x - step < lo || x - step > hi) break;
    x -= step;
  }
  return x;
}

/// First crossing of the inside/outside predicate along p + t*h*e_axis,
/// t in (0, 1]; the segment starts inside and ends outside.
inline double boundary_fraction(const Domain& domain, const Vec& p, int axis, double step) {
  double lo = 0.0, hi = 1.0;
  Vec q = p;
  for (int i = 0; i < 45; ++i) {
    const double mid = 0.5 * (lo + hi);
    q = p;
    q(axis) += mid * step;
    if (domain.contains(q.data()))
      lo = mid;
    else
      hi = mid;
  }
  return hi;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Builders
// ---------------------------------------------------------------------------

struct EddyOptions {
  int resolution = 256;                     // nodes per axis
  std::array<double, 2> reference{-0.2, 0.8};  // point inside the wanted cell
  int pad_cells = 2;
};

struct EddyBuildResult {
  Domain domain;
  GridDiscretization grid;
};

/// Locates the saddle pair of psi flanking the reference point, takes the
/// saddle level as the separatrix, and masks a tensor grid by the sign of
/// psi - psi_star. Boundary nodes are labeled crest/trough by y relative to
/// the cell's stagnation point.
inline EddyBuildResult build_eddy_domain(const JetParams& jet, const EddyOptions& opt = {}) {
  if (opt.resolution < 32)
    throw std::invalid_argument("build_eddy_domain: resolution must be >= 32");
  jet.validate();
  EddyDomain ed;
  ed.jet = jet;
  const double period = 2.0 * M_PI / jet.k();
  const double jx = std::ceil(opt.reference[0] / period);
  ed.x_right = jx * period;
  ed.x_left = ed.x_right - period;

  // Stagnation points: psi_x vanishes on the saddle/center columns, so the
  // search is one-dimensional in y.
  const double ysign = opt.reference[1] >= 0.0 ? 1.0 : -1.0;
  auto psi_y_at = [&](double x0, double y) { return jet_stream_function(x0, y, jet).psi_y; };
  auto psi_yy_at = [&](double x0, double y) { return jet_stream_function2(x0, y, jet).psi_yy; };
  auto stagnation_y = [&](double x0) {
    return detail::solve_scalar([&](double y) { return psi_y_at(x0, y); },
                                [&](double y) { return psi_yy_at(x0, y); }, ysign * 0.05,
                                ysign * 3.0);
  };
  double saddle_y, psi_star;
  try {
    saddle_y = stagnation_y(ed.x_right);
    psi_star = jet_stream_function(ed.x_right, saddle_y, jet).psi;
  } catch (const NumericalError&) {
    throw NumericalError("build_eddy_domain: saddle search failed to converge near x = " +
                         std::to_string(ed.x_right));
  }
  const JetEval2 sd = jet_stream_function2(ed.x_right, saddle_y, jet);
  if (!(sd.psi_xx * sd.psi_yy - sd.psi_xy * sd.psi_xy < 0.0))
    throw NumericalError("build_eddy_domain: stagnation point is not a saddle");
  ed.saddle_y = saddle_y;
  ed.psi_star = psi_star;

  ed.center_x = ed.x_right - 0.5 * period;
  ed.center_y = stagnation_y(ed.center_x);
  const double psi_center = jet_stream_function(ed.center_x, ed.center_y, jet).psi;
  if (std::abs(psi_center - psi_star) < 1e-10)
    throw NumericalError("build_eddy_domain: degenerate cell (center level equals saddle level)");
  ed.inside_sign = psi_center < psi_star ? -1.0 : 1.0;

  // Verify periodicity gave the same level at the left saddle.
  const double left_y = stagnation_y(ed.x_left);
  if (std::abs(jet_stream_function(ed.x_left, left_y, jet).psi - psi_star) > 1e-9)
    throw NumericalError("build_eddy_domain: saddle levels disagree across the window");

  // Separatrix y-extent by dense scanning inside the window.
  ed.y_lo = ed.center_y;
  ed.y_hi = ed.center_y;
  {
    const int nx = 2048, ny = 1024;
    const double yspan = 1.5;
    bool found = false;
    for (int i = 1; i < nx; ++i) {
      const double x = ed.x_left + period * i / nx;
      for (int j = 0; j <= ny; ++j) {
        const double y = ed.center_y - yspan + 2.0 * yspan * j / ny;
        const JetEval e = jet_stream_function(x, y, jet);
        if (ed.inside_sign * (e.psi - psi_star) > 0.0) {
          ed.y_lo = std::min(ed.y_lo, y);
          ed.y_hi = std::max(ed.y_hi, y);
          found = true;
        }
      }
    }
    if (!found) throw NumericalError("build_eddy_domain: empty cell");
    const double margin = 2.0 * 2.0 * yspan / ny;
    ed.y_lo -= margin;
    ed.y_hi += margin;
  }

  if (!ed.contains(opt.reference[0], opt.reference[1]))
    throw std::invalid_argument("build_eddy_domain: reference point is not inside the cell");

  EddyBuildResult out;
  out.domain.dim = 2;
  out.domain.geometry = ed;
  out.domain.gamma_names = {"crest", "trough"};

  GridDiscretization& g = out.grid;
  g.domain = out.domain;
  g.dim = 2;
  g.npts = {opt.resolution, opt.resolution, 1};
  const double ext_x = ed.x_right - ed.x_left;
  const double ext_y = ed.y_hi - ed.y_lo;
  const double hx = ext_x / (opt.resolution - 1 - 2 * opt.pad_cells);
  const double hy = ext_y / (opt.resolution - 1 - 2 * opt.pad_cells);
  g.spacing = {hx, hy, 0.0};
  g.origin = {ed.x_left - opt.pad_cells * hx, ed.y_lo - opt.pad_cells * hy, 0.0};

  const std::int64_t nn = g.total_nodes();
  g.node_class.assign(static_cast<std::size_t>(nn), GridDiscretization::NodeClass::Exterior);
  g.node_label.assign(static_cast<std::size_t>(nn), -1);
  g.row_of.assign(static_cast<std::size_t>(nn), -1);

  for (int j = 0; j < g.npts[1]; ++j) {
    for (int i = 0; i < g.npts[0]; ++i) {
      const std::int64_t node = g.node_index(i, j);
      const Vec p = g.node_coord(node);
      if (out.domain.contains(p.data())) {
        if (i == 0 || i == g.npts[0] - 1 || j == 0 || j == g.npts[1] - 1)
          throw NumericalError("build_eddy_domain: cell touches the grid edge; increase padding");
        g.node_class[static_cast<std::size_t>(node)] = GridDiscretization::NodeClass::Interior;
        g.row_of[static_cast<std::size_t>(node)] = static_cast<std::int64_t>(g.node_of_row.size());
        g.node_of_row.push_back(node);
      }
    }
  }

  // Exterior nodes touching an interior one along an axis become boundary
  // (Dirichlet-carrying) nodes.
  const int d[4][2] = {{-1, 0}, {1, 0}, {0, -1}, {0, 1}};
  for (int j = 0; j < g.npts[1]; ++j) {
    for (int i = 0; i < g.npts[0]; ++i) {
      const std::int64_t node = g.node_index(i, j);
      if (g.node_class[static_cast<std::size_t>(node)] != GridDiscretization::NodeClass::Exterior)
        continue;
      for (const auto& dd : d) {
        const int ii = i + dd[0], jj = j + dd[1];
        if (ii < 0 || ii >= g.npts[0] || jj < 0 || jj >= g.npts[1]) continue;
        if (g.node_class[static_cast<std::size_t>(g.node_index(ii, jj))] ==
            GridDiscretization::NodeClass::Interior) {
          g.node_class[static_cast<std::size_t>(node)] = GridDiscretization::NodeClass::Boundary;
          const Vec p = g.node_coord(node);
          g.node_label[static_cast<std::size_t>(node)] = out.domain.label_for_position(p.data());
          break;
        }
      }
    }
  }

  // Arms with snapped boundary distances.
  g.arms.assign(g.node_of_row.size() * 4, GridDiscretization::Arm{});
  for (std::int64_t r = 0; r < g.interior_count(); ++r) {
    const std::int64_t node = g.node_of_row[static_cast<std::size_t>(r)];
    const auto ijk = g.node_ijk(node);
    const Vec p = g.node_coord(node);
    for (int axis = 0; axis < 2; ++axis) {
      for (int side = 0; side < 2; ++side) {
        const double dir = side == 0 ? -1.0 : 1.0;
        std::array<int, 3> nb = ijk;
        nb[axis] += side == 0 ? -1 : 1;
        const std::int64_t nnode = g.node_index(nb[0], nb[1]);
        GridDiscretization::Arm& a = g.arm(r, axis, side);
        if (g.node_class[static_cast<std::size_t>(nnode)] == GridDiscretization::NodeClass::Interior) {
          a.neighbor_row = g.row_of[static_cast<std::size_t>(nnode)];
          a.dist = g.spacing[axis];
        } else {
          const double theta =
              std::max(0.01, detail::boundary_fraction(out.domain, p, axis, dir * g.spacing[axis]));
          a.neighbor_row = -1;
          a.dist = theta * g.spacing[axis];
          Vec q = p;
          q(axis) += dir * a.dist;
          a.label = out.domain.label_for_position(q.data());
        }
      }
    }
  }
  return out;
}

struct CuboidOptions {
  std::array<int, 3> resolution{64, 64, 64};  // nodes per axis
};

/// Axis-aligned box with face nodes as Dirichlet boundary nodes. Faces are
/// labeled xlo, xhi, ylo, yhi, zlo, zhi.
inline EddyBuildResult build_cuboid_domain(const std::array<std::array<double, 2>, 3>& bounds,
                                           const CuboidOptions& opt = {}) {
  EddyBuildResult out;
  CuboidDomain cd;
  cd.bounds = bounds;
  cd.dim = 3;
  for (int a = 0; a < 3; ++a) {
    if (!(bounds[a][0] < bounds[a][1]))
      throw std::invalid_argument("build_cuboid_domain: lower bound must be below upper bound");
    if (opt.resolution[a] < 4)
      throw std::invalid_argument("build_cuboid_domain: need at least 4 nodes per axis");
  }
  out.domain.dim = 3;
  out.domain.geometry = cd;
  out.domain.gamma_names = {"xlo", "xhi", "ylo", "yhi", "zlo", "zhi"};

  GridDiscretization& g = out.grid;
  g.domain = out.domain;
  g.dim = 3;
  g.npts = opt.resolution;
  for (int a = 0; a < 3; ++a) {
    g.origin[a] = bounds[a][0];
    g.spacing[a] = (bounds[a][1] - bounds[a][0]) / (opt.resolution[a] - 1);
  }
  const std::int64_t nn = g.total_nodes();
  g.node_class.assign(static_cast<std::size_t>(nn), GridDiscretization::NodeClass::Boundary);
  g.node_label.assign(static_cast<std::size_t>(nn), -1);
  g.row_of.assign(static_cast<std::size_t>(nn), -1);

  for (int k = 0; k < g.npts[2]; ++k) {
    for (int j = 0; j < g.npts[1]; ++j) {
      for (int i = 0; i < g.npts[0]; ++i) {
        const std::int64_t node = g.node_index(i, j, k);
        const std::array<int, 3> ijk{i, j, k};
        bool interior = true;
        int label = -1;
        for (int a = 0; a < 3 && label < 0; ++a) {
          if (ijk[a] == 0) label = 2 * a;
          else if (ijk[a] == g.npts[a] - 1) label = 2 * a + 1;
        }
        interior = label < 0;
        if (interior) {
          g.node_class[static_cast<std::size_t>(node)] = GridDiscretization::NodeClass::Interior;
          g.row_of[static_cast<std::size_t>(node)] = static_cast<std::int64_t>(g.node_of_row.size());
          g.node_of_row.push_back(node);
        } else {
          g.node_label[static_cast<std::size_t>(node)] = label;
        }
      }
    }
  }

  g.arms.assign(g.node_of_row.size() * 6, GridDiscretization::Arm{});
  for (std::int64_t r = 0; r < g.interior_count(); ++r) {
    const std::int64_t node = g.node_of_row[static_cast<std::size_t>(r)];
    const auto ijk = g.node_ijk(node);
    for (int axis = 0; axis < 3; ++axis) {
      for (int side = 0; side < 2; ++side) {
        std::array<int, 3> nb = ijk;
        nb[axis] += side == 0 ? -1 : 1;
        const std::int64_t nnode = g.node_index(nb[0], nb[1], nb[2]);
        GridDiscretization::Arm& a = g.arm(r, axis, side);
        a.dist = g.spacing[axis];
        if (g.node_class[static_cast<std::size_t>(nnode)] == GridDiscretization::NodeClass::Interior) {
          a.neighbor_row = g.row_of[static_cast<std::size_t>(nnode)];
        } else {
          a.neighbor_row = -1;
          // Only the stepped axis can be at a wall here.
          a.label = 2 * axis + side;
        }
      }
    }
  }
  return out;
}

/// Minimum over sampled interior points of the smallest eigenvalue of
/// a(x) = sigma sigma^T (diagonal here, so the smallest diagonal entry).
/// Visits every interior grid node plus `samples` random interior points.
inline EllipticityCertificate check_ellipticity(const SdeModel& model,
                                                const GridDiscretization& grid,
                                                std::size_t samples = 4096,
                                                double threshold = 1e-3,
                                                std::uint64_t seed = 0x5DEC0DEull) {
  if (samples < 1) throw std::invalid_argument("check_ellipticity: samples must be >= 1");
  EllipticityCertificate cert;
  cert.threshold = threshold;
  cert.min_eigenvalue = std::numeric_limits<double>::max();

  auto visit = [&](const Vec& p) {
    double amin = std::numeric_limits<double>::max();
    if (model.noise_dim == 0) {
      amin = 0.0;
    } else {
      for (int k = 0; k < model.state_dim; ++k) {
        const double s = k < model.noise_dim ? model.sigma_entry(k, p.data()) : 0.0;
        amin = std::min(amin, s * s);
      }
    }
    cert.min_eigenvalue = std::min(cert.min_eigenvalue, amin);
    ++cert.samples;
  };

  for (std::int64_t r = 0; r < grid.interior_count(); ++r)
    visit(grid.node_coord(grid.node_of_row[static_cast<std::size_t>(r)]));

  GaussianStream rng(derive_stream_seed(seed, 0xE11));
  std::size_t random_left = samples, attempts = 0;
  while (random_left > 0 && attempts < 1000 * samples) {
    ++attempts;
    Vec p(grid.dim);
    for (int a = 0; a < grid.dim; ++a)
      p(a) = grid.origin[a] + rng.uniform01() * grid.spacing[a] * (grid.npts[a] - 1);
    if (grid.domain.contains(p.data())) {
      visit(p);
      --random_left;
    }
  }
  cert.pass = cert.samples > 0 && cert.min_eigenvalue > threshold;
  return cert;
}

}  // namespace sdexit
