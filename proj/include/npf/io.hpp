#pragma once

// Result tables (CSV) and deformed-surface export (legacy VTK, ASCII).

#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "npf/energy.hpp"
#include "npf/errors.hpp"
#include "npf/fem.hpp"

namespace npf {

struct ResultRow {
  int k = 0;
  double r_bar = 0.0;
  double eps_bar = 0.0;
  std::optional<double> alpha;
  std::string anchoring;
  std::string buckling;  // empty when not applicable
  int iterations = 0;
  double energy = 0.0;
  double energy_of = 0.0;
  double err1 = 0.0;
  double erriso = 0.0;
  std::optional<double> eoc;

  bool operator==(const ResultRow&) const = default;
};

inline constexpr const char* csv_header = "k,r_bar,eps_bar,alpha,anchoring,buckling,iterations,E_h,E_OF,err1,erriso,eoc";

inline std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

inline std::string csv_line(const ResultRow& r) {
  std::ostringstream os;
  os << r.k << ',' << format_number(r.r_bar) << ',' << format_number(r.eps_bar) << ','
     << (r.alpha ? format_number(*r.alpha) : "") << ',' << r.anchoring << ',' << r.buckling << ',' << r.iterations << ','
     << format_number(r.energy) << ',' << format_number(r.energy_of) << ',' << format_number(r.err1) << ','
     << format_number(r.erriso) << ',' << (r.eoc ? format_number(*r.eoc) : "");
  return os.str();
}

inline void write_csv(const std::vector<ResultRow>& rows, std::ostream& os) {
  os << csv_header << '\n';
  for (const auto& r : rows) os << csv_line(r) << '\n';
}

inline void export_csv(const std::vector<ResultRow>& rows, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  write_csv(rows, f);
  if (!f) throw IoError("write to '" + path + "' failed");
}

namespace detail {

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

inline double parse_double(const std::string& s, const std::string& what) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw IoError("bad number '" + s + "' in column " + what);
  }
}

inline int parse_int(const std::string& s, const std::string& what) {
  try {
    std::size_t pos = 0;
    const int v = std::stoi(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw IoError("bad integer '" + s + "' in column " + what);
  }
}

}  // namespace detail

inline std::vector<ResultRow> read_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw IoError("empty CSV input");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != csv_header) throw IoError("unexpected CSV header: " + line);
  std::vector<ResultRow> rows;
  while (std::getline(is, line)) {
    if (line.empty() || line == "\r") continue;
    const auto c = detail::split(line, ',');
    if (c.size() != 12) throw IoError("CSV row with " + std::to_string(c.size()) + " cells: " + line);
    ResultRow r;
    r.k = detail::parse_int(c[0], "k");
    r.r_bar = detail::parse_double(c[1], "r_bar");
    r.eps_bar = detail::parse_double(c[2], "eps_bar");
    if (!c[3].empty()) r.alpha = detail::parse_double(c[3], "alpha");
    r.anchoring = c[4];
    r.buckling = c[5];
    r.iterations = detail::parse_int(c[6], "iterations");
    r.energy = detail::parse_double(c[7], "E_h");
    r.energy_of = detail::parse_double(c[8], "E_OF");
    r.err1 = detail::parse_double(c[9], "err1");
    r.erriso = detail::parse_double(c[10], "erriso");
    if (!c[11].empty()) r.eoc = detail::parse_double(c[11], "eoc");
    rows.push_back(std::move(r));
  }
  return rows;
}

inline std::vector<ResultRow> read_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open '" + path + "'");
  return read_csv(f);
}

/// Per-iteration trace: step norms always, energies where they were evaluated.
template <class Records>
void export_trace_csv(const Records& records, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f << "iteration,step_norm,step_norm_y,step_norm_n,E_h,E_OF,err1,erriso\n";
  for (const auto& r : records) {
    f << r.iteration << ',' << format_number(r.step_norm) << ',' << format_number(r.step_norm_y) << ','
      << format_number(r.step_norm_n);
    if (r.energy)
      f << ',' << format_number(r.energy->total) << ',' << format_number(r.energy->oseen_frank) << ','
        << format_number(r.errors.err1) << ',' << format_number(r.errors.erriso);
    else
      f << ",,,,";
    f << '\n';
  }
  if (!f) throw IoError("write to '" + path + "' failed");
}

/// Area-weighted vertex average of the elementwise Oseen-Frank density eps^2/2 |grad n|^2.
inline std::vector<double> oseen_frank_density(const P1VectorField& n, const FeSpace& space, double eps_bar) {
  std::vector<double> dens(space.num_vertices(), 0.0), weight(space.num_vertices(), 0.0);
  for (int t = 0; t < space.num_triangles(); ++t) {
    const auto& tri = space.mesh().triangles[t];
    const auto& k = space.kernel(t);
    Eigen::Matrix<double, 3, 2> g = Eigen::Matrix<double, 3, 2>::Zero();
    for (int a = 0; a < 3; ++a) g += n.at(tri[a]) * k.grad_lambda[a].transpose();
    const double d = 0.5 * eps_bar * eps_bar * g.squaredNorm();
    for (int a = 0; a < 3; ++a) {
      dens[tri[a]] += k.area * d;
      weight[tri[a]] += k.area;
    }
  }
  for (std::size_t v = 0; v < dens.size(); ++v) dens[v] /= weight[v];
  return dens;
}

/// Legacy VTK unstructured grid: points y(z), triangle cells, director / OF density / erriso point data.
inline void export_vtk(const DKTVectorField& y, const P1VectorField& n, const FeSpace& space, double eps_bar,
                       const std::string& path) {
  const auto& mesh = space.mesh();
  if (y.num_vertices() != mesh.num_vertices() || n.num_vertices() != mesh.num_vertices())
    throw ShapeMismatch("export_vtk: field sizes do not match the mesh");
  std::ofstream f(path);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f.precision(10);
  const int nv = mesh.num_vertices(), nt = mesh.num_triangles();
  f << "# vtk DataFile Version 3.0\nnpf deformed plate\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  f << "POINTS " << nv << " double\n";
  for (int v = 0; v < nv; ++v) {
    const Eigen::Vector3d p = y.value(v);
    f << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
  }
  f << "CELLS " << nt << ' ' << 4 * nt << '\n';
  for (const auto& tri : mesh.triangles) f << "3 " << tri[0] << ' ' << tri[1] << ' ' << tri[2] << '\n';
  f << "CELL_TYPES " << nt << '\n';
  for (int t = 0; t < nt; ++t) f << "5\n";
  f << "POINT_DATA " << nv << "\nVECTORS director double\n";
  for (int v = 0; v < nv; ++v) {
    const Eigen::Vector3d d = n.at(v);
    f << d.x() << ' ' << d.y() << ' ' << d.z() << '\n';
  }
  f << "SCALARS oseen_frank_density double 1\nLOOKUP_TABLE default\n";
  for (double d : oseen_frank_density(n, space, eps_bar)) f << d << '\n';
  f << "SCALARS erriso double 1\nLOOKUP_TABLE default\n";
  for (int v = 0; v < nv; ++v) {
    const Matrix32 g = y.gradient(v);
    f << (g.transpose() * g - Eigen::Matrix2d::Identity()).norm() << '\n';
  }
  if (!f) throw IoError("write to '" + path + "' failed");
}

}  // namespace npf
