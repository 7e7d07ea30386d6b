#pragma once

// Configuration-driven runs of the clamped plate, compressed strip and circular
// anchoring examples, plus EOC post-processing.
//
// Config files are line oriented "key = value" text; '#' starts a comment.
// See README.md for the list of keys.

#include <Eigen/Dense>

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "npf/energy.hpp"
#include "npf/errors.hpp"
#include "npf/fem.hpp"
#include "npf/flow.hpp"
#include "npf/io.hpp"
#include "npf/mesh.hpp"
#include "npf/model_algebra.hpp"

namespace npf {

enum class ExampleKind { clamped_plate, compressed_strip, circular };
enum class Anchoring { none, x, y, circular };
enum class InitKind { flat, arc, circular };

/// Step size rule relative to the mesh size h = 2^-k: "h/10", "4h", "h", or a plain number.
struct TauRule {
  double factor = 0.1;
  bool relative = true;
  std::string text = "h/10";

  static TauRule parse(const std::string& s) {
    static const std::regex div(R"(\s*h\s*/\s*([0-9.eE+-]+)\s*)");
    static const std::regex mul(R"(\s*([0-9.eE+-]+)\s*\*?\s*h\s*)");
    static const std::regex plain(R"(\s*h\s*)");
    std::smatch m;
    TauRule r;
    r.text = s;
    try {
      if (std::regex_match(s, m, div)) {
        r.factor = 1.0 / std::stod(m[1].str());
      } else if (std::regex_match(s, m, mul)) {
        r.factor = std::stod(m[1].str());
      } else if (std::regex_match(s, plain)) {
        r.factor = 1.0;
      } else {
        std::size_t pos = 0;
        r.factor = std::stod(s, &pos);
        if (pos != s.size()) throw BadConfig("");
        r.relative = false;
      }
    } catch (const std::exception&) {
      throw BadConfig("tau: cannot parse rule '" + s + "'");
    }
    if (!(r.factor > 0.0) || !std::isfinite(r.factor)) throw BadConfig("tau: rule '" + s + "' is not positive");
    return r;
  }

  double resolve(int k) const { return relative ? factor * std::ldexp(1.0, -k) : factor; }
};

struct ExperimentConfig {
  std::string name = "run";
  ExampleKind example = ExampleKind::clamped_plate;
  std::vector<int> levels{3};
  MaterialParams material{1.0, 1000.0, 1.0, 1.0};
  Anchoring anchoring = Anchoring::x;
  bool tangential = false;
  std::optional<double> alpha;
  std::string buckling;  // "up" | "down" for the compressed strip
  int cutout = 1;        // K1..K4 for the circular example
  InitKind init = InitKind::flat;
  bool local_frame_anchoring = true;  // circular anchoring prescribes R_y^T n rather than n
  TauRule tau = TauRule::parse("h/10");
  FlowConfig flow{};
  std::uint64_t seed = 0;  // reserved
  std::map<std::string, std::string> raw;  // canonical key/value pairs as read

  /// Canonical text used for hashing output names.
  std::string canonical() const {
    std::ostringstream os;
    for (const auto& [k, v] : raw) os << k << '=' << v << '\n';
    return os.str();
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline double config_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw BadConfig("key '" + key + "': expected a number, got '" + v + "'");
  }
}

inline int config_int(const std::string& key, const std::string& v) {
  const double d = config_double(key, v);
  if (d != std::floor(d)) throw BadConfig("key '" + key + "': expected an integer, got '" + v + "'");
  return static_cast<int>(d);
}

inline bool config_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw BadConfig("key '" + key + "': expected true/false, got '" + v + "'");
}

template <class E>
E config_enum(const std::string& key, const std::string& v, std::initializer_list<std::pair<const char*, E>> choices) {
  for (const auto& [name, value] : choices)
    if (v == name) return value;
  std::string list;
  for (const auto& c : choices) list += std::string(list.empty() ? "" : "|") + c.first;
  throw BadConfig("key '" + key + "': expected " + list + ", got '" + v + "'");
}

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace detail

/// Applies one key = value pair; unknown keys and bad values throw BadConfig naming the key.
inline void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  using namespace detail;
  cfg.raw[key] = value;
  if (key == "name") {
    cfg.name = value;
  } else if (key == "example") {
    cfg.example = config_enum<ExampleKind>(key, value,
                                           {{"clamped_plate", ExampleKind::clamped_plate},
                                            {"compressed_strip", ExampleKind::compressed_strip},
                                            {"circular", ExampleKind::circular}});
  } else if (key == "levels" || key == "k") {
    cfg.levels.clear();
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
      const int k = config_int(key, trim(item));
      if (k < 0 || k > 12) throw BadConfig("key '" + key + "': level out of range");
      cfg.levels.push_back(k);
    }
    if (cfg.levels.empty()) throw BadConfig("key '" + key + "': empty list");
  } else if (key == "mu") {
    cfg.material.mu = config_double(key, value);
  } else if (key == "lambda") {
    cfg.material.lambda = config_double(key, value);
  } else if (key == "r_bar") {
    cfg.material.r_bar = config_double(key, value);
  } else if (key == "eps_bar") {
    cfg.material.eps_bar = config_double(key, value);
  } else if (key == "anchoring") {
    cfg.anchoring = config_enum<Anchoring>(
        key, value, {{"none", Anchoring::none}, {"x", Anchoring::x}, {"y", Anchoring::y}, {"circular", Anchoring::circular}});
  } else if (key == "tangential") {
    cfg.tangential = config_bool(key, value);
  } else if (key == "local_frame") {
    cfg.local_frame_anchoring = config_bool(key, value);
  } else if (key == "alpha") {
    cfg.alpha = config_double(key, value);
  } else if (key == "buckling") {
    if (value != "up" && value != "down") throw BadConfig("key 'buckling': expected up|down, got '" + value + "'");
    cfg.buckling = value;
  } else if (key == "cutout") {
    cfg.cutout = config_int(key, value);
    if (cfg.cutout < 1 || cfg.cutout > 4) throw BadConfig("key 'cutout': expected 1..4");
  } else if (key == "init") {
    cfg.init = config_enum<InitKind>(key, value,
                                     {{"flat", InitKind::flat}, {"arc", InitKind::arc}, {"circular", InitKind::circular}});
  } else if (key == "tau") {
    try {
      cfg.tau = TauRule::parse(value);
    } catch (const BadConfig& e) {
      throw BadConfig("key 'tau': " + std::string(e.what()));
    }
  } else if (key == "eps_stop") {
    cfg.flow.eps_stop = config_double(key, value);
  } else if (key == "max_iter") {
    cfg.flow.max_iter = config_int(key, value);
  } else if (key == "trace_every") {
    cfg.flow.trace_every = config_int(key, value);
  } else if (key == "deformation_metric") {
    cfg.flow.deformation_metric = config_enum<DeformationMetric>(key, value,
                                                                 {{"h2", DeformationMetric::h2},
                                                                  {"h2_grad", DeformationMetric::h2_grad},
                                                                  {"h2_grad_value", DeformationMetric::h2_grad_value}});
  } else if (key == "director_metric") {
    cfg.flow.director_metric = config_enum<DirectorMetric>(
        key, value, {{"h1", DirectorMetric::h1}, {"h1_semi", DirectorMetric::h1_semi}, {"l2", DirectorMetric::l2}});
  } else if (key == "coupling") {
    cfg.flow.energy.coupling = config_enum<LaplacianCoupling>(
        key, value,
        {{"laplacian_dot_normal", LaplacianCoupling::laplacian_dot_normal},
         {"trace_second_form", LaplacianCoupling::trace_second_form}});
  } else if (key == "seed") {
    cfg.seed = static_cast<std::uint64_t>(config_int(key, value));
  } else {
    throw BadConfig("unknown key '" + key + "'");
  }
}

/// Checks cross-key consistency after all settings are applied.
inline void validate(const ExperimentConfig& cfg) {
  try {
    cfg.material.validate();
  } catch (const Error& e) {
    throw BadConfig(std::string("material: ") + e.what());
  }
  if (cfg.example == ExampleKind::compressed_strip) {
    if (!cfg.alpha || !(*cfg.alpha > 0.0 && *cfg.alpha < 1.0)) throw BadConfig("key 'alpha': compressed strip needs 0 < alpha < 1");
    if (cfg.buckling.empty()) throw BadConfig("key 'buckling': compressed strip needs up|down");
  }
  if (cfg.init == InitKind::arc && cfg.example != ExampleKind::compressed_strip)
    throw BadConfig("key 'init': arc initial state requires the compressed strip");
  if (cfg.anchoring == Anchoring::circular && cfg.example != ExampleKind::circular)
    throw BadConfig("key 'anchoring': circular anchoring requires the circular example");
  if (cfg.example == ExampleKind::circular && cfg.anchoring != Anchoring::circular && cfg.anchoring != Anchoring::none)
    throw BadConfig("key 'anchoring': circular example supports circular|none");
  FlowConfig f = cfg.flow;
  f.tau = cfg.tau.resolve(cfg.levels.front());
  try {
    f.validate();
  } catch (const BadConfig& e) {
    throw BadConfig(std::string("flow: ") + e.what());
  }
}

inline ExperimentConfig parse_config(std::istream& is) {
  ExperimentConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw BadConfig("line " + std::to_string(lineno) + ": expected key = value");
    apply_setting(cfg, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
  validate(cfg);
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config '" + path + "'");
  return parse_config(f);
}

inline std::string anchoring_label(Anchoring a) {
  switch (a) {
    case Anchoring::none: return "none";
    case Anchoring::x: return "x";
    case Anchoring::y: return "y";
    case Anchoring::circular: return "circular";
  }
  return {};
}

inline DomainSpec domain(const ExperimentConfig& cfg, int k) {
  DomainSpec d;
  d.level = k;
  switch (cfg.example) {
    case ExampleKind::clamped_plate:
      d.box = {-1.0, 1.0, -1.0, 1.0};
      d.gamma_y = {d.side(Side::left)};
      d.gamma_n = {d.side(Side::left)};
      break;
    case ExampleKind::compressed_strip:
      d.box = {-5.0, 5.0, -1.0, 1.0};
      d.gamma_y = {d.side(Side::left), d.side(Side::right)};
      d.gamma_n = d.gamma_y;
      break;
    case ExampleKind::circular:
      d.box = {0.0, 5.0, 0.0, 5.0};
      switch (cfg.cutout) {
        case 2: d.cutouts = {{1.0, 4.0, 1.0, 4.0}}; break;
        case 3: d.cutouts = {{2.0, 3.0, 2.0, 3.0}}; break;
        case 4: d.cutouts = {{2.0, 3.0, 1.0, 4.0}}; break;
        default: break;
      }
      d.gamma_n = {d.side(Side::left), d.side(Side::right), d.side(Side::bottom), d.side(Side::top)};
      d.pinned = Eigen::Vector2d(0.0, 0.0);
      break;
  }
  if (cfg.anchoring == Anchoring::none) d.gamma_n.clear();
  return d;
}

/// Central angle theta of each arc with sin(theta)/theta = alpha.
inline double arc_angle(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw BadConfig("arc: alpha must lie in (0, 1)");
  double lo = 1e-12, hi = std::numbers::pi;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (std::sin(mid) / mid > alpha ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

/// Four glued circular arcs of length 2.5, tangent angle 0 -> theta -> 0 -> -theta -> 0,
/// parametrised by arc length s in [0, 10]. Returns (x, z) and the tangent angle.
struct ArcPoint {
  double x, z, angle;
};

inline ArcPoint arc_curve(double s, double theta) {
  constexpr double len = 2.5;
  const double kappa = theta / len;
  const std::array<double, 4> sign{1.0, -1.0, -1.0, 1.0};
  double x = 0.0, z = 0.0, phi = 0.0;
  s = std::clamp(s, 0.0, 4.0 * len);
  for (int i = 0; i < 4; ++i) {
    const double sigma = std::min(len, s - i * len);
    const double kap = sign[i] * kappa;
    const double phi1 = phi + kap * sigma;
    x += (std::sin(phi1) - std::sin(phi)) / kap;
    z -= (std::cos(phi1) - std::cos(phi)) / kap;
    phi = phi1;
    if (s <= (i + 1) * len) break;
  }
  return {x, z, phi};
}

/// Circular director data around the centre of (0,5)^2, blended to e3 inside radius r_blend.
inline Eigen::Vector3d circular_director(const Eigen::Vector2d& x, double r_blend) {
  const Eigen::Vector2d d = x - Eigen::Vector2d(2.5, 2.5);
  const double r = d.norm();
  const Eigen::Vector3d e3 = Eigen::Vector3d::UnitZ();
  if (r == 0.0) return e3;
  const Eigen::Vector3d tangential(-d.y() / r, d.x() / r, 0.0);
  if (r >= r_blend) return tangential;
  const double q = r / r_blend;
  const double w = q * q * (3.0 - 2.0 * q);
  return (w * tangential + (1.0 - w) * e3).normalized();
}

struct InitialState {
  DKTVectorField y;
  P1VectorField n;
};

inline InitialState init_state(const ExperimentConfig& cfg, const Triangulation& t) {
  InitialState s;
  const Matrix32 flat_grad = (Matrix32() << 1, 0, 0, 1, 0, 0).finished();
  switch (cfg.init) {
    case InitKind::flat:
      if (cfg.example == ExampleKind::compressed_strip)
        throw BadConfig("key 'init': the compressed strip needs the arc initial state");
      s.y = dkt_interpolate([&](const Eigen::Vector2d& x) { return ValueAndGradient{{x.x(), x.y(), 0.0}, flat_grad}; }, t);
      break;
    case InitKind::arc: {
      const double theta = arc_angle(*cfg.alpha);
      const double sign = cfg.buckling == "down" ? -1.0 : 1.0;
      const double x0 = -5.0 * std::sin(theta) / theta;
      s.y = dkt_interpolate(
          [&](const Eigen::Vector2d& x) {
            const ArcPoint c = arc_curve(x.x() + 5.0, theta);
            Matrix32 g;
            g << std::cos(c.angle), 0.0, 0.0, 1.0, sign * std::sin(c.angle), 0.0;
            return ValueAndGradient{{x0 + c.x, x.y(), sign * c.z}, g};
          },
          t);
      break;
    }
    case InitKind::circular:
      throw BadConfig("key 'init': circular applies to the director only; use init = flat");
  }

  switch (cfg.anchoring) {
    case Anchoring::x:
      if (cfg.tangential) {
        // e1 is not tangent to a curved arc; start from the unit tangent d1 y, which equals e1 on the clamped ends.
        s.n = P1VectorField(t.num_vertices());
        for (int v = 0; v < t.num_vertices(); ++v) s.n.set(v, s.y.gradient(v).col(0).normalized());
      } else {
        s.n = p1_interpolate([](const Eigen::Vector2d&) { return Eigen::Vector3d::UnitX(); }, t);
      }
      break;
    case Anchoring::y:
      s.n = p1_interpolate([](const Eigen::Vector2d&) { return Eigen::Vector3d::UnitY(); }, t);
      break;
    case Anchoring::circular: {
      const double rb = t.h_hat;
      s.n = p1_interpolate([&](const Eigen::Vector2d& x) { return circular_director(x, rb); }, t);
      break;
    }
    case Anchoring::none:
      s.n = p1_interpolate([](const Eigen::Vector2d&) { return Eigen::Vector3d::UnitZ(); }, t);
      break;
  }
  return s;
}

/// log2(|e_coarse - e_mid| / |e_mid - e_fine|).
inline double compute_eoc(double e_coarse, double e_mid, double e_fine) {
  const double den = std::abs(e_mid - e_fine);
  if (den == 0.0) throw DegenerateSequence("compute_eoc: consecutive energies coincide");
  return std::log2(std::abs(e_coarse - e_mid) / den);
}

/// Fills eoc for every row that is the finest of three consecutive levels within its group.
inline void fill_eoc(std::vector<ResultRow>& rows) {
  auto key = [](const ResultRow& r) {
    return std::make_tuple(r.r_bar, r.eps_bar, r.alpha.value_or(-1.0), r.anchoring, r.buckling);
  };
  std::map<decltype(key(rows.front())), std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < rows.size(); ++i) groups[key(rows[i])].push_back(i);
  for (auto& [_, idx] : groups) {
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return rows[a].k < rows[b].k; });
    for (std::size_t j = 2; j < idx.size(); ++j) {
      auto& a = rows[idx[j - 2]];
      auto& b = rows[idx[j - 1]];
      auto& c = rows[idx[j]];
      if (b.k != a.k + 1 || c.k != b.k + 1) continue;
      try {
        c.eoc = compute_eoc(a.energy, b.energy, c.energy);
      } catch (const DegenerateSequence&) {
        c.eoc.reset();
      }
    }
  }
}

struct RunOptions {
  std::string out_dir;  // empty: no files
  std::optional<int> max_iter;
  std::optional<int> trace_every;
  std::function<void(const std::string&)> log;  // progress lines; may be empty
};

struct ExperimentResult {
  ResultRow row;
  FlowTrace trace;
  double seconds = 0.0;
  std::string stem;  // output file stem
};

/// Runs the flow for one refinement level and writes CSV / trace / VTK when out_dir is set.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, int k, const RunOptions& opt = {}) {
  validate(cfg);
  const auto t0 = std::chrono::steady_clock::now();
  FeSpace space(generate(domain(cfg, k)));
  InitialState init = init_state(cfg, space.mesh());

  FlowConfig fc = cfg.flow;
  fc.tau = cfg.tau.resolve(k);
  if (opt.max_iter) fc.max_iter = *opt.max_iter;
  if (opt.trace_every) fc.trace_every = *opt.trace_every;
  const bool tangential = cfg.tangential;
  BoundaryConditions bc = BoundaryConditions::from_tags(space.mesh(), tangential);
  if (cfg.anchoring == Anchoring::circular && cfg.local_frame_anchoring) {
    bc.director_local_target.resize(space.num_vertices());
    for (int v = 0; v < space.num_vertices(); ++v) bc.director_local_target[v] = init.n.at(v);
  }
  GradientFlow flow(space, cfg.material, fc, std::move(bc));

  const int report = std::max(1, fc.max_iter / 20);
  ExperimentResult res;
  res.trace = flow.run(std::move(init.y), std::move(init.n), [&](const FlowRecord& r) {
    if (opt.log && (r.iteration % report == 0))
      opt.log(cfg.name + " k=" + std::to_string(k) + " iter " + std::to_string(r.iteration) +
              " step " + format_number(r.step_norm));
  });

  const EnergyBreakdown e = energy(res.trace.y, res.trace.n, cfg.material, space, fc.energy);
  const ConstraintErrors err = err_metrics(res.trace.y, res.trace.n);
  ResultRow& row = res.row;
  row.k = k;
  row.r_bar = cfg.material.r_bar;
  row.eps_bar = cfg.material.eps_bar;
  row.alpha = cfg.alpha;
  row.anchoring = anchoring_label(cfg.anchoring);
  row.buckling = cfg.buckling;
  row.iterations = res.trace.iterations();
  row.energy = e.total;
  row.energy_of = e.oseen_frank;
  row.err1 = err.err1;
  row.erriso = err.erriso;
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(detail::fnv1a(cfg.canonical())));
  res.stem = cfg.name + "-" + std::string(hash, 8) + "-k" + std::to_string(k);
  if (!opt.out_dir.empty()) {
    std::filesystem::create_directories(opt.out_dir);
    const std::filesystem::path base = std::filesystem::path(opt.out_dir) / res.stem;
    export_csv({row}, base.string() + ".csv");
    export_trace_csv(res.trace.records, base.string() + "-trace.csv");
    export_vtk(res.trace.y, res.trace.n, space, cfg.material.eps_bar, base.string() + ".vtk");
  }
  if (opt.log && res.trace.max_iter_exceeded)
    opt.log(cfg.name + " k=" + std::to_string(k) + ": max_iter reached before the stopping criterion");
  return res;
}

}  // namespace npf
