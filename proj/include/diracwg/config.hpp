#pragma once
// Run configuration: structured text file with [section] headers and
// key = value lines.  Repeated keys build lists (obstacles, index terms).

#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include "diracwg/common.hpp"

namespace diracwg {

struct Obstacle {
  double cx = 0, cy = 0, r = 0;
};

struct CellGeometry {
  double height = 1.0;                 ///< strip height H; period in x is 1
  std::vector<Obstacle> obstacles;     ///< circular holes, Neumann boundary
};

/// One additive term of a refractive-index field.
struct IndexTerm {
  enum Kind { Constant, Cosine, Box } kind = Constant;
  double value = 0;                       // Constant / Box value
  double amplitude = 0;                   // Cosine
  int kx = 0;                             // Cosine: integer x-harmonic (period 1)
  double win0 = 1, win1 = 0;              // Cosine transverse window w0 + w1*cos(ky*pi*y/H)
  int ky = 1;
  double x0 = 0, x1 = 0, y0 = 0, y1 = 0;  // Box extents
};

/// Sum-of-terms scalar field on the cell; height is needed by transverse windows.
struct IndexField {
  std::vector<IndexTerm> terms;
  double height = 1.0;

  double eval(double x, double y) const {
    double v = 0;
    for (const auto& t : terms) {
      switch (t.kind) {
        case IndexTerm::Constant: v += t.value; break;
        case IndexTerm::Cosine:
          v += t.amplitude * std::cos(2.0 * PI * t.kx * x) *
               (t.win0 + t.win1 * std::cos(t.ky * PI * y / height));
          break;
        case IndexTerm::Box:
          if (x >= t.x0 && x <= t.x1 && y >= t.y0 && y <= t.y1) v += t.value;
          break;
      }
    }
    return v;
  }

  /// Largest mirror-symmetry defect |f(x,y) - f(1-x,y)| over a sample grid.
  double mirror_defect() const {
    double d = 0;
    for (int i = 0; i <= 40; ++i)
      for (int j = 0; j <= 40; ++j) {
        const double x = i / 40.0, y = height * j / 40.0;
        d = std::max(d, std::abs(eval(x, y) - eval(1.0 - x, y)));
      }
    return d;
  }
  double min_value() const {
    double m = eval(0, 0);
    for (int i = 0; i <= 80; ++i)
      for (int j = 0; j <= 80; ++j)
        m = std::min(m, eval(i / 80.0, height * j / 80.0));
    return m;
  }
};

struct Config {
  CellGeometry geometry;
  IndexField base;        ///< unperturbed index n
  IndexField direction;   ///< perturbation direction field dn (n_eps = n + eps*dn)

  // discretization
  double target_h = 0.05;
  int p_grid = 129;
  int n_bands = 12;

  // degenerate-point handling
  int level_pair_lo = -1, level_pair_hi = -1;  ///< ascending p=0 indices to collapse (-1: auto)
  int tune_term = 0;                           ///< 1-based index of tunable base term (0: none)
  double tune_lo = 0, tune_hi = 0;
  double degeneracy_rtol = 1e-6;

  // perturbation / contours / search / supercell
  double eps = 1e-2;
  int nodes_per_pi = 64;
  double pv_tau = 1e-2;
  double arc_radius_factor = 1.0;
  double c0 = 0.5;
  int moment_nodes = 64;
  double sigma_rtol = 1e-8;
  int cells_per_side = 16;
  std::string supercell_bc = "neumann";

  std::string raw_text;  ///< file bytes, hashed into manifests
  std::string path;
};

namespace detail {

inline std::map<std::string, double> parse_kv_params(std::istringstream& ss, int line_no) {
  std::map<std::string, double> kv;
  std::string tok;
  while (ss >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(line_no) + ": expected key=value, got '" + tok + "'");
    char* end = nullptr;
    const std::string val = tok.substr(eq + 1);
    const double v = std::strtod(val.c_str(), &end);
    if (end == val.c_str() || *end != '\0')
      throw ConfigError("line " + std::to_string(line_no) + ": bad number '" + val + "'");
    kv[tok.substr(0, eq)] = v;
  }
  return kv;
}

inline IndexTerm parse_index_term(const std::string& spec, int line_no) {
  std::istringstream ss(spec);
  std::string kind;
  ss >> kind;
  IndexTerm t;
  if (kind == "constant") {
    t.kind = IndexTerm::Constant;
    if (!(ss >> t.value))
      throw ConfigError("line " + std::to_string(line_no) + ": constant needs a value");
  } else if (kind == "cosine") {
    t.kind = IndexTerm::Cosine;
    auto kv = parse_kv_params(ss, line_no);
    auto need = [&](const char* k) {
      auto it = kv.find(k);
      if (it == kv.end())
        throw ConfigError("line " + std::to_string(line_no) + ": cosine needs " + std::string(k));
      return it->second;
    };
    t.amplitude = need("amplitude");
    t.kx = int(need("kx"));
    if (kv.count("win0")) t.win0 = kv["win0"];
    if (kv.count("win1")) t.win1 = kv["win1"]; else t.win1 = 0;
    if (kv.count("ky")) t.ky = int(kv["ky"]);
    if (t.kx != std::round(need("kx")))
      throw ConfigError("line " + std::to_string(line_no) + ": kx must be an integer");
  } else if (kind == "box") {
    t.kind = IndexTerm::Box;
    auto kv = parse_kv_params(ss, line_no);
    for (const char* k : {"x0", "x1", "y0", "y1", "value"})
      if (!kv.count(k))
        throw ConfigError("line " + std::to_string(line_no) + ": box needs " + std::string(k));
    t.x0 = kv["x0"]; t.x1 = kv["x1"]; t.y0 = kv["y0"]; t.y1 = kv["y1"]; t.value = kv["value"];
  } else {
    throw ConfigError("line " + std::to_string(line_no) + ": unknown index term '" + kind + "'");
  }
  return t;
}

}  // namespace detail

/// Parse a configuration from text.  Throws ConfigError with a line reference.
inline Config parse_config(const std::string& text, const std::string& path = "<memory>") {
  Config c;
  c.raw_text = text;
  c.path = path;
  std::istringstream in(text);
  std::string line, section;
  int line_no = 0;
  bool have_height = false;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    auto last = line.find_last_not_of(" \t\r");
    line = line.substr(first, last - first + 1);
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("line " + std::to_string(line_no) + ": unterminated section header");
      section = line.substr(1, line.size() - 2);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    std::string key = line.substr(0, eq);
    std::string val = line.substr(eq + 1);
    auto trim = [](std::string& s) {
      const auto a = s.find_first_not_of(" \t");
      const auto b = s.find_last_not_of(" \t");
      s = (a == std::string::npos) ? "" : s.substr(a, b - a + 1);
    };
    trim(key); trim(val);
    if (val.empty())
      throw ConfigError("line " + std::to_string(line_no) + ": empty value for '" + key + "'");

    auto as_num = [&](const std::string& s) {
      char* end = nullptr;
      const double v = std::strtod(s.c_str(), &end);
      if (end == s.c_str() || *end != '\0')
        throw ConfigError("line " + std::to_string(line_no) + ": bad number '" + s + "'");
      return v;
    };

    if (section == "geometry") {
      if (key == "height") { c.geometry.height = as_num(val); have_height = true; }
      else if (key == "obstacle") {
        std::istringstream os(val);
        Obstacle ob;
        if (!(os >> ob.cx >> ob.cy >> ob.r))
          throw ConfigError("line " + std::to_string(line_no) + ": obstacle needs 'cx cy r'");
        c.geometry.obstacles.push_back(ob);
      } else throw ConfigError("line " + std::to_string(line_no) + ": unknown geometry key '" + key + "'");
    } else if (section == "index") {
      if (key == "base") c.base.terms.push_back(detail::parse_index_term(val, line_no));
      else if (key == "direction") c.direction.terms.push_back(detail::parse_index_term(val, line_no));
      else throw ConfigError("line " + std::to_string(line_no) + ": unknown index key '" + key + "'");
    } else if (section == "discretization") {
      if (key == "target_h") c.target_h = as_num(val);
      else if (key == "p_grid") c.p_grid = int(as_num(val));
      else if (key == "n_bands") c.n_bands = int(as_num(val));
      else throw ConfigError("line " + std::to_string(line_no) + ": unknown discretization key '" + key + "'");
    } else if (section == "dirac") {
      if (key == "level_pair") {
        std::istringstream ps(val);
        if (!(ps >> c.level_pair_lo >> c.level_pair_hi))
          throw ConfigError("line " + std::to_string(line_no) + ": level_pair needs two indices");
      } else if (key == "tune_term") c.tune_term = int(as_num(val));
      else if (key == "tune_bracket") {
        std::istringstream bs(val);
        if (!(bs >> c.tune_lo >> c.tune_hi))
          throw ConfigError("line " + std::to_string(line_no) + ": tune_bracket needs two numbers");
      } else if (key == "degeneracy_rtol") c.degeneracy_rtol = as_num(val);
      else throw ConfigError("line " + std::to_string(line_no) + ": unknown dirac key '" + key + "'");
    } else if (section == "perturbation") {
      if (key == "eps") c.eps = as_num(val);
      else throw ConfigError("line " + std::to_string(line_no) + ": unknown perturbation key '" + key + "'");
    } else if (section == "contours") {
      if (key == "nodes_per_pi") c.nodes_per_pi = int(as_num(val));
      else if (key == "pv_tau") c.pv_tau = as_num(val);
      else if (key == "arc_radius_factor") c.arc_radius_factor = as_num(val);
      else throw ConfigError("line " + std::to_string(line_no) + ": unknown contours key '" + key + "'");
    } else if (section == "search") {
      if (key == "c0") c.c0 = as_num(val);
      else if (key == "moment_nodes") c.moment_nodes = int(as_num(val));
      else if (key == "sigma_rtol") c.sigma_rtol = as_num(val);
      else throw ConfigError("line " + std::to_string(line_no) + ": unknown search key '" + key + "'");
    } else if (section == "supercell") {
      if (key == "cells_per_side") c.cells_per_side = int(as_num(val));
      else if (key == "bc") {
        if (val != "neumann" && val != "dirichlet")
          throw ConfigError("line " + std::to_string(line_no) + ": bc must be neumann or dirichlet");
        c.supercell_bc = val;
      } else throw ConfigError("line " + std::to_string(line_no) + ": unknown supercell key '" + key + "'");
    } else {
      throw ConfigError("line " + std::to_string(line_no) + ": key outside any known section");
    }
  }
  if (!have_height) throw ConfigError("config must set [geometry] height");
  if (c.geometry.height <= 0) throw ConfigError("height must be positive");
  if (c.base.terms.empty()) throw ConfigError("config must define at least one [index] base term");
  if (c.target_h <= 0 || c.target_h > 0.5) throw ConfigError("target_h must lie in (0, 0.5]");
  if (c.p_grid < 9) throw ConfigError("p_grid too small");
  if (c.c0 <= 0 || c.c0 >= 1) throw ConfigError("c0 must lie in (0,1)");
  c.base.height = c.direction.height = c.geometry.height;
  if (c.tune_term < 0 || c.tune_term > int(c.base.terms.size()))
    throw ConfigError("tune_term out of range");
  if (c.tune_term > 0 && !(c.tune_lo < c.tune_hi))
    throw ConfigError("tune_bracket must satisfy lo < hi");
  // geometric legality of obstacles
  for (const auto& ob : c.geometry.obstacles) {
    if (ob.r <= 0) throw ConfigError("obstacle radius must be positive");
    if (!(ob.cx - ob.r > 0 && ob.cx + ob.r < 1))
      throw ConfigError("obstacle touches a periodic face");
    if (!(ob.cy - ob.r > 0 && ob.cy + ob.r < c.geometry.height))
      throw ConfigError("obstacle touches the strip boundary");
  }
  for (size_t i = 0; i < c.geometry.obstacles.size(); ++i)
    for (size_t j = i + 1; j < c.geometry.obstacles.size(); ++j) {
      const auto &a = c.geometry.obstacles[i], &b = c.geometry.obstacles[j];
      if (std::hypot(a.cx - b.cx, a.cy - b.cy) <= a.r + b.r)
        throw ConfigError("obstacles overlap");
    }
  // mirror symmetry about x = 1/2: each obstacle centred on the line or paired
  for (const auto& ob : c.geometry.obstacles) {
    if (std::abs(ob.cx - 0.5) < 1e-12) continue;
    bool paired = false;
    for (const auto& pb : c.geometry.obstacles)
      if (std::abs(pb.cx - (1.0 - ob.cx)) < 1e-12 && std::abs(pb.cy - ob.cy) < 1e-12 &&
          std::abs(pb.r - ob.r) < 1e-12)
        paired = true;
    if (!paired) throw ConfigError("obstacle set is not mirror-symmetric about x = 1/2");
  }
  if (c.base.mirror_defect() > 1e-10)
    throw ConfigError("base index field is not mirror-symmetric about x = 1/2");
  if (c.direction.mirror_defect() > 1e-10)
    throw ConfigError("direction index field is not mirror-symmetric about x = 1/2");
  if (c.base.min_value() <= 0) throw ConfigError("base index field must be positive");
  return c;
}

inline Config load_config(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open config file: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str(), path);
}

}  // namespace diracwg
