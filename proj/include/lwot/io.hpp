#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lwot/error.hpp"
#include "lwot/measures.hpp"
#include "lwot/skeleton.hpp"

namespace lwot::io {

using Json = nlohmann::ordered_json;

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write '" + path + "'");
  out << text;
  if (!out) throw Error(ErrorCode::IoError, "write to '" + path + "' failed");
}

inline std::string format_double(double v) {
  if (!std::isfinite(v)) return "null";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// CSV atoms: header x1,...,xd,y,w

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  for (auto& s : out) {
    const auto b = s.find_first_not_of(" \t");
    const auto e = s.find_last_not_of(" \t");
    s = b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  }
  return out;
}

inline double parse_number(const std::string& s, const std::string& where) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size() || !std::isfinite(v))
    throw Error(ErrorCode::ParseError, where + ": '" + s + "' is not a finite number");
  return v;
}

}  // namespace detail

inline AtomicMeasure parse_atoms_csv(const std::string& text, const std::string& name = "<csv>") {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    header = detail::split_csv(line);
    break;
  }
  if (header.size() < 3 || header[header.size() - 2] != "y" || header.back() != "w")
    throw Error(ErrorCode::ParseError, name + ": header must be x1,...,xd,y,w");
  const std::size_t d = header.size() - 2;
  for (std::size_t k = 0; k < d; ++k)
    if (header[k] != "x" + std::to_string(k + 1))
      throw Error(ErrorCode::ParseError, name + ": header column " + std::to_string(k + 1) + " must be x" +
                                             std::to_string(k + 1));
  std::vector<Atom> atoms;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = detail::split_csv(line);
    const std::string where = name + ":" + std::to_string(lineno);
    if (cells.size() != header.size())
      throw Error(ErrorCode::ParseError, where + ": expected " + std::to_string(header.size()) + " fields");
    Atom a;
    for (std::size_t k = 0; k < d; ++k) a.x.push_back(detail::parse_number(cells[k], where));
    a.y = detail::parse_number(cells[d], where);
    a.w = detail::parse_number(cells[d + 1], where);
    atoms.push_back(std::move(a));
  }
  return AtomicMeasure(d, atoms);
}

inline AtomicMeasure read_atoms_csv(const std::string& path) { return parse_atoms_csv(read_file(path), path); }

inline std::string atoms_csv(const AtomicMeasure& mu) {
  std::string s;
  for (std::size_t k = 0; k < mu.dim(); ++k) s += "x" + std::to_string(k + 1) + ",";
  s += "y,w\n";
  for (std::size_t i = 0; i < mu.size(); ++i) {
    for (double v : mu.x(i)) s += format_double(v) + ",";
    s += format_double(mu.y(i)) + "," + format_double(mu.w(i)) + "\n";
  }
  return s;
}

// ---------------------------------------------------------------------------
// JSON helpers

inline Json parse_json(const std::string& text, const std::string& name) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, name + ": " + e.what());
  }
}

namespace detail {

inline double num(const Json& j, const std::string& where) {
  if (!j.is_number()) throw Error(ErrorCode::ParseError, where + ": expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw Error(ErrorCode::ParseError, where + ": non-finite number");
  return v;
}

inline std::vector<double> num_array(const Json& j, const std::string& where) {
  if (!j.is_array()) throw Error(ErrorCode::ParseError, where + ": expected an array");
  std::vector<double> out;
  for (std::size_t k = 0; k < j.size(); ++k) out.push_back(num(j[k], where + "[" + std::to_string(k) + "]"));
  return out;
}

inline const Json& field(const Json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw Error(ErrorCode::ParseError, where + ": missing '" + key + "'");
  return j.at(key);
}

inline void flatten(const Json& j, std::vector<double>& out, const std::string& where) {
  if (j.is_array()) {
    for (const auto& e : j) flatten(e, out, where);
  } else {
    out.push_back(num(j, where));
  }
}

inline void dump(const Json& j, std::string& out, int indent, int depth) {
  const std::string pad(static_cast<std::size_t>(indent * (depth + 1)), ' ');
  const std::string close(static_cast<std::size_t>(indent * depth), ' ');
  const char* nl = indent > 0 ? "\n" : "";
  switch (j.type()) {
    case Json::value_t::object: {
      if (j.empty()) {
        out += "{}";
        return;
      }
      out += "{";
      out += nl;
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) {
          out += ",";
          out += nl;
        }
        first = false;
        out += pad + Json(it.key()).dump() + (indent > 0 ? ": " : ":");
        dump(it.value(), out, indent, depth + 1);
      }
      out += nl + close + "}";
      return;
    }
    case Json::value_t::array: {
      if (j.empty()) {
        out += "[]";
        return;
      }
      // Arrays of scalars stay on one line.
      bool flat = true;
      for (const auto& e : j) flat = flat && !e.is_structured();
      out += "[";
      if (!flat) out += nl;
      for (std::size_t k = 0; k < j.size(); ++k) {
        if (k > 0) {
          out += ",";
          if (!flat) out += nl;
        }
        if (!flat) out += pad;
        dump(j[k], out, indent, depth + 1);
      }
      if (!flat) out += nl + close;
      out += "]";
      return;
    }
    case Json::value_t::number_float:
      out += format_double(j.get<double>());
      return;
    default:
      out += j.dump();
  }
}

}  // namespace detail

/// Deterministic serialization: insertion order, 17 significant digits.
inline std::string dump_json(const Json& j, int indent = 2) {
  std::string out;
  detail::dump(j, out, indent, 0);
  out += "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Grid JSON: {axes: [[edges]...], vertical_edges: [...], density: nested row-major}

inline GriddedMeasure parse_grid_json(const Json& j, const std::string& name = "<grid>") {
  const auto& ax = detail::field(j, "axes", name);
  if (!ax.is_array() || ax.empty()) throw Error(ErrorCode::ParseError, name + ": 'axes' must be a nonempty array");
  std::vector<std::vector<double>> axes;
  for (std::size_t k = 0; k < ax.size(); ++k) axes.push_back(detail::num_array(ax[k], name + ": axes[" + std::to_string(k) + "]"));
  auto ve = detail::num_array(detail::field(j, "vertical_edges", name), name + ": vertical_edges");
  std::vector<double> dens;
  detail::flatten(detail::field(j, "density", name), dens, name + ": density");
  return GriddedMeasure(std::move(axes), std::move(ve), std::move(dens));
}

inline Json grid_json(const GriddedMeasure& g) {
  Json j;
  j["axes"] = g.axes();
  j["vertical_edges"] = g.vertical_edges();
  j["density"] = g.density();
  return j;
}

// ---------------------------------------------------------------------------
// Skeleton JSON:
// {depth, bounds?: [L, U], limbs: [{polyline: [[y, x1..xd]...], density: [{y_lo, y_hi, m}...],
//   parent: j|null, attach_y?}]}

inline skeleton::SkeletalRootMeasure parse_skeleton_json(const Json& j, const std::string& name = "<skeleton>") {
  using namespace skeleton;
  const auto& jl = detail::field(j, "limbs", name);
  if (!jl.is_array()) throw Error(ErrorCode::ParseError, name + ": 'limbs' must be an array");
  std::vector<Limb> limbs;
  for (std::size_t i = 0; i < jl.size(); ++i) {
    const std::string where = name + ": limbs[" + std::to_string(i) + "]";
    const auto& l = jl[i];
    const auto& poly = detail::field(l, "polyline", where);
    if (!poly.is_array()) throw Error(ErrorCode::ParseError, where + ": 'polyline' must be an array");
    std::vector<Knot> knots;
    for (std::size_t k = 0; k < poly.size(); ++k) {
      auto row = detail::num_array(poly[k], where + ".polyline[" + std::to_string(k) + "]");
      if (row.size() < 2) throw Error(ErrorCode::MalformedLimb, where + ": control points need [y, x1, ...]");
      knots.push_back({row[0], std::vector<double>(row.begin() + 1, row.end())});
    }
    std::vector<DensityPiece> dens;
    if (l.contains("density")) {
      const auto& jd = l.at("density");
      if (!jd.is_array()) throw Error(ErrorCode::ParseError, where + ": 'density' must be an array");
      for (std::size_t k = 0; k < jd.size(); ++k) {
        const std::string w = where + ".density[" + std::to_string(k) + "]";
        dens.push_back({detail::num(detail::field(jd[k], "y_lo", w), w), detail::num(detail::field(jd[k], "y_hi", w), w),
                        detail::num(detail::field(jd[k], "m", w), w)});
      }
    }
    std::optional<std::size_t> parent;
    if (l.contains("parent") && !l.at("parent").is_null()) {
      if (!l.at("parent").is_number_unsigned()) throw Error(ErrorCode::ParseError, where + ": 'parent' must be an index or null");
      parent = l.at("parent").get<std::size_t>();
    }
    std::optional<double> attach;
    if (l.contains("attach_y") && !l.at("attach_y").is_null()) attach = detail::num(l.at("attach_y"), where + ".attach_y");
    limbs.emplace_back(std::move(knots), std::move(dens), parent, attach);
  }
  std::optional<double> depth;
  if (j.contains("depth") && !j.at("depth").is_null()) depth = detail::num(j.at("depth"), name + ": depth");
  std::optional<Bounds> bounds;
  if (j.contains("bounds") && !j.at("bounds").is_null()) {
    const auto b = detail::num_array(j.at("bounds"), name + ": bounds");
    if (b.size() != 2) throw Error(ErrorCode::ParseError, name + ": 'bounds' must be [L, U]");
    bounds = Bounds{b[0], b[1]};
  }
  return SkeletalRootMeasure(std::move(limbs), depth, bounds);
}

inline Json skeleton_json(const skeleton::SkeletalRootMeasure& s) {
  Json j;
  j["depth"] = s.depth();
  if (s.bounds()) j["bounds"] = {s.bounds()->lower, s.bounds()->upper};
  Json limbs = Json::array();
  for (const auto& l : s.limbs()) {
    Json jl;
    Json poly = Json::array();
    for (const auto& k : l.knots()) {
      Json row = Json::array({k.y});
      for (double v : k.x) row.push_back(v);
      poly.push_back(row);
    }
    jl["polyline"] = poly;
    Json dens = Json::array();
    for (const auto& p : l.density()) {
      Json piece;
      piece["y_lo"] = p.y_lo;
      piece["y_hi"] = p.y_hi;
      piece["m"] = p.m;
      dens.push_back(piece);
    }
    jl["density"] = dens;
    jl["parent"] = l.parent() ? Json(*l.parent()) : Json(nullptr);
    if (l.attach_y()) jl["attach_y"] = *l.attach_y();
    limbs.push_back(jl);
  }
  j["limbs"] = limbs;
  return j;
}

inline Json atoms_json(const AtomicMeasure& mu) {
  Json a = Json::array();
  for (std::size_t i = 0; i < mu.size(); ++i) {
    Json e;
    e["x"] = std::vector<double>(mu.x(i).begin(), mu.x(i).end());
    e["y"] = mu.y(i);
    e["w"] = mu.w(i);
    a.push_back(e);
  }
  return a;
}

// ---------------------------------------------------------------------------
// Loading by extension

enum class InputKind { Atoms, Grid, Skeleton };

inline const char* to_string(InputKind k) {
  switch (k) {
    case InputKind::Atoms: return "atoms";
    case InputKind::Grid: return "grid";
    case InputKind::Skeleton: return "skeleton";
  }
  return "";
}

struct Input {
  InputKind kind = InputKind::Atoms;
  std::string path;
  AtomicMeasure atoms;
  GriddedMeasure grid;
  skeleton::SkeletalRootMeasure skeleton;
};

inline bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

/// .csv is an atom list; .json is a skeleton when it has "limbs", a grid otherwise.
inline Input load(const std::string& path) {
  Input in;
  in.path = path;
  if (ends_with(path, ".csv")) {
    in.kind = InputKind::Atoms;
    in.atoms = read_atoms_csv(path);
  } else if (ends_with(path, ".json")) {
    const auto j = parse_json(read_file(path), path);
    if (j.is_object() && j.contains("limbs")) {
      in.kind = InputKind::Skeleton;
      in.skeleton = parse_skeleton_json(j, path);
    } else {
      in.kind = InputKind::Grid;
      in.grid = parse_grid_json(j, path);
    }
  } else {
    throw Error(ErrorCode::IoError, "'" + path + "': unknown extension (expected .csv or .json)");
  }
  return in;
}

// ---------------------------------------------------------------------------
// SVG (height axis points down; first horizontal coordinate across)

struct SvgOptions {
  double width = 600.0;
  double height = 600.0;
  double margin = 30.0;
};

struct SvgLimb {
  std::vector<skeleton::Knot> polyline;
  std::string color;
  double stroke = 1.5;
};

inline std::string color_for(std::size_t h) {
  static const char* palette[] = {"#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666"};
  return palette[h % 8];
}

inline std::size_t tuple_hash(const std::vector<std::size_t>& t) {
  std::size_t h = 1469598103934665603ull;
  for (auto v : t) h = (h ^ v) * 1099511628211ull;
  return h;
}

inline std::string render_svg(const std::vector<SvgLimb>& limbs, const AtomicMeasure* atoms, const SvgOptions& o = {}) {
  double x0 = 1e300, x1 = -1e300, y0 = 0.0, y1 = -1e300;
  auto grow = [&](double x, double y) {
    x0 = std::min(x0, x);
    x1 = std::max(x1, x);
    y0 = std::min(y0, y);
    y1 = std::max(y1, y);
  };
  for (const auto& l : limbs)
    for (const auto& k : l.polyline) grow(k.x.empty() ? 0.0 : k.x[0], k.y);
  if (atoms)
    for (std::size_t i = 0; i < atoms->size(); ++i) grow(atoms->x(i).empty() ? 0.0 : atoms->x(i)[0], atoms->y(i));
  if (x0 > x1) {
    x0 = -1.0;
    x1 = 1.0;
    y1 = 1.0;
  }
  if (x1 - x0 < 1e-12) {
    x0 -= 0.5;
    x1 += 0.5;
  }
  if (y1 - y0 < 1e-12) y1 = y0 + 1.0;
  const double sx = (o.width - 2 * o.margin) / (x1 - x0), sy = (o.height - 2 * o.margin) / (y1 - y0);
  auto px = [&](double x) { return format_double(o.margin + (x - x0) * sx); };
  auto py = [&](double y) { return format_double(o.margin + (y - y0) * sy); };

  std::ostringstream s;
  s << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
    << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << format_double(o.width) << "\" height=\""
    << format_double(o.height) << "\" viewBox=\"0 0 " << format_double(o.width) << " " << format_double(o.height)
    << "\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<line x1=\"" << px(x0) << "\" y1=\"" << py(0.0) << "\" x2=\"" << px(x1) << "\" y2=\"" << py(0.0)
    << "\" stroke=\"#8c6d31\" stroke-width=\"1\"/>\n";
  for (const auto& l : limbs) {
    s << "<polyline fill=\"none\" stroke=\"" << l.color << "\" stroke-width=\"" << format_double(l.stroke)
      << "\" points=\"";
    for (std::size_t k = 0; k < l.polyline.size(); ++k)
      s << (k ? " " : "") << px(l.polyline[k].x.empty() ? 0.0 : l.polyline[k].x[0]) << "," << py(l.polyline[k].y);
    s << "\"/>\n";
  }
  if (atoms) {
    double wmax = 0.0;
    for (std::size_t i = 0; i < atoms->size(); ++i) wmax = std::max(wmax, atoms->w(i));
    for (std::size_t i = 0; i < atoms->size(); ++i) {
      const double r = 1.0 + 4.0 * std::sqrt(atoms->w(i) / wmax);
      s << "<circle cx=\"" << px(atoms->x(i).empty() ? 0.0 : atoms->x(i)[0]) << "\" cy=\"" << py(atoms->y(i))
        << "\" r=\"" << format_double(r) << "\" fill=\"#08519c\" fill-opacity=\"0.7\"/>\n";
    }
  }
  s << "</svg>\n";
  return s.str();
}

/// Limbs of a skeleton; uncharged stretches are drawn thin and grey.
inline std::vector<SvgLimb> skeleton_limbs(const skeleton::SkeletalRootMeasure& s,
                                           const std::vector<std::vector<std::size_t>>* tuples = nullptr) {
  std::vector<SvgLimb> out;
  for (std::size_t i = 0; i < s.limbs().size(); ++i) {
    const auto& l = s.limbs()[i];
    const std::string color = tuples ? color_for(tuple_hash((*tuples)[i])) : color_for(i);
    out.push_back({l.knots(), "#cccccc", 0.75});
    for (const auto& p : l.density()) {
      if (!(p.m > 0.0)) continue;
      std::vector<skeleton::Knot> seg{{p.y_lo, l.position(p.y_lo)}};
      for (const auto& k : l.knots())
        if (k.y > p.y_lo && k.y < p.y_hi) seg.push_back(k);
      seg.push_back({p.y_hi, l.position(p.y_hi)});
      out.push_back({std::move(seg), color, 2.0});
    }
  }
  return out;
}

}  // namespace lwot::io
