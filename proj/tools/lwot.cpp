#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lwot/lwot.hpp"

using namespace lwot;
using io::Json;

namespace {

struct Config {
  std::string command;
  std::vector<std::string> inputs;
  std::vector<double> weights;
  std::size_t slabs = 64;
  std::size_t rot_grid = 64;
  double rot_tol = 1e-6;
  std::size_t lp_cap = discrete_ot::LpOptions{}.column_cap;
  std::string lp_dump_path;
  std::ostream* lp_dump = nullptr;
  std::string out;
  std::string svg;
  std::vector<double> bounds;
  std::string phenotype;
  double width = 600.0, height = 600.0, margin = 30.0;
};

struct Run {
  const Config& cfg;
  Json params = Json::object();
  Json diagnostics = Json::object();
  std::vector<std::string> warnings;

  LwOptions lw() const {
    LwOptions o;
    o.lp.column_cap = cfg.lp_cap;
    o.lp.dump = cfg.lp_dump;
    return o;
  }
  RotationOptions rotation() const {
    RotationOptions r;
    r.grid = cfg.rot_grid;
    r.angle_tol = cfg.rot_tol;
    r.lw = lw();
    return r;
  }

  std::vector<double> weights(std::size_t m) {
    std::vector<double> w = cfg.weights;
    if (w.empty()) w.assign(m, 1.0 / static_cast<double>(m));
    if (w.size() != m)
      throw Error(ErrorCode::InvalidArgument,
                  "got " + std::to_string(w.size()) + " weights for " + std::to_string(m) + " inputs");
    double s = 0.0;
    for (double v : w) {
      if (!(v > 0.0) || !std::isfinite(v)) throw Error(ErrorCode::InvalidArgument, "weights must be positive");
      s += v;
    }
    if (std::abs(s - 1.0) > 1e-12) {
      for (double& v : w) v /= s;
      warnings.push_back("weights summed to " + io::format_double(s) + "; normalized");
    }
    params["weights"] = w;
    return w;
  }

  std::vector<io::Input> load(std::size_t min_count) const {
    if (cfg.inputs.size() < min_count)
      throw Error(ErrorCode::InvalidArgument,
                  cfg.command + " needs at least " + std::to_string(min_count) + " input file(s)");
    std::vector<io::Input> in;
    for (const auto& p : cfg.inputs) in.push_back(io::load(p));
    return in;
  }

  AtomicMeasure atoms(const io::Input& in) {
    switch (in.kind) {
      case io::InputKind::Atoms: return in.atoms;
      case io::InputKind::Grid: return from_grid(in.grid);
      case io::InputKind::Skeleton:
        params["slabs"] = cfg.slabs;
        return skeleton::to_atomic(in.skeleton, cfg.slabs);
    }
    return {};
  }

  std::vector<AtomicMeasure> all_atoms(const std::vector<io::Input>& in) {
    std::vector<AtomicMeasure> out;
    for (const auto& i : in) out.push_back(atoms(i));
    return out;
  }

  static const skeleton::SkeletalRootMeasure& skel(const io::Input& in) {
    if (in.kind != io::InputKind::Skeleton)
      throw Error(ErrorCode::InvalidArgument, "'" + in.path + "' is not a skeleton file");
    return in.skeleton;
  }

  std::optional<skeleton::Bounds> bounds() {
    if (cfg.bounds.empty()) return std::nullopt;
    if (cfg.bounds.size() != 2) throw Error(ErrorCode::InvalidArgument, "--bounds expects L,U");
    params["bounds"] = cfg.bounds;
    return skeleton::Bounds{cfg.bounds[0], cfg.bounds[1]};
  }

  void write_svg(const std::vector<io::SvgLimb>& limbs, const AtomicMeasure* atoms) {
    if (cfg.svg.empty()) return;
    io::write_file(cfg.svg, io::render_svg(limbs, atoms, {cfg.width, cfg.height, cfg.margin}));
    diagnostics["svg"] = cfg.svg;
  }
};

Json distance_json(const LwDistanceReport& r) {
  Json j;
  j["total_sq"] = r.total_sq;
  j["vertical_sq"] = r.vertical_sq;
  j["horizontal_sq"] = r.horizontal_sq;
  Json per = Json::array();
  for (const auto& c : r.per_interval) per.push_back({c.lo, c.hi, c.cost});
  j["per_interval"] = per;
  return j;
}

Json validation_json(const skeleton::ValidationReport& r) {
  Json j;
  j["strength"] = skeleton::to_string(r.strength);
  j["S1"] = r.s1;
  j["S2"] = r.s2;
  j["S3"] = r.s3;
  j["W3"] = r.w3;
  j["mass_ok"] = r.mass_ok;
  j["bounds_ok"] = r.bounds_ok;
  j["full_support"] = r.full_support;
  Json v = Json::array();
  for (const auto& e : r.violations) {
    Json x;
    x["rule"] = e.rule;
    x["limbs"] = {e.limb_a, e.limb_b};
    x["y"] = e.y;
    x["detail"] = e.detail;
    v.push_back(x);
  }
  j["violations"] = v;
  return j;
}

Json bounds_json(const skeleton::RootLengthBounds& b) {
  Json j;
  j["C"] = b.C;
  j["C_tilde"] = b.C_tilde;
  j["K"] = b.K;
  j["k"] = b.k;
  j["C0"] = b.C0;
  j["C1"] = b.C1;
  j["C2"] = b.C2;
  j["lower"] = b.lower;
  j["upper"] = b.upper;
  return j;
}

Json ghost_json(const skeleton::GhostLimb& g) {
  Json j;
  j["tuple"] = g.tuple;
  j["l_range"] = {g.l_lo, g.l_hi};
  Json poly = Json::array();
  for (const auto& k : g.polyline) {
    Json row = Json::array({k.y});
    for (double v : k.x) row.push_back(v);
    poly.push_back(row);
  }
  j["polyline"] = poly;
  Json act = Json::array();
  for (const auto& [a, b] : g.active) act.push_back({a, b});
  j["active"] = act;
  return j;
}

Json execute(Run& run) {
  const auto& cmd = run.cfg.command;
  if (cmd == "dist") {
    auto in = run.load(2);
    if (in.size() != 2) throw Error(ErrorCode::InvalidArgument, "dist takes exactly two inputs");
    return distance_json(lw_distance(run.atoms(in[0]), run.atoms(in[1]), run.lw()));
  }
  if (cmd == "symdist") {
    auto in = run.load(2);
    if (in.size() != 2) throw Error(ErrorCode::InvalidArgument, "symdist takes exactly two inputs");
    run.params["rot_grid"] = run.cfg.rot_grid;
    run.params["rot_tol"] = run.cfg.rot_tol;
    const auto mu = run.atoms(in[0]), nu = run.atoms(in[1]);
    const auto r = symmetrized_distance(mu, nu, run.rotation());
    Json j;
    j["distance_sq"] = r.distance_sq;
    j["angle"] = r.angle;
    j["plain_sq"] = lw_distance(mu, nu, run.lw()).total_sq;
    run.diagnostics["probes"] = r.trace.size();
    return j;
  }
  if (cmd == "bary") {
    auto in = run.load(1);
    const auto ms = run.all_atoms(in);
    const auto w = run.weights(ms.size());
    const auto bar = lw_barycenter(ms, w, run.lw());
    Json j;
    j["atoms"] = io::atoms_json(bar);
    j["objective"] = lw_barycenter_objective(bar, ms, w, run.lw());
    run.write_svg({}, &bar);
    return j;
  }
  if (cmd == "symbary") {
    auto in = run.load(1);
    const auto ms = run.all_atoms(in);
    const auto w = run.weights(ms.size());
    run.params["rot_grid"] = run.cfg.rot_grid;
    run.params["rot_tol"] = run.cfg.rot_tol;
    SymBarycenterOptions o;
    o.rotation = run.rotation();
    const auto r = symmetrized_barycenter(ms, w, o);
    Json j;
    j["atoms"] = io::atoms_json(r.barycenter);
    j["angles"] = r.angles;
    j["objective"] = r.objective;
    run.diagnostics["iterations"] = r.iterations;
    run.write_svg({}, &r.barycenter);
    return j;
  }
  if (cmd == "phenotype") {
    if (run.cfg.phenotype.empty()) throw Error(ErrorCode::InvalidArgument, "phenotype needs --name");
    const auto p = phenotypes::parse_phenotype(run.cfg.phenotype);
    run.params["phenotype"] = p.name();
    auto in = run.load(1);
    bool gridded = true;
    for (const auto& i : in) gridded = gridded && i.kind == io::InputKind::Grid;
    Json values = Json::array();
    std::vector<AtomicMeasure> ms;
    std::vector<GriddedMeasure> gs;
    for (const auto& i : in) {
      if (gridded) {
        gs.push_back(i.grid.normalized());
        values.push_back(phenotypes::evaluate(p, gs.back()));
      } else {
        ms.push_back(normalize(run.atoms(i)));
        values.push_back(phenotypes::evaluate(p, ms.back()));
      }
    }
    Json j;
    j["values"] = values;
    if (in.size() > 1) {
      const auto w = run.weights(in.size());
      const auto rep = gridded ? phenotypes::convexity_check(p, gs, w) : phenotypes::convexity_check(p, ms, w, run.lw());
      Json c;
      c["functional"] = rep.functional;
      c["value_at_barycenter"] = rep.value_at_barycenter;
      c["mean_of_values"] = rep.mean_of_values;
      c["gap"] = rep.gap;
      j["convexity"] = c;
    }
    if (gridded && p.kind == phenotypes::Phenotype::Kind::Entropy) {
      Json parts = Json::array();
      for (const auto& g : gs) {
        const auto e = phenotypes::shannon_entropy(g);
        parts.push_back({{"total", e.total}, {"layer_integral", e.layer_integral}, {"vertical", e.vertical}});
      }
      j["entropy"] = parts;
    }
    return j;
  }
  if (cmd == "skeleton-validate") {
    auto in = run.load(1);
    Json arr = Json::array();
    for (const auto& i : in) arr.push_back(validation_json(skeleton::validate(Run::skel(i))));
    return Json{{"reports", arr}};
  }
  if (cmd == "skeleton-bary" || cmd == "ghost") {
    auto in = run.load(1);
    std::vector<skeleton::SkeletalRootMeasure> ss;
    for (const auto& i : in) ss.push_back(Run::skel(i));
    const auto w = run.weights(ss.size());
    if (cmd == "ghost") {
      Json arr = Json::array();
      for (const auto& g : skeleton::ghost(ss, w)) arr.push_back(ghost_json(g));
      return Json{{"ghost", arr}};
    }
    run.params["slabs"] = run.cfg.slabs;
    skeleton::SkeletalBarycenterOptions o;
    o.n_slabs = run.cfg.slabs;
    o.lp.column_cap = run.cfg.lp_cap;
    o.lp.dump = run.cfg.lp_dump;
    const auto res = skeleton::skeletal_barycenter(ss, w, o);
    Json j;
    j["skeleton"] = io::skeleton_json(res.measure);
    j["limb_tuples"] = res.limb_tuples;
    j["root_length"] = skeleton::root_length(res.measure);
    j["validation"] = validation_json(skeleton::validate(res.measure));
    auto b = run.bounds();
    bool declared = true;
    for (const auto& s : ss) declared = declared && s.bounds().has_value();
    if (b || declared) j["root_length_bounds"] = bounds_json(skeleton::root_length_bounds(ss, b));
    std::size_t max_support = 0;
    Json sizes = Json::array();
    for (const auto& s : res.slabs) {
      sizes.push_back(s.atoms.size());
      max_support = std::max(max_support, s.atoms.size());
    }
    run.diagnostics["slab_count"] = res.slabs.size();
    run.diagnostics["slab_support_sizes"] = sizes;
    run.diagnostics["max_slab_support"] = max_support;
    run.diagnostics["repair_rounds"] = res.repair_rounds;
    run.write_svg(io::skeleton_limbs(res.measure, &res.limb_tuples), nullptr);
    return j;
  }
  if (cmd == "rootlength") {
    auto in = run.load(1);
    std::vector<skeleton::SkeletalRootMeasure> ss;
    Json lengths = Json::array();
    for (const auto& i : in) {
      ss.push_back(Run::skel(i));
      lengths.push_back(skeleton::root_length(ss.back()));
    }
    Json j;
    j["lengths"] = lengths;
    auto b = run.bounds();
    bool declared = true;
    for (const auto& s : ss) declared = declared && s.bounds().has_value();
    if (b || declared) j["bounds"] = bounds_json(skeleton::root_length_bounds(ss, b));
    return j;
  }
  if (cmd == "coupling") {
    auto in = run.load(2);
    if (in.size() != 2) throw Error(ErrorCode::InvalidArgument, "coupling takes exactly two inputs");
    const auto c = layerwise_coupling(run.atoms(in[0]), run.atoms(in[1]));
    Json frags = Json::array();
    for (const auto& f : c.fragments) frags.push_back({{"from", {f.x, f.y}}, {"to", {f.x2, f.y2}}, {"mass", f.mass}});
    return Json{{"fragments", frags}, {"cost", c.cost}};
  }
  if (cmd == "render") {
    if (run.cfg.svg.empty()) throw Error(ErrorCode::InvalidArgument, "render needs --svg PATH");
    auto in = run.load(1);
    std::vector<io::SvgLimb> limbs;
    std::vector<Atom> pts;
    std::size_t dim = 0;
    for (const auto& i : in) {
      if (i.kind == io::InputKind::Skeleton) {
        auto l = io::skeleton_limbs(i.skeleton);
        limbs.insert(limbs.end(), l.begin(), l.end());
      } else {
        const auto a = run.atoms(i);
        dim = a.dim();
        for (const auto& at : a.atoms()) pts.push_back(at);
      }
    }
    std::optional<AtomicMeasure> atoms;
    if (!pts.empty()) atoms.emplace(dim, pts);
    run.write_svg(limbs, atoms ? &*atoms : nullptr);
    return Json{{"limbs", limbs.size()}, {"atoms", pts.size()}};
  }
  throw Error(ErrorCode::InvalidArgument, "unknown command '" + cmd + "'");
}

Json error_doc(std::string_view code, const std::string& detail) {
  Json j;
  j["error"] = {{"code", std::string(code)}, {"detail", detail}};
  return j;
}

std::vector<double> parse_list(const std::string& s, const char* flag) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    const auto next = s.find(',', pos);
    const auto tok = s.substr(pos, next == std::string::npos ? std::string::npos : next - pos);
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(tok, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != tok.size())
      throw Error(ErrorCode::InvalidArgument, std::string(flag) + ": '" + tok + "' is not a number");
    out.push_back(v);
    if (next == std::string::npos) break;
    pos = next + 1;
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Layerwise-Wasserstein distances, barycenters and skeletal root measures"};
  app.require_subcommand(1, 1);
  Config cfg;
  std::string weights, bounds;

  const std::vector<std::pair<const char*, const char*>> commands = {
      {"dist", "layerwise-Wasserstein distance between two measures"},
      {"symdist", "rotation-symmetrized distance (d = 2)"},
      {"bary", "layerwise barycenter of atomic measures"},
      {"symbary", "rotation-symmetrized barycenter (d = 2)"},
      {"phenotype", "evaluate a phenotype and its convexity gap"},
      {"skeleton-validate", "check skeleton conditions S1, S2, S3, W3"},
      {"skeleton-bary", "skeletal barycenter reconstructed along the ghost"},
      {"ghost", "all index-tuple averages of rescaled limbs"},
      {"rootlength", "root lengths and the barycenter length bracket"},
      {"coupling", "layerwise (Knothe-Rosenblatt) coupling, d = 1"},
      {"render", "draw skeletons and atoms as SVG"},
  };
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("inputs", cfg.inputs, "input files (.csv atoms, .json grid or skeleton)")->required();
    sub->add_option("--weights", weights, "comma-separated barycentric weights");
    sub->add_option("--slabs", cfg.slabs, "slab count for skeleton discretization")->check(CLI::PositiveNumber);
    sub->add_option("--rot-grid", cfg.rot_grid, "rotation grid size K");
    sub->add_option("--rot-tol", cfg.rot_tol, "rotation angle tolerance");
    sub->add_option("--lp-cap", cfg.lp_cap, "column cap for multi-marginal LPs");
    sub->add_option("--lp-dump", cfg.lp_dump_path, "append every LP instance to this file");
    sub->add_option("--out", cfg.out, "write the JSON result here instead of stdout");
    sub->add_option("--svg", cfg.svg, "write an SVG rendering");
    sub->add_option("--bounds", bounds, "vertical density bounds L,U");
    sub->add_option("--width", cfg.width, "SVG width");
    sub->add_option("--height", cfg.height, "SVG height");
    sub->add_option("--margin", cfg.margin, "SVG margin");
    if (std::string(name) == "phenotype")
      sub->add_option("--name", cfg.phenotype, "entropy, vmean, vvar, lvar, venergy:r or vq:l")->required();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cout << io::dump_json(error_doc("InvalidArgument", e.what()));
    return 1;
  }
  cfg.command = app.get_subcommands().front()->get_name();

  Run run{cfg, Json::object(), Json::object(), {}};
  try {
    if (!weights.empty()) cfg.weights = parse_list(weights, "--weights");
    if (!bounds.empty()) cfg.bounds = parse_list(bounds, "--bounds");
    std::ofstream lp_dump;
    if (!cfg.lp_dump_path.empty()) {
      lp_dump.open(cfg.lp_dump_path);
      if (!lp_dump) throw Error(ErrorCode::IoError, "cannot open " + cfg.lp_dump_path);
      cfg.lp_dump = &lp_dump;
    }
    Json result = execute(run);
    for (const auto& w : run.warnings) std::cerr << "warning: " << w << "\n";
    if (!run.warnings.empty()) run.diagnostics["warnings"] = run.warnings;
    Json doc;
    doc["command"] = cfg.command;
    doc["inputs"] = cfg.inputs;
    doc["params"] = run.params;
    doc["result"] = result;
    doc["diagnostics"] = run.diagnostics;
    const auto text = io::dump_json(doc);
    if (cfg.out.empty())
      std::cout << text;
    else
      io::write_file(cfg.out, text);
    return 0;
  } catch (const Error& e) {
    std::cout << io::dump_json(error_doc(to_string(e.code()), e.detail()));
    return e.code() == ErrorCode::IoError ? 2 : 1;
  } catch (const std::exception& e) {
    std::cout << io::dump_json(error_doc("InternalError", e.what()));
    return 1;
  }
}
