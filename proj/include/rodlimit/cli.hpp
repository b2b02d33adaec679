#pragma once

// Batch front end. One subcommand per workflow:
//   validate    hypothesis checks on a skeleton file, writes validation.json
//   solve       both limit problems on skeleton + loads, writes the solution
//   decompose   elementary decomposition of sampled tube field files at one
//               delta, writes per-arc centerline fields and estimate.json
//   report      delta sweep of the decomposition ratios over three synthetic
//               displacement families, writes report.json
//
// Exit codes: 0 success, 1 domain failure (failed check, solver or grid
// error, unbounded ratio), 2 usage or input-file error. JSON outputs use
// fixed key order and default float formatting, so identical inputs produce
// byte-identical reports. ROD_NUM_THREADS caps worker threads.

#include <rodlimit/decomposition.hpp>
#include <rodlimit/io.hpp>
#include <rodlimit/postprocess.hpp>
#include <rodlimit/solver.hpp>

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace rodlimit {

struct RunConfig {
  std::string skeleton_path;
  std::string loads_path;
  std::string out_dir = "out";
  std::vector<std::string> tube_paths;
  double h = 0.05;                         // mesh size
  std::string mode;                        // empty: defer to the loads file
  std::vector<double> deltas = {0.2, 0.1, 0.05};
  double tol_residual = 1e-8;              // discrete problem residuals
  double tol_constraint = 1e-8;            // kinematic pair residual
  Material material;                       // lambda = mu = 1
  EstimateOptions estimate;                // decomposition sampling controls
};

namespace detail {

inline void apply_config_file(RunConfig& cfg, const nlohmann::json& j) {
  check_keys(j, {"h", "mode", "deltas", "material", "tolerances", "estimate"},
             "config");
  if (j.contains("h")) cfg.h = num_from(j.at("h"), "config.h");
  if (j.contains("mode")) {
    if (!j.at("mode").is_string())
      throw ParseError("config.mode: expected \"check\" or \"project\"");
    cfg.mode = j.at("mode").get<std::string>();
  }
  if (j.contains("deltas")) {
    if (!j.at("deltas").is_array() || j.at("deltas").empty())
      throw ParseError("config.deltas: expected a non-empty array");
    cfg.deltas.clear();
    for (const auto& d : j.at("deltas"))
      cfg.deltas.push_back(num_from(d, "config.deltas"));
  }
  if (j.contains("material")) {
    const auto& jm = j.at("material");
    check_keys(jm, {"lambda", "mu"}, "config.material");
    double l = jm.contains("lambda") ? num_from(jm.at("lambda"), "config.material.lambda")
                                     : cfg.material.lambda;
    double m = jm.contains("mu") ? num_from(jm.at("mu"), "config.material.mu")
                                 : cfg.material.mu;
    try {
      cfg.material = Material(l, m);
    } catch (const Error& e) {
      throw ParseError(std::string("config.material: ") + e.what());
    }
  }
  if (j.contains("tolerances")) {
    const auto& jt = j.at("tolerances");
    check_keys(jt, {"residual", "constraint"}, "config.tolerances");
    if (jt.contains("residual"))
      cfg.tol_residual = num_from(jt.at("residual"), "config.tolerances.residual");
    if (jt.contains("constraint"))
      cfg.tol_constraint =
          num_from(jt.at("constraint"), "config.tolerances.constraint");
  }
  if (j.contains("estimate")) {
    const auto& je = j.at("estimate");
    check_keys(je, {"ns", "nr", "na", "rho", "growth_factor"},
               "config.estimate");
    if (je.contains("ns"))
      cfg.estimate.ns = static_cast<int>(num_from(je.at("ns"), "config.estimate.ns"));
    if (je.contains("nr"))
      cfg.estimate.nr = static_cast<int>(num_from(je.at("nr"), "config.estimate.nr"));
    if (je.contains("na"))
      cfg.estimate.na = static_cast<int>(num_from(je.at("na"), "config.estimate.na"));
    if (je.contains("rho"))
      cfg.estimate.rho = num_from(je.at("rho"), "config.estimate.rho");
    if (je.contains("growth_factor"))
      cfg.estimate.growth_factor =
          num_from(je.at("growth_factor"), "config.estimate.growth_factor");
  }
}

inline void check_run_config(const RunConfig& cfg) {
  if (!(cfg.h > 0)) throw ParseError("mesh size h must be positive");
  if (!(cfg.tol_residual > 0) || !(cfg.tol_constraint > 0))
    throw ParseError("tolerances must be positive");
  if (!cfg.mode.empty() && cfg.mode != "check" && cfg.mode != "project")
    throw ParseError("mode must be 'check' or 'project'");
  if (cfg.deltas.empty()) throw ParseError("delta list must not be empty");
  for (double d : cfg.deltas)
    if (!(d > 0)) throw ParseError("delta values must be positive");
}

}  // namespace detail

// ---------------------------------------------------------------------------

inline int cmd_validate(const RunConfig& cfg) {
  namespace fs = std::filesystem;
  Skeleton skel = read_skeleton(cfg.skeleton_path);
  ValidationReport rep = validate(skel);

  std::error_code ec;
  fs::create_directories(cfg.out_dir, ec);
  if (ec) throw IOError("cannot create directory " + cfg.out_dir);
  auto os = detail::open_out((fs::path(cfg.out_dir) / "validation.json").string());
  os << validation_json(rep).dump(2) << '\n';

  for (const auto& e : rep.entries)
    std::cout << (e.pass ? "pass  " : "FAIL  ") << e.name
              << (e.detail.empty() ? "" : "  (" + e.detail + ")") << '\n';
  std::cout << (rep.usable ? "structure usable" : "structure not usable")
            << ", delta0 = " << rep.delta0 << '\n';
  return rep.usable ? 0 : 1;
}

inline int cmd_solve(const RunConfig& cfg) {
  Skeleton skel = read_skeleton(cfg.skeleton_path);
  ValidationReport vr = validate(skel);
  if (!vr.usable) {
    for (const auto& e : vr.entries)
      if (!e.pass) std::cerr << "validation failed: " << e.name << '\n';
    return 1;
  }
  LoadsFile lf = read_loads(cfg.loads_path, skel);
  const std::string mode = cfg.mode.empty() ? lf.mode : cfg.mode;

  auto mesh = SkeletonMesh::build(skel, cfg.h);
  SpaceOperators ops(mesh);
  AssembledLoads al = assemble_loads(mesh, lf.loads);
  al = enforce_orthogonality(ops, al, mode);
  LimitSolution sol = solve_limit(ops, cfg.material, al);
  std::vector<std::string> files = export_solution(sol, lf.loads, cfg.out_dir);

  bool ok = true;
  auto check = [&ok](const char* name, double value, double bound) {
    if (!(value <= bound)) {
      ok = false;
      std::cerr << "residual " << name << " = " << value << " exceeds "
                << bound << '\n';
    }
  };
  check("extensional", sol.ext.galerkin_residual, cfg.tol_residual);
  check("inextensional", sol.inext.galerkin_residual, cfg.tol_residual);
  check("pair constraint", sol.inext.constraint_residual, cfg.tol_constraint);

  std::cout << "energies: extensional " << sol.ext.energy
            << ", inextensional " << sol.inext.energy << '\n';
  std::cout << files.size() << " files written to " << cfg.out_dir << '\n';
  return ok ? 0 : 1;
}

inline int cmd_decompose(const RunConfig& cfg) {
  namespace fs = std::filesystem;
  Skeleton skel = read_skeleton(cfg.skeleton_path);
  const int n_arcs = static_cast<int>(skel.arcs.size());

  // Each --tube CSV has its JSON grid header next to it; the header names the
  // arc the field lives on. Every arc must be covered exactly once and all
  // fields must share one delta.
  std::vector<std::optional<TubeField>> by_arc(n_arcs);
  for (const std::string& p : cfg.tube_paths) {
    fs::path hdr(p);
    hdr.replace_extension(".json");
    try {
      nlohmann::json j = detail::load_json_file(hdr.string());
      if (!j.contains("arc") || !j.at("arc").is_number_integer())
        throw ParseError(hdr.string() + ": header missing integer 'arc'");
      int arc = j.at("arc").get<int>();
      if (arc < 0 || arc >= n_arcs)
        throw ParseError(hdr.string() + ": header references unknown arc " +
                         std::to_string(arc));
      if (by_arc[arc])
        throw ParseError("arc " + std::to_string(arc) +
                         " is covered by more than one tube file");
      by_arc[arc] = read_tube_field(skel.arcs[arc], p, hdr.string());
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(hdr.string() + ": " + e.what());
    }
  }
  std::vector<TubeField> fields;
  for (int a = 0; a < n_arcs; ++a) {
    if (!by_arc[a])
      throw ParseError("no tube field given for arc " + std::to_string(a));
    fields.push_back(std::move(*by_arc[a]));
  }
  const double delta = fields.front().delta();
  for (const TubeField& f : fields)
    if (std::abs(f.delta() - delta) > 1e-12 * delta)
      throw ParseError("tube fields have inconsistent delta");

  std::vector<ElementaryDisplacement> eds;
  for (const TubeField& f : fields) eds.push_back(elementary_decompose(f));
  if (!skel.knots.empty())
    eds = rigidify_junctions(eds, fields, skel, delta, cfg.estimate.rho);

  auto mesh = SkeletonMesh::build(skel, cfg.h);
  SpaceOperators ops(mesh);
  EstimateRow row = estimate_row(fields, eds, ops, delta);

  std::error_code ec;
  fs::create_directories(cfg.out_dir, ec);
  if (ec) throw IOError("cannot create directory " + cfg.out_dir);
  for (int a = 0; a < n_arcs; ++a) {
    char name[32];
    std::snprintf(name, sizeof name, "ersd_arc_%03d.csv", a);
    auto os = detail::open_out((fs::path(cfg.out_dir) / name).string());
    os << "s,U1,U2,U3,R1,R2,R3\n";
    const ElementaryDisplacement& ed = eds[a];
    for (std::size_t i = 0; i < ed.s.size(); ++i) {
      os << detail::fmt17(ed.s[i]);
      for (int k = 0; k < 3; ++k) os << ',' << detail::fmt17(ed.U[i][k]);
      for (int k = 0; k < 3; ++k) os << ',' << detail::fmt17(ed.R[i][k]);
      os << '\n';
    }
  }

  nlohmann::ordered_json jrow;
  jrow["energy_E"] = row.energy_E;
  jrow["energy_D"] = row.energy_D;
  jrow["r_grad"] = row.r_grad;
  jrow["r_l2"] = row.r_l2;
  jrow["r_kinematic"] = row.r_kinematic;
  jrow["r_split"] = row.r_split;
  nlohmann::ordered_json jz = nlohmann::ordered_json::array();
  for (int a = 0; a < n_arcs; ++a)
    for (const RigidInterval& ri : eds[a].rigid) {
      nlohmann::ordered_json ji;
      ji["arc"] = a;
      ji["knot"] = ri.knot;
      ji["s_lo"] = ri.s_lo;
      ji["s_hi"] = ri.s_hi;
      ji["a"] = {ri.a.x(), ri.a.y(), ri.a.z()};
      ji["b"] = {ri.b.x(), ri.b.y(), ri.b.z()};
      jz.push_back(std::move(ji));
    }
  nlohmann::ordered_json jrep;
  jrep["delta"] = delta;
  jrep["ratios"] = std::move(jrow);
  jrep["junctions"] = std::move(jz);
  auto os = detail::open_out((fs::path(cfg.out_dir) / "estimate.json").string());
  os << jrep.dump(2) << '\n';

  std::cout << "delta " << delta << ": r_grad " << row.r_grad << ", r_l2 "
            << row.r_l2 << ", r_kinematic " << row.r_kinematic << ", r_split "
            << row.r_split << '\n';
  std::cout << "report written to " << cfg.out_dir << '\n';
  return 0;
}

inline int cmd_report(const RunConfig& cfg) {
  namespace fs = std::filesystem;
  Skeleton skel = read_skeleton(cfg.skeleton_path);
  EstimateOptions opt = cfg.estimate;
  opt.mesh_h = cfg.h;

  struct Family {
    const char* name;
    std::function<Vec3(const Vec3&)> u;
  };
  const std::vector<Family> families = {
      {"extension",
       [](const Vec3& x) -> Vec3 { return Vec3(0.1 * x.x(), 0.0, 0.0); }},
      {"bending",
       [](const Vec3& x) -> Vec3 {
         return Vec3(-2.0 * x.x() * x.y(), x.x() * x.x(), 0.0);
       }},
      {"torsion",
       [](const Vec3& x) -> Vec3 {
         return Vec3(0.0, -x.x() * x.z(), x.x() * x.y());
       }},
  };

  bool bounded = true;
  nlohmann::ordered_json jf;
  for (const Family& fam : families) {
    EstimateReport rep = estimate_report(fam.u, skel, cfg.deltas, opt);
    jf[fam.name] = estimate_report_json(rep);
    bool grew = rep.grad_growth || rep.l2_growth || rep.kinematic_growth ||
                rep.split_growth;
    bounded = bounded && !grew;
    std::cout << fam.name << (grew ? " (ratio growth)" : "") << '\n';
    for (const EstimateRow& row : rep.rows) {
      char line[256];
      std::snprintf(line, sizeof line,
                    "  delta %-8g r_grad %-12.6g r_l2 %-12.6g r_kin %-12.6g "
                    "r_split %-12.6g",
                    row.delta, row.r_grad, row.r_l2, row.r_kinematic,
                    row.r_split);
      std::cout << line << '\n';
    }
  }

  std::error_code ec;
  fs::create_directories(cfg.out_dir, ec);
  if (ec) throw IOError("cannot create directory " + cfg.out_dir);
  nlohmann::ordered_json jrep;
  jrep["deltas"] = cfg.deltas;
  jrep["families"] = std::move(jf);
  auto os = detail::open_out((fs::path(cfg.out_dir) / "report.json").string());
  os << jrep.dump(2) << '\n';

  std::cout << "report written to " << cfg.out_dir << '\n';
  return bounded ? 0 : 1;
}

// ---------------------------------------------------------------------------

inline int run_cli(int argc, char** argv) {
  CLI::App app{
      "limit solver and displacement decomposition for structures of thin "
      "curved rods"};
  app.require_subcommand(1);
  // the mesh-size option is spelled --h, so help must not own that name
  app.set_help_flag("--help", "print help and exit");

  std::string skeleton, loads, out, config, mode;
  double h = 0;  // 0 means not given
  std::vector<double> deltas;
  std::vector<std::string> tubes;

  auto add_skeleton = [&](CLI::App* c) {
    c->set_help_flag("--help", "print help and exit");
    c->add_option("--skeleton", skeleton, "skeleton JSON file")->required();
  };
  auto add_common = [&](CLI::App* c) {
    c->add_option("--out", out, "output directory (default 'out')");
    c->add_option("--config", config, "configuration JSON file");
  };

  CLI::App* cv = app.add_subcommand(
      "validate", "check the structure hypotheses, write validation.json");
  add_skeleton(cv);
  add_common(cv);

  CLI::App* cs = app.add_subcommand(
      "solve", "solve both limit problems, export solution and summary");
  add_skeleton(cs);
  add_common(cs);
  cs->add_option("--loads", loads, "load case JSON file")->required();
  cs->add_option("--h", h, "mesh size")->check(CLI::PositiveNumber);
  cs->add_option("--mode", mode,
                 "extensional load orthogonality handling (overrides the "
                 "loads file)")
      ->check(CLI::IsMember({"check", "project"}));

  CLI::App* cd = app.add_subcommand(
      "decompose",
      "decompose sampled tube field files, write estimate.json");
  add_skeleton(cd);
  add_common(cd);
  cd->add_option("--tube", tubes,
                 "tube field CSV, repeatable; the JSON grid header is "
                 "looked up next to it")
      ->required();
  cd->add_option("--h", h, "centerline split mesh size")
      ->check(CLI::PositiveNumber);

  CLI::App* cr = app.add_subcommand(
      "report",
      "sweep delta over synthetic displacement families, write report.json");
  add_skeleton(cr);
  add_common(cr);
  cr->add_option("--delta", deltas, "delta list for the sweep")
      ->check(CLI::PositiveNumber);
  cr->add_option("--h", h, "centerline split mesh size")
      ->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    RunConfig cfg;
    if (!config.empty())
      detail::apply_config_file(cfg, detail::load_json_file(config));
    cfg.skeleton_path = skeleton;
    cfg.loads_path = loads;
    cfg.tube_paths = tubes;
    if (!out.empty()) cfg.out_dir = out;
    if (h > 0) cfg.h = h;
    if (!mode.empty()) cfg.mode = mode;
    if (!deltas.empty()) cfg.deltas = deltas;
    detail::check_run_config(cfg);

    if (app.got_subcommand(cv)) return cmd_validate(cfg);
    if (app.got_subcommand(cs)) return cmd_solve(cfg);
    if (app.got_subcommand(cd)) return cmd_decompose(cfg);
    return cmd_report(cfg);
  } catch (const ParseError& e) {
    std::cerr << e.what() << '\n';
    return 2;
  } catch (const IOError& e) {
    std::cerr << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    std::cerr << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << e.what() << '\n';
    return 1;
  }
}

}  // namespace rodlimit
