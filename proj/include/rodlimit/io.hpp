#pragma once

// JSON readers for skeleton and load-case files, plus the validation report
// serializer. Parsing is strict: unknown keys, wrong shapes and out-of-range
// references all raise ParseError naming the offending element, so a typo in
// an input file never silently changes the problem being solved.
//
// Skeleton schema:
//   {
//     "arcs": [
//       {"type":"segment", "start":[x,y,z], "end":[x,y,z], "normal":[x,y,z]?},
//       {"type":"circular_arc", "center":[..], "u":[..], "v":[..],
//        "radius":R, "angle0":a0, "angle1":a1},
//       {"type":"helix", "p0":[..], "axis":[..], "u":[..],
//        "radius":a, "pitch":b, "t0":t0, "t1":t1},
//       {"type":"spline", "points":[[..],..], "resample_n":256?, "normal":[..]?}
//     ],
//     "knots":   [{"position":[x,y,z], "incidences":[[arc, abscissa],..]}],
//     "clamped": [{"arc":id, "end":"start"|"end"}]
//   }
// A knot incidence abscissa must land on an arc endpoint (0 or the arc
// length); "normal" requests a constant frame override and must not be
// parallel to the arc direction where it applies.
//
// Load schema:
//   {
//     "mode": "check"|"project",
//     "arcs":  [{"arc":id, "F_I":[[s,f1,f2,f3],..], "F_E":[[s,f1,f2,f3],..]}],
//     "knots": [{"knot":id, "f_I":[f1,f2,f3], "f_E":[f1,f2,f3]}],
//     "points":[{"arc":id, "s":s, "f":[f1,f2,f3], "class":"I"|"E"}]
//   }
// All sections are optional; missing tables mean zero load.

#include <rodlimit/geometry.hpp>
#include <rodlimit/loads.hpp>

#include <json.hpp>

#include <fstream>
#include <initializer_list>
#include <string>
#include <utility>
#include <vector>

namespace rodlimit {

namespace detail {

inline nlohmann::json load_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IOError("cannot open " + path);
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
}

inline void check_keys(const nlohmann::json& j,
                       std::initializer_list<const char*> allowed,
                       const std::string& where) {
  if (!j.is_object()) throw ParseError(where + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : allowed)
      if (it.key() == k) {
        known = true;
        break;
      }
    if (!known) throw ParseError(where + ": unknown key '" + it.key() + "'");
  }
}

inline double num_from(const nlohmann::json& j, const std::string& where) {
  if (!j.is_number()) throw ParseError(where + ": expected a number");
  return j.get<double>();
}

inline double num_field(const nlohmann::json& j, const char* key,
                        const std::string& where) {
  if (!j.contains(key))
    throw ParseError(where + ": missing key '" + key + "'");
  return num_from(j.at(key), where + "." + key);
}

inline Vec3 vec3_from(const nlohmann::json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3)
    throw ParseError(where + ": expected an array of 3 numbers");
  return Vec3(num_from(j[0], where), num_from(j[1], where),
              num_from(j[2], where));
}

inline Vec3 vec3_field(const nlohmann::json& j, const char* key,
                       const std::string& where) {
  if (!j.contains(key))
    throw ParseError(where + ": missing key '" + key + "'");
  return vec3_from(j.at(key), where + "." + key);
}

// Any unit vector perpendicular to d; used when a segment gives no normal.
inline Vec3 unit_perpendicular(const Vec3& d) {
  Vec3 t = d.normalized();
  Vec3 trial = std::abs(t.x()) < 0.9 ? Vec3(Vec3::UnitX()) : Vec3(Vec3::UnitY());
  return Vec3((trial - trial.dot(t) * t).normalized());
}

// Project a user-supplied frame normal onto the plane perpendicular to dir.
inline Vec3 orthonormal_normal(const Vec3& n, const Vec3& dir,
                               const std::string& where) {
  Vec3 t = dir.normalized();
  Vec3 p = n - n.dot(t) * t;
  if (p.norm() < 1e-8 * std::max(1.0, n.norm()))
    throw ParseError(where + ": normal is parallel to the arc direction");
  return Vec3(p.normalized());
}

inline ArcGeometry arc_from_json(const nlohmann::json& ja,
                                 const std::string& where) {
  if (!ja.contains("type") || !ja.at("type").is_string())
    throw ParseError(where + ": missing arc 'type'");
  const std::string type = ja.at("type").get<std::string>();
  try {
    if (type == "segment") {
      check_keys(ja, {"type", "start", "end", "normal"}, where);
      Vec3 a = vec3_field(ja, "start", where);
      Vec3 b = vec3_field(ja, "end", where);
      if ((b - a).norm() <= 0)
        throw ParseError(where + ": segment endpoints coincide");
      Vec3 n = ja.contains("normal")
                   ? orthonormal_normal(vec3_field(ja, "normal", where), b - a,
                                        where)
                   : unit_perpendicular(b - a);
      return make_segment(a, b, n);
    }
    if (type == "circular_arc") {
      check_keys(ja, {"type", "center", "u", "v", "radius", "angle0", "angle1"},
                 where);
      return make_circular_arc(
          vec3_field(ja, "center", where), vec3_field(ja, "u", where),
          vec3_field(ja, "v", where), num_field(ja, "radius", where),
          num_field(ja, "angle0", where), num_field(ja, "angle1", where));
    }
    if (type == "helix") {
      check_keys(ja, {"type", "p0", "axis", "u", "radius", "pitch", "t0", "t1"},
                 where);
      return make_helix(vec3_field(ja, "p0", where),
                        vec3_field(ja, "axis", where),
                        vec3_field(ja, "u", where),
                        num_field(ja, "radius", where),
                        num_field(ja, "pitch", where),
                        num_field(ja, "t0", where), num_field(ja, "t1", where));
    }
    if (type == "spline") {
      check_keys(ja, {"type", "points", "resample_n", "normal"}, where);
      if (!ja.contains("points") || !ja.at("points").is_array())
        throw ParseError(where + ": spline needs a 'points' array");
      std::vector<Vec3> pts;
      for (std::size_t i = 0; i < ja.at("points").size(); ++i)
        pts.push_back(vec3_from(ja.at("points")[i],
                                where + ".points[" + std::to_string(i) + "]"));
      int rn = 256;
      if (ja.contains("resample_n"))
        rn = static_cast<int>(num_field(ja, "resample_n", where));
      std::function<Vec3(double)> override_normal = nullptr;
      if (ja.contains("normal")) {
        Vec3 n = vec3_field(ja, "normal", where).normalized();
        override_normal = [n](double) -> Vec3 { return n; };
      }
      return make_spline(pts, rn, std::move(override_normal));
    }
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    // constructor rejected the parameters: still an input-file problem
    throw ParseError(where + ": " + e.what());
  }
  throw ParseError(where + ": unknown arc type '" + type + "'");
}

// Map an incidence abscissa onto end 0 or 1; anything not at an endpoint is
// rejected because junctions live at arc extremities.
inline int end_from_abscissa(double a, double L, const std::string& where) {
  double tol = 1e-9 * std::max(1.0, L);
  if (std::abs(a) <= tol) return 0;
  if (std::abs(a - L) <= tol) return 1;
  throw ParseError(where + ": abscissa " + std::to_string(a) +
                   " is not an endpoint of an arc of length " +
                   std::to_string(L));
}

}  // namespace detail

inline Skeleton skeleton_from_json(const nlohmann::json& j) {
  detail::check_keys(j, {"arcs", "knots", "clamped"}, "skeleton");
  if (!j.contains("arcs") || !j.at("arcs").is_array() || j.at("arcs").empty())
    throw ParseError("skeleton: 'arcs' must be a non-empty array");

  Skeleton skel;
  for (std::size_t i = 0; i < j.at("arcs").size(); ++i)
    skel.arcs.push_back(detail::arc_from_json(
        j.at("arcs")[i], "arcs[" + std::to_string(i) + "]"));

  const int n_arcs = static_cast<int>(skel.arcs.size());
  if (j.contains("knots")) {
    if (!j.at("knots").is_array())
      throw ParseError("skeleton: 'knots' must be an array");
    for (std::size_t i = 0; i < j.at("knots").size(); ++i) {
      const auto& jk = j.at("knots")[i];
      std::string where = "knots[" + std::to_string(i) + "]";
      detail::check_keys(jk, {"position", "incidences"}, where);
      Knot kn;
      kn.position = detail::vec3_field(jk, "position", where);
      if (!jk.contains("incidences") || !jk.at("incidences").is_array() ||
          jk.at("incidences").size() < 2)
        throw ParseError(where + ": needs >= 2 incidences");
      for (const auto& ji : jk.at("incidences")) {
        if (!ji.is_array() || ji.size() != 2)
          throw ParseError(where + ": incidence must be [arc, abscissa]");
        int arc = static_cast<int>(detail::num_from(ji[0], where));
        if (arc < 0 || arc >= n_arcs)
          throw ParseError(where + ": incidence references unknown arc " +
                           std::to_string(arc));
        double a = detail::num_from(ji[1], where);
        kn.incidences.push_back(
            {arc, detail::end_from_abscissa(a, skel.arcs[arc].length(), where)});
      }
      skel.knots.push_back(std::move(kn));
    }
  }

  if (j.contains("clamped")) {
    if (!j.at("clamped").is_array())
      throw ParseError("skeleton: 'clamped' must be an array");
    for (std::size_t i = 0; i < j.at("clamped").size(); ++i) {
      const auto& jc = j.at("clamped")[i];
      std::string where = "clamped[" + std::to_string(i) + "]";
      detail::check_keys(jc, {"arc", "end"}, where);
      int arc = static_cast<int>(detail::num_field(jc, "arc", where));
      if (arc < 0 || arc >= n_arcs)
        throw ParseError(where + ": references unknown arc " +
                         std::to_string(arc));
      if (!jc.contains("end") || !jc.at("end").is_string())
        throw ParseError(where + ": 'end' must be \"start\" or \"end\"");
      const std::string e = jc.at("end").get<std::string>();
      if (e != "start" && e != "end")
        throw ParseError(where + ": 'end' must be \"start\" or \"end\"");
      skel.clamps.push_back({arc, e == "start" ? 0 : 1});
    }
  }
  return skel;
}

inline Skeleton read_skeleton(const std::string& path) {
  return skeleton_from_json(detail::load_json_file(path));
}

// ---------------------------------------------------------------------------

struct LoadsFile {
  LoadCase loads;
  std::string mode = "check";  // orthogonality handling requested by the file
};

inline LoadsFile loads_from_json(const nlohmann::json& j,
                                 const Skeleton& skel) {
  detail::check_keys(j, {"mode", "arcs", "knots", "points"}, "loads");
  LoadsFile out;
  if (j.contains("mode")) {
    if (!j.at("mode").is_string())
      throw ParseError("loads.mode: expected \"check\" or \"project\"");
    out.mode = j.at("mode").get<std::string>();
    if (out.mode != "check" && out.mode != "project")
      throw ParseError("loads.mode: expected \"check\" or \"project\"");
  }

  const int n_arcs = static_cast<int>(skel.arcs.size());
  auto parse_table = [](const nlohmann::json& jt, const std::string& where) {
    LoadTable t;
    if (!jt.is_array())
      throw ParseError(where + ": expected an array of [s,f1,f2,f3] rows");
    for (const auto& row : jt) {
      if (!row.is_array() || row.size() != 4)
        throw ParseError(where + ": row must be [s,f1,f2,f3]");
      t.s.push_back(detail::num_from(row[0], where));
      t.F.emplace_back(detail::num_from(row[1], where),
                       detail::num_from(row[2], where),
                       detail::num_from(row[3], where));
    }
    return t;
  };

  if (j.contains("arcs")) {
    if (!j.at("arcs").is_array())
      throw ParseError("loads: 'arcs' must be an array");
    out.loads.F_I.assign(skel.arcs.size(), LoadTable{});
    out.loads.F_E.assign(skel.arcs.size(), LoadTable{});
    for (std::size_t i = 0; i < j.at("arcs").size(); ++i) {
      const auto& ja = j.at("arcs")[i];
      std::string where = "loads.arcs[" + std::to_string(i) + "]";
      detail::check_keys(ja, {"arc", "F_I", "F_E"}, where);
      int arc = static_cast<int>(detail::num_field(ja, "arc", where));
      if (arc < 0 || arc >= n_arcs)
        throw ParseError(where + ": references unknown arc " +
                         std::to_string(arc));
      if (ja.contains("F_I"))
        out.loads.F_I[arc] = parse_table(ja.at("F_I"), where + ".F_I");
      if (ja.contains("F_E"))
        out.loads.F_E[arc] = parse_table(ja.at("F_E"), where + ".F_E");
    }
  }

  if (j.contains("knots")) {
    if (!j.at("knots").is_array())
      throw ParseError("loads: 'knots' must be an array");
    for (std::size_t i = 0; i < j.at("knots").size(); ++i) {
      const auto& jk = j.at("knots")[i];
      std::string where = "loads.knots[" + std::to_string(i) + "]";
      detail::check_keys(jk, {"knot", "f_I", "f_E"}, where);
      KnotLoad kl;
      kl.knot = static_cast<int>(detail::num_field(jk, "knot", where));
      if (jk.contains("f_I")) kl.f_I = detail::vec3_field(jk, "f_I", where);
      if (jk.contains("f_E")) kl.f_E = detail::vec3_field(jk, "f_E", where);
      out.loads.knot_loads.push_back(kl);
    }
  }

  if (j.contains("points")) {
    if (!j.at("points").is_array())
      throw ParseError("loads: 'points' must be an array");
    for (std::size_t i = 0; i < j.at("points").size(); ++i) {
      const auto& jp = j.at("points")[i];
      std::string where = "loads.points[" + std::to_string(i) + "]";
      detail::check_keys(jp, {"arc", "s", "f", "class"}, where);
      PointLoad pl;
      pl.arc = static_cast<int>(detail::num_field(jp, "arc", where));
      pl.s = detail::num_field(jp, "s", where);
      pl.f = detail::vec3_field(jp, "f", where);
      if (!jp.contains("class") || !jp.at("class").is_string())
        throw ParseError(where + ": 'class' must be \"I\" or \"E\"");
      const std::string c = jp.at("class").get<std::string>();
      if (c != "I" && c != "E")
        throw ParseError(where + ": 'class' must be \"I\" or \"E\"");
      pl.cls = c[0];
      out.loads.point_loads.push_back(pl);
    }
  }

  out.loads.validate(skel);
  return out;
}

inline LoadsFile read_loads(const std::string& path, const Skeleton& skel) {
  return loads_from_json(detail::load_json_file(path), skel);
}

// ---------------------------------------------------------------------------

inline nlohmann::ordered_json validation_json(const ValidationReport& rep) {
  nlohmann::ordered_json checks = nlohmann::ordered_json::array();
  for (const auto& e : rep.entries) {
    nlohmann::ordered_json c;
    c["name"] = e.name;
    c["pass"] = e.pass;
    c["measured"] = e.measured;
    if (!e.detail.empty()) c["detail"] = e.detail;
    checks.push_back(std::move(c));
  }
  nlohmann::ordered_json j;
  j["checks"] = std::move(checks);
  j["delta0"] = rep.delta0;
  j["usable"] = rep.usable;
  return j;
}

}  // namespace rodlimit
