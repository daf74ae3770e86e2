#include "fdmlab/attack.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "fdmlab/digest.hpp"
#include "fdmlab/errors.hpp"
#include "fdmlab/rng.hpp"
#include "json.hpp"

namespace fdmlab::attack {

using gcode::GcodeLine;
using gcode::GcodeProgram;
using gcode::InterpretResult;
using gcode::LineKind;
using gcode::MotionStep;

namespace {

constexpr double kDefaultUnderFactor = 0.72;  // 4.32 g vs 6.03 g benign
constexpr double kDefaultOverFactor = 1.49;   // 9.00 g vs 6.03 g benign
constexpr double kDefaultStealthScale = 0.98;

// Accumulates the mutated program plus the bookkeeping the audit needs.
struct Builder {
  const GcodeProgram& before;
  GcodeProgram after;
  AttackAudit audit;

  explicit Builder(const GcodeProgram& b) : before(b) {
    after.final_positioning = b.final_positioning;
    after.final_extrusion = b.final_extrusion;
    after.lines.reserve(b.lines.size());
  }

  void push_original(std::size_t i, GcodeLine line) {
    if (serialize_line(line) != serialize_line(before.lines[i]))
      audit.modified_lines.push_back(i);
    after.lines.push_back(std::move(line));
  }

  void push_inserted(GcodeLine line) {
    audit.inserted_lines.push_back(after.lines.size());
    after.lines.push_back(std::move(line));
  }

  Mutation finish(std::string echo) {
    audit.spec_echo = std::move(echo);
    audit.digest_before = digest_hex(serialize_program(before));
    audit.digest_after = digest_hex(serialize_program(after));
    double ext_before = gcode::total_extrusion(before);
    double ext_after = gcode::total_extrusion(after);
    audit.extrusion_delta_mm = ext_after - ext_before;
    try {
      gcode::BoundingBox a = gcode::bounding_box(before);
      gcode::BoundingBox b = gcode::bounding_box(after);
      audit.bbox_extent_delta[0] = (b.max.x - b.min.x) - (a.max.x - a.min.x);
      audit.bbox_extent_delta[1] = (b.max.y - b.min.y) - (a.max.y - a.min.y);
      audit.bbox_extent_delta[2] = (b.max.z - b.min.z) - (a.max.z - a.min.z);
      audit.bbox_valid = true;
    } catch (const DataError&) {
      audit.bbox_valid = false;
    }
    return {std::move(after), std::move(audit)};
  }
};

Mutation identity_mutation(const GcodeProgram& prog, std::string echo,
                           std::vector<std::string> warnings) {
  Builder b(prog);
  for (std::size_t i = 0; i < prog.lines.size(); ++i)
    b.push_original(i, prog.lines[i]);
  b.audit.warnings = std::move(warnings);
  return b.finish(std::move(echo));
}

struct ELineInfo {
  double delta = 0.0;
  double logical_after = 0.0;
  bool absolute = true;
};

// Per-line extrusion facts for G0/G1 lines carrying an E word.
std::map<std::size_t, ELineInfo> e_line_facts(const GcodeProgram& prog,
                                              const InterpretResult& ir) {
  std::map<std::size_t, ELineInfo> facts;
  for (const MotionStep& s : ir.steps) {
    const GcodeLine& ln = prog.lines[s.line_index];
    if (!ln.find('E')) continue;
    facts[s.line_index] = {
        s.e_delta, s.after.logical_e,
        s.after.extrusion == gcode::ExtrusionMode::Absolute};
  }
  return facts;
}

// suffix[i] == true when some line at index >= i carries an absolute-mode E
// word; used to decide whether a G92 re-anchor is needed.
std::vector<char> abs_e_suffix(const GcodeProgram& prog,
                               const std::map<std::size_t, ELineInfo>& facts) {
  std::vector<char> suffix(prog.lines.size() + 1, 0);
  for (std::size_t i = prog.lines.size(); i-- > 0;) {
    suffix[i] = suffix[i + 1];
    auto it = facts.find(i);
    if (it != facts.end() && it->second.absolute) suffix[i] = 1;
  }
  return suffix;
}

GcodeLine make_g92_e(double value) {
  GcodeLine ln;
  ln.kind = LineKind::Command;
  ln.letter = 'G';
  ln.number = 92;
  ln.params.push_back({'E', value, true});
  return ln;
}

GcodeLine make_move(int code, std::vector<gcode::Param> params) {
  GcodeLine ln;
  ln.kind = LineKind::Command;
  ln.letter = 'G';
  ln.number = code;
  ln.params = std::move(params);
  return ln;
}

}  // namespace

const char* attack_kind_name(AttackKind k) {
  switch (k) {
    case AttackKind::UnderExtrusion: return "under_extrusion";
    case AttackKind::OverExtrusion: return "over_extrusion";
    case AttackKind::NoiseInjection: return "noise_injection";
    case AttackKind::DimensionalChange: return "dimensional_change";
    case AttackKind::CavityInsertion: return "cavity_insertion";
    case AttackKind::Exfiltration: return "exfiltration";
  }
  return "unknown";
}

AttackKind attack_kind_from_name(const std::string& name) {
  if (name == "under_extrusion" || name == "under") return AttackKind::UnderExtrusion;
  if (name == "over_extrusion" || name == "over") return AttackKind::OverExtrusion;
  if (name == "noise_injection" || name == "noise") return AttackKind::NoiseInjection;
  if (name == "dimensional_change" || name == "scale" || name == "dimensional")
    return AttackKind::DimensionalChange;
  if (name == "cavity_insertion" || name == "cavity") return AttackKind::CavityInsertion;
  if (name == "exfiltration" || name == "exfil") return AttackKind::Exfiltration;
  throw ArgError("unknown attack kind: " + name);
}

LineRange resolve_region(const GcodeProgram& prog, const Region& region) {
  LineRange r;
  const std::size_t n = prog.lines.size();
  if (n == 0) return r;
  switch (region.kind) {
    case Region::Kind::All:
      r = {0, n - 1, false};
      break;
    case Region::Kind::Lines: {
      if (region.a > region.b) throw ArgError("region: first line > last line");
      if (region.a >= n) return r;  // beyond the program: empty
      r = {region.a, std::min(region.b, n - 1), false};
      break;
    }
    case Region::Kind::Layers: {
      if (region.a < 1) throw ArgError("region: layer ordinals are 1-based");
      if (region.a > region.b) throw ArgError("region: first layer > last layer");
      gcode::LayerIndex idx = gcode::build_layer_index(prog);
      if (region.a > idx.size()) return r;  // empty
      std::size_t hi = std::min<std::size_t>(region.b, idx.size());
      std::size_t first =
          region.a == 1 ? 0 : idx[region.a - 2].last_line + 1;
      r = {first, idx[hi - 1].last_line, false};
      break;
    }
  }
  return r;
}

void AttackSpec::validate() const {
  if (factor < 0 || (kind != AttackKind::UnderExtrusion &&
                     kind != AttackKind::OverExtrusion && factor != 0))
    throw ArgError("factor only applies to extrusion scaling");
  if ((kind == AttackKind::UnderExtrusion ||
       kind == AttackKind::OverExtrusion) &&
      factor != 0 && !(factor > 0))
    throw ArgError("factor must be > 0");
  if (rate < 0) throw ArgError("rate must be >= 0");
  if (amplitude < 0) throw ArgError("amplitude must be >= 0");
  if (!(sx > 0 && sy > 0 && sz > 0))
    throw ArgError("scale components must be > 0");
  if (kind == AttackKind::CavityInsertion && !(z_lo < z_hi))
    throw ArgError("cavity z-range must satisfy z_lo < z_hi");
}

std::string AttackSpec::echo() const {
  nlohmann::json j;
  j["kind"] = attack_kind_name(kind);
  switch (kind) {
    case AttackKind::UnderExtrusion:
    case AttackKind::OverExtrusion:
      j["factor"] = factor != 0 ? factor
                    : (kind == AttackKind::UnderExtrusion ? kDefaultUnderFactor
                                                          : kDefaultOverFactor);
      break;
    case AttackKind::NoiseInjection:
      j["rate"] = rate;
      j["amplitude"] = amplitude;
      j["extruding"] = extruding_noise;
      j["seed"] = seed;
      break;
    case AttackKind::DimensionalChange:
      j["scale"] = {sx, sy, sz};
      if (pivot_xy) j["pivot"] = {pivot_xy->first, pivot_xy->second};
      break;
    case AttackKind::CavityInsertion:
      j["z_range"] = {z_lo, z_hi};
      break;
    case AttackKind::Exfiltration:
      j["sink"] = sink;
      break;
  }
  if (region.kind == Region::Kind::Lines)
    j["region_lines"] = {region.a, region.b};
  else if (region.kind == Region::Kind::Layers)
    j["region_layers"] = {region.a, region.b};
  return j.dump();
}

AttackSpec parse_attack_spec_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("attack spec: invalid JSON: ") + e.what());
  }
  AttackSpec spec;
  try {
    if (!j.contains("kind")) throw DataError("attack spec: missing 'kind'");
    spec.kind = attack_kind_from_name(j.at("kind").get<std::string>());
    if (j.contains("factor")) spec.factor = j["factor"].get<double>();
    if (j.contains("rate")) spec.rate = j["rate"].get<double>();
    if (j.contains("amplitude")) spec.amplitude = j["amplitude"].get<double>();
    if (j.contains("extruding")) spec.extruding_noise = j["extruding"].get<bool>();
    if (j.contains("scale")) {
      auto s = j["scale"];
      if (s.is_array() && s.size() == 3) {
        spec.sx = s[0].get<double>();
        spec.sy = s[1].get<double>();
        spec.sz = s[2].get<double>();
      } else if (s.is_number()) {
        spec.sx = spec.sy = spec.sz = s.get<double>();
      } else {
        throw DataError("attack spec: 'scale' must be a number or [sx,sy,sz]");
      }
    } else if (spec.kind == AttackKind::DimensionalChange) {
      spec.sx = spec.sy = spec.sz = kDefaultStealthScale;
    }
    if (j.contains("pivot")) {
      auto p = j["pivot"];
      spec.pivot_xy = {p.at(0).get<double>(), p.at(1).get<double>()};
    }
    if (j.contains("z_range")) {
      spec.z_lo = j["z_range"].at(0).get<double>();
      spec.z_hi = j["z_range"].at(1).get<double>();
    }
    if (j.contains("seed")) spec.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("sink")) spec.sink = j["sink"].get<std::string>();
    if (j.contains("region")) {
      auto r = j["region"];
      if (r.contains("lines")) {
        spec.region.kind = Region::Kind::Lines;
        spec.region.a = r["lines"].at(0).get<std::size_t>();
        spec.region.b = r["lines"].at(1).get<std::size_t>();
      } else if (r.contains("layers")) {
        spec.region.kind = Region::Kind::Layers;
        spec.region.a = r["layers"].at(0).get<std::size_t>();
        spec.region.b = r["layers"].at(1).get<std::size_t>();
      } else {
        throw DataError("attack spec: region needs 'lines' or 'layers'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("attack spec: ") + e.what());
  }
  spec.validate();
  return spec;
}

std::string audit_json(const AttackAudit& a) {
  nlohmann::json j;
  j["spec"] = nlohmann::json::parse(a.spec_echo.empty() ? "{}" : a.spec_echo);
  j["modified_lines"] = a.modified_lines;
  j["inserted_lines"] = a.inserted_lines;
  j["removed_lines"] = a.removed_lines;
  j["modified"] = a.modified_lines.size();
  j["inserted"] = a.inserted_lines.size();
  j["removed"] = a.removed_lines.size();
  j["extrusion_delta_mm"] = a.extrusion_delta_mm;
  if (a.bbox_valid)
    j["bbox_extent_delta"] = {a.bbox_extent_delta[0], a.bbox_extent_delta[1],
                              a.bbox_extent_delta[2]};
  else
    j["bbox_extent_delta"] = nullptr;
  j["digest_before"] = a.digest_before;
  j["digest_after"] = a.digest_after;
  j["warnings"] = a.warnings;
  return j.dump(2);
}

Mutation scale_extrusion(const GcodeProgram& prog, double factor,
                         const Region& region) {
  if (!(factor > 0)) throw ArgError("scale_extrusion: factor must be > 0");
  LineRange r = resolve_region(prog, region);
  std::string echo =
      "{\"kind\":\"scale_extrusion\",\"factor\":" + gcode::format_number(factor) +
      "}";

  InterpretResult ir = gcode::interpret(prog);
  auto facts = e_line_facts(prog, ir);

  std::size_t last_e_in_region = prog.lines.size();
  if (!r.empty) {
    for (auto& [idx, info] : facts) {
      (void)info;
      if (idx >= r.first && idx <= r.last) last_e_in_region = idx;
    }
  }
  if (last_e_in_region == prog.lines.size())
    return identity_mutation(prog, echo,
                             {"region selects no extruding lines; no-op"});
  if (factor == 1.0) return identity_mutation(prog, echo, {});

  auto suffix = abs_e_suffix(prog, facts);
  Builder b(prog);
  double orig_logical = 0.0, mut_logical = 0.0;

  for (std::size_t i = 0; i < prog.lines.size(); ++i) {
    GcodeLine ln = prog.lines[i];
    if (ln.is('G', 92)) {
      if (const gcode::Param* e = ln.find('E'); e && e->has_value) {
        orig_logical = e->value;
        mut_logical = e->value;
      }
      b.push_original(i, std::move(ln));
      continue;
    }
    auto it = facts.find(i);
    if (it == facts.end()) {
      b.push_original(i, std::move(ln));
      continue;
    }
    const ELineInfo& info = it->second;
    bool in_region = !r.empty && i >= r.first && i <= r.last;
    if (in_region) {
      double nd = factor * info.delta;
      if (info.absolute) {
        double lit = mut_logical + nd;
        ln.set('E', lit);
        mut_logical = lit;
      } else {
        double lit = factor * ln.find('E')->value;
        ln.set('E', lit);
        mut_logical += lit;
      }
    } else {
      if (info.absolute)
        mut_logical = ln.find('E')->value;
      else
        mut_logical += ln.find('E')->value;
    }
    orig_logical = info.logical_after;
    b.push_original(i, std::move(ln));
    if (i == last_e_in_region && mut_logical != orig_logical &&
        suffix[i + 1]) {
      b.push_inserted(make_g92_e(orig_logical));
      mut_logical = orig_logical;
    }
  }
  return b.finish(echo);
}

Mutation inject_noise(const GcodeProgram& prog, double rate, double amplitude,
                      std::uint64_t seed, const Region& region,
                      bool extruding) {
  if (rate < 0) throw ArgError("inject_noise: rate must be >= 0");
  if (amplitude < 0) throw ArgError("inject_noise: amplitude must be >= 0");
  LineRange r = resolve_region(prog, region);

  nlohmann::json ej;
  ej["kind"] = "inject_noise";
  ej["rate"] = rate;
  ej["amplitude"] = amplitude;
  ej["seed"] = seed;
  ej["extruding"] = extruding;
  std::string echo = ej.dump();

  InterpretResult ir = gcode::interpret(prog);
  std::vector<const MotionStep*> cand;
  for (const MotionStep& s : ir.steps)
    if (!r.empty && s.line_index >= r.first && s.line_index <= r.last)
      cand.push_back(&s);

  std::size_t n_pairs = 0;
  if (rate > 0 && !cand.empty()) {
    n_pairs = static_cast<std::size_t>(
        std::floor(static_cast<double>(cand.size()) * rate / 100.0));
    if (n_pairs == 0) n_pairs = 1;
    if (n_pairs > cand.size()) n_pairs = cand.size();
  }
  if (n_pairs == 0) {
    std::vector<std::string> warn;
    if (rate > 0) warn.push_back("region contains no motion lines; no-op");
    return identity_mutation(prog, echo, std::move(warn));
  }

  Rng rng(seed);
  Rng sel = rng.fork("select");
  Rng jit = rng.fork("jitter");
  std::vector<std::size_t> order(cand.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  sel.shuffle(order);
  order.resize(n_pairs);
  std::sort(order.begin(), order.end());

  // jitter displacement per insertion, drawn in candidate order so the
  // byte stream is a pure function of (seed, program, rate, amplitude)
  std::map<std::size_t, std::pair<double, double>> jitter;  // line -> (dx,dy)
  double cap = std::max(0.0, amplitude - 1e-5);
  for (std::size_t k : order) {
    double dx = jit.uniform(-cap, cap);
    double dy = jit.uniform(-cap, cap);
    jitter[cand[k]->line_index] = {dx, dy};
  }
  std::map<std::size_t, const MotionStep*> step_at;
  for (std::size_t k : order) step_at[cand[k]->line_index] = cand[k];

  Builder b(prog);
  for (std::size_t i = 0; i < prog.lines.size(); ++i) {
    b.push_original(i, prog.lines[i]);
    auto it = jitter.find(i);
    if (it == jitter.end()) continue;
    const MotionStep* s = step_at[i];
    auto [dx, dy] = it->second;
    bool abs_pos =
        s->after.positioning == gcode::PositioningMode::Absolute;
    bool abs_e = s->after.extrusion == gcode::ExtrusionMode::Absolute;
    double leg = std::sqrt(dx * dx + dy * dy);
    double e_leg = 0.05 * leg;  // nominal flow for extruding jitter
    double le = s->after.logical_e;

    if (abs_pos) {
      double lx = s->after.position.x - s->after.origin_offset.x;
      double ly = s->after.position.y - s->after.origin_offset.y;
      if (!extruding) {
        b.push_inserted(make_move(0, {{'X', lx + dx, true}, {'Y', ly + dy, true}}));
        b.push_inserted(make_move(0, {{'X', lx, true}, {'Y', ly, true}}));
      } else {
        double e1 = abs_e ? le + e_leg : e_leg;
        double e2 = abs_e ? le + 2 * e_leg : e_leg;
        b.push_inserted(make_move(
            1, {{'X', lx + dx, true}, {'Y', ly + dy, true}, {'E', e1, true}}));
        b.push_inserted(
            make_move(1, {{'X', lx, true}, {'Y', ly, true}, {'E', e2, true}}));
        if (abs_e) b.push_inserted(make_g92_e(le));
      }
    } else {
      if (!extruding) {
        b.push_inserted(make_move(0, {{'X', dx, true}, {'Y', dy, true}}));
        b.push_inserted(make_move(0, {{'X', -dx, true}, {'Y', -dy, true}}));
      } else {
        double e1 = abs_e ? le + e_leg : e_leg;
        double e2 = abs_e ? le + 2 * e_leg : e_leg;
        b.push_inserted(
            make_move(1, {{'X', dx, true}, {'Y', dy, true}, {'E', e1, true}}));
        b.push_inserted(
            make_move(1, {{'X', -dx, true}, {'Y', -dy, true}, {'E', e2, true}}));
        if (abs_e) b.push_inserted(make_g92_e(le));
      }
    }
  }
  return b.finish(echo);
}

Mutation scale_dimensions(const GcodeProgram& prog, Scale3 scale,
                          const Region& region,
                          std::optional<std::pair<double, double>> pivot_xy) {
  if (!(scale.x > 0 && scale.y > 0 && scale.z > 0))
    throw ArgError("scale_dimensions: scale components must be > 0");
  LineRange r = resolve_region(prog, region);

  nlohmann::json ej;
  ej["kind"] = "scale_dimensions";
  ej["scale"] = {scale.x, scale.y, scale.z};
  std::string echo = ej.dump();

  if (r.empty)
    return identity_mutation(prog, echo, {"region is empty; no-op"});

  InterpretResult ir = gcode::interpret(prog);
  std::map<std::size_t, const MotionStep*> step_at;
  for (const MotionStep& s : ir.steps) step_at[s.line_index] = &s;

  bool any_motion = false;
  for (auto& [idx, s] : step_at) {
    (void)s;
    if (idx >= r.first && idx <= r.last) any_motion = true;
  }
  if (!any_motion)
    return identity_mutation(prog, echo,
                             {"region contains no motion lines; no-op"});

  double px = 0.0, py = 0.0;
  if (pivot_xy) {
    px = pivot_xy->first;
    py = pivot_xy->second;
  } else {
    // region bounding-box centre; falls back to all motion endpoints when
    // the region never extrudes
    bool got = false;
    double mnx = 0, mxx = 0, mny = 0, mxy = 0;
    for (int pass = 0; pass < 2 && !got; ++pass) {
      for (const MotionStep& s : ir.steps) {
        if (s.line_index < r.first || s.line_index > r.last) continue;
        if (pass == 0 && !s.extruding) continue;
        for (const gcode::Vec3& v : {s.from, s.after.position}) {
          if (!got) {
            mnx = mxx = v.x;
            mny = mxy = v.y;
            got = true;
          } else {
            mnx = std::min(mnx, v.x);
            mxx = std::max(mxx, v.x);
            mny = std::min(mny, v.y);
            mxy = std::max(mxy, v.y);
          }
        }
      }
    }
    px = (mnx + mxx) / 2.0;
    py = (mny + mxy) / 2.0;
  }

  const bool cx = scale.x != 1.0, cy = scale.y != 1.0, cz = scale.z != 1.0;
  if (!cx && !cy && !cz) return identity_mutation(prog, echo, {});

  Builder b(prog);
  for (std::size_t i = 0; i < prog.lines.size(); ++i) {
    GcodeLine ln = prog.lines[i];
    bool in_region = i >= r.first && i <= r.last;
    if (in_region && ln.kind == LineKind::Command) {
      bool is_move = ln.is('G', 0) || ln.is('G', 1);
      bool is_g92 = ln.is('G', 92);
      if (is_move || is_g92) {
        bool relative =
            is_move && step_at.count(i) &&
            step_at[i]->after.positioning == gcode::PositioningMode::Relative;
        auto rewrite = [&](char axis, double s, double pivot, bool changed) {
          if (!changed) return;
          const gcode::Param* p = ln.find(axis);
          if (!p || !p->has_value) return;
          double v = p->value;
          ln.set(axis, relative ? s * v : pivot + s * (v - pivot));
        };
        rewrite('X', scale.x, px, cx);
        rewrite('Y', scale.y, py, cy);
        rewrite('Z', scale.z, 0.0, cz);
      }
    }
    b.push_original(i, std::move(ln));
  }
  return b.finish(echo);
}

Mutation insert_cavity(const GcodeProgram& prog, double z_lo, double z_hi,
                       const Region& region) {
  if (!(z_lo < z_hi)) throw ArgError("insert_cavity: need z_lo < z_hi");

  nlohmann::json ej;
  ej["kind"] = "insert_cavity";
  ej["z_range"] = {z_lo, z_hi};
  if (region.kind != Region::Kind::All)
    ej["region"] = {region.kind == Region::Kind::Lines ? "lines" : "layers",
                    region.a, region.b};
  std::string echo = ej.dump();

  LineRange rr = resolve_region(prog, region);
  if (rr.empty)
    return identity_mutation(prog, echo, {"empty region; no-op"});

  InterpretResult ir = gcode::interpret(prog);
  auto facts = e_line_facts(prog, ir);

  // Affected: E-carrying motion lines whose move ends inside the slab.
  std::vector<char> affected(prog.lines.size(), 0);
  bool any = false;
  for (const MotionStep& s : ir.steps) {
    if (s.line_index < rr.first || s.line_index > rr.last) continue;
    if (!prog.lines[s.line_index].find('E')) continue;
    double z = s.after.position.z;
    if (z >= z_lo && z <= z_hi) {
      affected[s.line_index] = 1;
      any = true;
    }
  }
  if (!any)
    return identity_mutation(prog, echo,
                             {"z interval intersects no layers; no-op"});

  auto suffix = abs_e_suffix(prog, facts);
  // next E-carrying motion line at index > i (or n when none)
  std::vector<std::size_t> next_e(prog.lines.size() + 1, prog.lines.size());
  for (std::size_t i = prog.lines.size(); i-- > 0;)
    next_e[i] = facts.count(i) ? i : next_e[i + 1];

  Builder b(prog);
  double orig_logical = 0.0, mut_logical = 0.0;
  for (std::size_t i = 0; i < prog.lines.size(); ++i) {
    GcodeLine ln = prog.lines[i];
    if (ln.is('G', 92)) {
      if (const gcode::Param* e = ln.find('E'); e && e->has_value) {
        orig_logical = e->value;
        mut_logical = e->value;
      }
      b.push_original(i, std::move(ln));
      continue;
    }
    auto it = facts.find(i);
    if (it == facts.end()) {
      b.push_original(i, std::move(ln));
      continue;
    }
    const ELineInfo& info = it->second;
    if (affected[i]) {
      ln.remove('E');
      orig_logical = info.logical_after;  // mut chain: no E word, unchanged
    } else {
      if (info.absolute)
        mut_logical = ln.find('E')->value;
      else
        mut_logical += ln.find('E')->value;
      orig_logical = info.logical_after;
    }
    b.push_original(i, std::move(ln));
    if (affected[i]) {
      std::size_t j = next_e[i + 1];
      bool end_of_run = j >= prog.lines.size() || !affected[j];
      if (end_of_run && mut_logical != orig_logical && suffix[i + 1]) {
        b.push_inserted(make_g92_e(orig_logical));
        mut_logical = orig_logical;
      }
    }
  }
  return b.finish(echo);
}

ExfilEvent exfiltrate_bytes(const std::string& bytes, double timestamp_s,
                            const std::string& source,
                            const std::string& sink) {
  ExfilEvent ev;
  ev.timestamp_s = timestamp_s;
  ev.digest = digest_hex(bytes);
  ev.size_bytes = bytes.size();
  ev.source = source;
  ev.sink = sink;
  return ev;
}

Mutation apply_attack(const GcodeProgram& prog, const AttackSpec& spec) {
  spec.validate();
  switch (spec.kind) {
    case AttackKind::UnderExtrusion:
      return scale_extrusion(
          prog, spec.factor != 0 ? spec.factor : kDefaultUnderFactor,
          spec.region);
    case AttackKind::OverExtrusion:
      return scale_extrusion(
          prog, spec.factor != 0 ? spec.factor : kDefaultOverFactor,
          spec.region);
    case AttackKind::NoiseInjection:
      return inject_noise(prog, spec.rate, spec.amplitude, spec.seed,
                          spec.region, spec.extruding_noise);
    case AttackKind::DimensionalChange:
      return scale_dimensions(prog, {spec.sx, spec.sy, spec.sz}, spec.region,
                              spec.pivot_xy);
    case AttackKind::CavityInsertion:
      return insert_cavity(prog, spec.z_lo, spec.z_hi, spec.region);
    case AttackKind::Exfiltration:
      return identity_mutation(prog, spec.echo(),
                               {"exfiltration leaves the program unmodified"});
  }
  throw ArgError("apply_attack: unhandled kind");
}

}  // namespace fdmlab::attack
