#include "fdmlab/gcode.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>

#include "fdmlab/errors.hpp"
#include "json.hpp"

namespace fdmlab::gcode {

namespace {

constexpr int kGCodes[] = {0, 1, 4, 28, 90, 91, 92};
constexpr int kMCodes[] = {0,   23,  24,  25,  28,  82,  83, 104,
                           109, 111, 154, 206, 221, 404, 579, 928};

bool is_sd_text_command(char letter, int number) {
  return letter == 'M' && (number == 23 || number == 28 || number == 928);
}

std::string_view trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t')) --e;
  return s.substr(b, e - b);
}

void skip_ws(const char*& p, const char* end) {
  while (p < end && (*p == ' ' || *p == '\t')) ++p;
}

// G-code numeric literal: sign, digits, at most one dot.  No exponents.
bool scan_number(const char*& p, const char* end, double& out) {
  const char* q = p;
  if (q < end && (*q == '+' || *q == '-')) ++q;
  bool digits = false, dot = false;
  while (q < end) {
    if (std::isdigit(static_cast<unsigned char>(*q))) {
      digits = true;
      ++q;
    } else if (*q == '.' && !dot) {
      dot = true;
      ++q;
    } else {
      break;
    }
  }
  if (!digits) return false;
  std::string tmp(p, q);
  out = std::strtod(tmp.c_str(), nullptr);
  p = q;
  return true;
}

bool scan_uint(const char*& p, const char* end, int& out) {
  const char* q = p;
  long v = 0;
  bool digits = false;
  while (q < end && std::isdigit(static_cast<unsigned char>(*q))) {
    v = v * 10 + (*q - '0');
    if (v > 100000) return false;
    digits = true;
    ++q;
  }
  if (!digits) return false;
  out = static_cast<int>(v);
  p = q;
  return true;
}

GcodeLine parse_line(std::string_view raw, std::size_t line_no) {
  GcodeLine line;
  line.raw = std::string(raw);

  std::string_view code = raw;
  if (auto pos = raw.find(';'); pos != std::string_view::npos) {
    line.comment = std::string(raw.substr(pos + 1));
    code = raw.substr(0, pos);
  }
  code = trim(code);

  if (code.empty()) {
    line.kind = line.comment ? LineKind::Comment : LineKind::Blank;
    return line;
  }

  const char* p = code.data();
  const char* end = code.data() + code.size();

  char letter =
      static_cast<char>(std::toupper(static_cast<unsigned char>(*p)));
  if (!std::isalpha(static_cast<unsigned char>(*p))) {
    line.kind = LineKind::Opaque;
    return line;
  }
  ++p;
  int major = -1;
  if (!scan_uint(p, end, major)) {
    line.kind = LineKind::Opaque;
    return line;
  }
  std::optional<int> sub;
  if (p < end && *p == '.') {
    const char* save = p;
    ++p;
    int s = -1;
    if (scan_uint(p, end, s)) {
      sub = s;
    } else {
      p = save;
    }
  }
  if ((letter != 'G' && letter != 'M') || !in_dialect(letter, major)) {
    line.kind = LineKind::Opaque;
    return line;
  }

  line.kind = LineKind::Command;
  line.letter = letter;
  line.number = major;
  line.sub = sub;

  if (is_sd_text_command(letter, major)) {
    std::string_view rest = trim(std::string_view(p, end - p));
    if (!rest.empty()) line.text_arg = std::string(rest);
    return line;
  }

  for (;;) {
    skip_ws(p, end);
    if (p >= end) break;
    if (!std::isalpha(static_cast<unsigned char>(*p)))
      throw DataError("line " + std::to_string(line_no + 1) +
                      ": unexpected character '" + std::string(1, *p) +
                      "' in parameter list");
    char pl = static_cast<char>(std::toupper(static_cast<unsigned char>(*p)));
    ++p;
    if (line.find(pl))
      throw DataError("line " + std::to_string(line_no + 1) +
                      ": duplicate parameter '" + std::string(1, pl) + "'");
    double v = 0.0;
    bool hv = scan_number(p, end, v);
    line.params.push_back({pl, hv ? v : 0.0, hv});
  }
  return line;
}

double axis_get(const Vec3& v, char a) {
  switch (a) {
    case 'X': return v.x;
    case 'Y': return v.y;
    default: return v.z;
  }
}

void axis_set(Vec3& v, char a, double val) {
  switch (a) {
    case 'X': v.x = val; break;
    case 'Y': v.y = val; break;
    default: v.z = val; break;
  }
}

}  // namespace

bool in_dialect(char letter, int number) {
  if (letter == 'G')
    return std::find(std::begin(kGCodes), std::end(kGCodes), number) !=
           std::end(kGCodes);
  if (letter == 'M')
    return std::find(std::begin(kMCodes), std::end(kMCodes), number) !=
           std::end(kMCodes);
  return false;
}

GcodeProgram parse_program(const std::string& text) {
  GcodeProgram prog;
  const std::size_t n = text.size();
  std::size_t start = 0;
  while (start < n) {
    std::size_t nl = text.find('\n', start);
    std::size_t len = (nl == std::string::npos ? n : nl) - start;
    std::string_view raw(text.data() + start, len);
    if (!raw.empty() && raw.back() == '\r') raw.remove_suffix(1);
    prog.lines.push_back(parse_line(raw, prog.lines.size()));
    if (nl == std::string::npos) break;
    start = nl + 1;
  }
  // Track final modes so appended lines can be generated consistently.
  for (const auto& l : prog.lines) {
    if (l.is('G', 90)) {
      prog.final_positioning = PositioningMode::Absolute;
      prog.final_extrusion = ExtrusionMode::Absolute;
    } else if (l.is('G', 91)) {
      prog.final_positioning = PositioningMode::Relative;
      prog.final_extrusion = ExtrusionMode::Relative;
    } else if (l.is('M', 82)) {
      prog.final_extrusion = ExtrusionMode::Absolute;
    } else if (l.is('M', 83)) {
      prog.final_extrusion = ExtrusionMode::Relative;
    }
  }
  return prog;
}

std::string format_number(double v) {
  if (!std::isfinite(v)) throw NumericError("non-finite number in G-code");
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.5f", v);
  std::string s = buf;
  std::size_t last = s.find_last_not_of('0');
  if (last != std::string::npos && s[last] == '.') --last;
  s.erase(last + 1);
  if (s == "-0") s = "0";
  return s;
}

std::string serialize_line(const GcodeLine& line) {
  switch (line.kind) {
    case LineKind::Blank:
      return "";
    case LineKind::Comment:
      if (!line.raw.empty()) return line.raw;
      return ";" + line.comment.value_or("");
    case LineKind::Opaque:
      return line.raw;
    case LineKind::Command:
      break;
  }
  std::string out;
  out += line.letter;
  out += std::to_string(line.number);
  if (line.sub) {
    out += '.';
    out += std::to_string(*line.sub);
  }
  if (line.text_arg) {
    out += ' ';
    out += *line.text_arg;
  }
  for (const auto& p : line.params) {
    out += ' ';
    out += p.letter;
    if (p.has_value) out += format_number(p.value);
  }
  if (line.comment) {
    out += " ;";
    out += *line.comment;
  }
  return out;
}

std::string serialize_program(const GcodeProgram& prog) {
  std::string out;
  for (const auto& l : prog.lines) {
    out += serialize_line(l);
    out += '\n';
  }
  return out;
}

InterpretResult interpret(const GcodeProgram& prog, const InterpretConfig& cfg) {
  InterpretResult res;
  res.line_duration_s.assign(prog.lines.size(), 0.0);

  MotionState st;
  st.feedrate = cfg.default_feedrate;
  bool mode_declared = false;
  bool warned_defaults = false;

  for (std::size_t i = 0; i < prog.lines.size(); ++i) {
    const GcodeLine& ln = prog.lines[i];
    if (ln.kind != LineKind::Command) continue;
    double duration = 0.0;

    if (ln.letter == 'G') {
      switch (ln.number) {
        case 90:
          st.positioning = PositioningMode::Absolute;
          st.extrusion = ExtrusionMode::Absolute;
          mode_declared = true;
          break;
        case 91:
          st.positioning = PositioningMode::Relative;
          st.extrusion = ExtrusionMode::Relative;
          mode_declared = true;
          break;
        case 92: {
          if (ln.sub && *ln.sub == 1) {  // G92.1: drop workspace offsets
            st.origin_offset = {0.0, 0.0, 0.0};
            st.logical_e = st.extruder;
            break;
          }
          if (ln.params.empty()) {
            res.warnings.push_back("line " + std::to_string(i + 1) +
                                   ": G92 without parameters ignored");
            break;
          }
          for (const auto& p : ln.params) {
            if (!p.has_value)
              throw DataError("line " + std::to_string(i + 1) + ": G92 " +
                              std::string(1, p.letter) + " needs a value");
            if (p.letter == 'E') {
              st.logical_e = p.value;
            } else if (p.letter == 'X' || p.letter == 'Y' || p.letter == 'Z') {
              axis_set(st.origin_offset, p.letter,
                       axis_get(st.position, p.letter) - p.value);
            } else {
              throw DataError("line " + std::to_string(i + 1) +
                              ": G92 does not accept '" +
                              std::string(1, p.letter) + "'");
            }
          }
          break;
        }
        case 28: {
          Vec3 target = st.position;
          bool any = false;
          for (const auto& p : ln.params) {
            if (p.letter == 'X' || p.letter == 'Y' || p.letter == 'Z') {
              axis_set(target, p.letter, 0.0);
              axis_set(st.origin_offset, p.letter, 0.0);
              any = true;
            }
          }
          if (!any) {
            target = {0.0, 0.0, 0.0};
            st.origin_offset = {0.0, 0.0, 0.0};
          }
          double dx = target.x - st.position.x;
          double dy = target.y - st.position.y;
          double dz = target.z - st.position.z;
          double travel = std::sqrt(dx * dx + dy * dy + dz * dz);
          duration = travel / (st.feedrate / 60.0);
          MotionStep step;
          step.line_index = i;
          step.from = st.position;
          st.position = target;
          step.after = st;
          step.travel_mm = travel;
          step.duration_s = duration;
          res.steps.push_back(step);
          break;
        }
        case 4: {
          const Param* s = ln.find('S');
          const Param* pm = ln.find('P');
          if (s && s->has_value)
            duration = s->value;
          else if (pm && pm->has_value)
            duration = pm->value / 1000.0;
          if (duration < 0) duration = 0;
          break;
        }
        case 0:
        case 1: {
          if (!mode_declared && !warned_defaults) {
            res.warnings.push_back(
                "line " + std::to_string(i + 1) +
                ": motion before positioning mode declared; defaulting to "
                "absolute positioning, absolute extrusion, F" +
                format_number(cfg.default_feedrate));
            warned_defaults = true;
          }
          for (const auto& p : ln.params) {
            if (p.letter == 'X' || p.letter == 'Y' || p.letter == 'Z' ||
                p.letter == 'E' || p.letter == 'F') {
              if (!p.has_value)
                throw DataError("line " + std::to_string(i + 1) + ": " +
                                std::string(1, p.letter) + " needs a value");
            } else {
              throw DataError("line " + std::to_string(i + 1) +
                              ": unsupported motion parameter '" +
                              std::string(1, p.letter) + "'");
            }
          }
          if (const Param* f = ln.find('F')) {
            if (f->value <= 0.0)
              throw DataError("line " + std::to_string(i + 1) +
                              ": non-positive feedrate");
            st.feedrate = f->value;
          }
          Vec3 target = st.position;
          for (char axis : {'X', 'Y', 'Z'}) {
            const Param* p = ln.find(axis);
            if (!p) continue;
            if (st.positioning == PositioningMode::Absolute)
              axis_set(target, axis, p->value + axis_get(st.origin_offset, axis));
            else
              axis_set(target, axis, axis_get(st.position, axis) + p->value);
          }
          double e_delta = 0.0;
          if (const Param* e = ln.find('E')) {
            if (st.extrusion == ExtrusionMode::Absolute) {
              e_delta = e->value - st.logical_e;
              st.logical_e = e->value;
            } else {
              e_delta = e->value;
              st.logical_e += e->value;
            }
            if (!cfg.allow_retraction && e_delta < 0.0) e_delta = 0.0;
          }
          st.extruder += e_delta;
          double dx = target.x - st.position.x;
          double dy = target.y - st.position.y;
          double dz = target.z - st.position.z;
          double travel = std::sqrt(dx * dx + dy * dy + dz * dz);
          double mm_s = st.feedrate / 60.0;
          if (travel > 0.0)
            duration = travel / mm_s;
          else if (e_delta != 0.0)
            duration = std::abs(e_delta) / mm_s;
          MotionStep step;
          step.line_index = i;
          step.from = st.position;
          st.position = target;
          step.after = st;
          step.e_delta = e_delta;
          step.travel_mm = travel;
          step.duration_s = duration;
          step.extruding = e_delta > 0.0;
          res.steps.push_back(step);
          break;
        }
        default:
          break;
      }
    } else {
      // M-commands are instantaneous here; pauses and heating are modelled
      // by the print server, not the toolpath clock.
      switch (ln.number) {
        case 82: st.extrusion = ExtrusionMode::Absolute; break;
        case 83: st.extrusion = ExtrusionMode::Relative; break;
        default: break;
      }
    }
    res.line_duration_s[i] = duration;
    res.total_time_s += duration;
  }
  return res;
}

double total_extrusion(const GcodeProgram& prog) {
  InterpretResult r = interpret(prog);
  double sum = 0.0;
  for (const auto& s : r.steps)
    if (s.e_delta > 0.0) sum += s.e_delta;
  return sum;
}

double total_extrusion(const GcodeProgram& prog, double z_lo, double z_hi) {
  if (z_lo > z_hi) throw ArgError("total_extrusion: inverted z range");
  InterpretResult r = interpret(prog);
  double sum = 0.0;
  for (const auto& s : r.steps) {
    double z = s.after.position.z;
    if (s.e_delta > 0.0 && z >= z_lo && z <= z_hi) sum += s.e_delta;
  }
  return sum;
}

BoundingBox bounding_box(const GcodeProgram& prog) {
  InterpretResult r = interpret(prog);
  bool any = false;
  BoundingBox bb;
  auto take = [&](const Vec3& v) {
    if (!any) {
      bb.min = bb.max = v;
      any = true;
      return;
    }
    bb.min.x = std::min(bb.min.x, v.x);
    bb.min.y = std::min(bb.min.y, v.y);
    bb.min.z = std::min(bb.min.z, v.z);
    bb.max.x = std::max(bb.max.x, v.x);
    bb.max.y = std::max(bb.max.y, v.y);
    bb.max.z = std::max(bb.max.z, v.z);
  };
  for (const auto& s : r.steps) {
    if (!s.extruding) continue;
    take(s.from);
    take(s.after.position);
  }
  if (!any) throw DataError("bounding_box: program has no extruding moves");
  return bb;
}

LayerIndex build_layer_index(const GcodeProgram& prog) {
  InterpretResult r = interpret(prog);
  LayerIndex idx;
  for (const auto& s : r.steps) {
    if (!s.extruding) continue;
    double z = s.after.position.z;
    if (idx.empty() || z != idx.back().z) {
      idx.push_back({z, s.line_index, s.line_index});
    } else {
      idx.back().last_line = s.line_index;
    }
  }
  return idx;
}

std::string program_summary_json(const GcodeProgram& prog) {
  InterpretResult r = interpret(prog);
  double ext = 0.0;
  bool any_extrude = false;
  for (const auto& s : r.steps) {
    if (s.e_delta > 0.0) {
      ext += s.e_delta;
      any_extrude = true;
    }
  }
  nlohmann::json j;
  j["lines"] = prog.lines.size();
  j["motion_lines"] = r.steps.size();
  j["total_extrusion_mm"] = ext;
  j["total_time_s"] = r.total_time_s;
  j["layers"] = build_layer_index(prog).size();
  if (any_extrude) {
    BoundingBox bb = bounding_box(prog);
    j["bbox"] = {{"min", {bb.min.x, bb.min.y, bb.min.z}},
                 {"max", {bb.max.x, bb.max.y, bb.max.z}}};
  } else {
    j["bbox"] = nullptr;
  }
  j["warnings"] = r.warnings;
  return j.dump(2);
}

}  // namespace fdmlab::gcode
