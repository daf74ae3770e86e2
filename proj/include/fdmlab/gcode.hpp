#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace fdmlab::gcode {

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;
};

enum class LineKind {
  Command,  // recognized dialect command
  Opaque,   // syntactically command-like but outside the dialect; kept verbatim
  Comment,  // ;-only line
  Blank,
};

struct Param {
  char letter = 0;
  double value = 0.0;
  bool has_value = true;  // bare letters are legal (G28 X)
};

struct GcodeLine {
  LineKind kind = LineKind::Blank;
  char letter = 0;           // 'G' or 'M' for Command lines
  int number = -1;           // major code (the 92 of G92.1)
  std::optional<int> sub;    // sub-code (the 1 of G92.1)
  std::vector<Param> params; // source order preserved; letters unique
  std::optional<std::string> text_arg;  // filename argument of M23/M28/M928
  std::optional<std::string> comment;   // text after ';' verbatim
  std::string raw;           // original source text, no newline

  bool is(char l, int n) const {
    return kind == LineKind::Command && letter == l && number == n;
  }
  bool is_motion() const { return is('G', 0) || is('G', 1) || is('G', 28); }
  const Param* find(char l) const {
    for (const auto& p : params)
      if (p.letter == l) return &p;
    return nullptr;
  }
  void set(char l, double v) {
    for (auto& p : params)
      if (p.letter == l) {
        p.value = v;
        p.has_value = true;
        return;
      }
    params.push_back({l, v, true});
  }
  bool remove(char l) {
    for (std::size_t i = 0; i < params.size(); ++i)
      if (params[i].letter == l) {
        params.erase(params.begin() + static_cast<std::ptrdiff_t>(i));
        return true;
      }
    return false;
  }
};

enum class PositioningMode { Absolute, Relative };
enum class ExtrusionMode { Absolute, Relative };

struct GcodeProgram {
  std::vector<GcodeLine> lines;
  // Modes in effect after the last line of the program.
  PositioningMode final_positioning = PositioningMode::Absolute;
  ExtrusionMode final_extrusion = ExtrusionMode::Absolute;

  std::size_t line_count() const { return lines.size(); }
};

struct MotionState {
  Vec3 position;                 // physical position, mm
  double extruder = 0.0;         // cumulative filament fed, mm
  double feedrate = 1500.0;      // mm/min
  PositioningMode positioning = PositioningMode::Absolute;
  ExtrusionMode extrusion = ExtrusionMode::Absolute;
  Vec3 origin_offset;            // physical = logical + offset (from G92)
  double logical_e = 0.0;
};

struct MotionStep {
  std::size_t line_index = 0;
  MotionState after;
  Vec3 from;              // physical position before the move
  double e_delta = 0.0;   // filament fed by this line (signed)
  double travel_mm = 0.0; // XYZ path length
  double duration_s = 0.0;
  bool extruding = false; // positive e_delta
};

struct InterpretConfig {
  bool allow_retraction = true;  // false clamps negative E deltas to zero
  double default_feedrate = 1500.0;  // mm/min, before any F word
};

struct InterpretResult {
  std::vector<MotionStep> steps;          // one per motion line
  std::vector<double> line_duration_s;    // one per program line
  std::vector<std::string> warnings;
  double total_time_s = 0.0;
};

struct LayerEntry {
  double z = 0.0;
  std::size_t first_line = 0;
  std::size_t last_line = 0;
};

using LayerIndex = std::vector<LayerEntry>;

struct BoundingBox {
  Vec3 min;
  Vec3 max;
};

// The dialect is the attack-relevant command surface; everything else is
// carried opaquely and re-emitted verbatim.
bool in_dialect(char letter, int number);

GcodeProgram parse_program(const std::string& text);
std::string serialize_program(const GcodeProgram& prog);
std::string serialize_line(const GcodeLine& line);

// Canonical number formatting: up to 5 fractional digits, shortest form,
// no trailing zeros, -0 collapsed to 0.
std::string format_number(double v);

InterpretResult interpret(const GcodeProgram& prog,
                          const InterpretConfig& cfg = {});

double total_extrusion(const GcodeProgram& prog);
double total_extrusion(const GcodeProgram& prog, double z_lo, double z_hi);

BoundingBox bounding_box(const GcodeProgram& prog);

LayerIndex build_layer_index(const GcodeProgram& prog);

// Machine-readable program summary (line count, total extrusion, bounding
// box, layer count) as a JSON string.
std::string program_summary_json(const GcodeProgram& prog);

}  // namespace fdmlab::gcode
