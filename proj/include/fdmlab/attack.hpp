#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fdmlab/gcode.hpp"

namespace fdmlab::attack {

enum class AttackKind {
  UnderExtrusion,
  OverExtrusion,
  NoiseInjection,
  DimensionalChange,
  CavityInsertion,
  Exfiltration,
};

const char* attack_kind_name(AttackKind k);
AttackKind attack_kind_from_name(const std::string& name);

// Restriction of a transform to part of the program.  Layer ordinals are
// 1-based (layer 1 = lowest extruding z); line indices are 0-based and
// inclusive.  A layer's range starts right after the previous layer's last
// extruding line, so it captures the leading z-hop and travel moves.
struct Region {
  enum class Kind { All, Lines, Layers } kind = Kind::All;
  std::size_t a = 0, b = 0;
};

struct LineRange {
  std::size_t first = 0, last = 0;  // inclusive
  bool empty = true;
};

LineRange resolve_region(const gcode::GcodeProgram& prog, const Region& region);

struct AttackSpec {
  AttackKind kind = AttackKind::UnderExtrusion;
  // scale_extrusion; 0 means "use the kind's default" (0.72 under, 1.49 over)
  double factor = 0.0;
  // inject_noise
  double rate = 10.0;       // jitter pairs per 100 motion lines
  double amplitude = 0.3;   // mm, per-axis cap
  bool extruding_noise = false;
  // scale_dimensions
  double sx = 1.0, sy = 1.0, sz = 1.0;
  std::optional<std::pair<double, double>> pivot_xy;
  // insert_cavity
  double z_lo = 0.0, z_hi = 0.0;
  // exfiltrate
  std::string sink;

  std::uint64_t seed = 0;
  Region region;

  void validate() const;  // throws ArgError on invariant violations
  std::string echo() const;
};

AttackSpec parse_attack_spec_json(const std::string& text);

struct AttackAudit {
  std::vector<std::size_t> modified_lines;  // indices into the original
  std::vector<std::size_t> inserted_lines;  // indices into the mutated
  std::vector<std::size_t> removed_lines;
  double extrusion_delta_mm = 0.0;  // after - before
  bool bbox_valid = false;          // both sides had extruding moves
  double bbox_extent_delta[3] = {0.0, 0.0, 0.0};
  std::string spec_echo;
  std::string digest_before;
  std::string digest_after;
  std::vector<std::string> warnings;

  std::size_t touch_count() const {
    return modified_lines.size() + inserted_lines.size() +
           removed_lines.size();
  }
};

std::string audit_json(const AttackAudit& a);

using Mutation = std::pair<gcode::GcodeProgram, AttackAudit>;

Mutation scale_extrusion(const gcode::GcodeProgram& prog, double factor,
                         const Region& region = {});

Mutation inject_noise(const gcode::GcodeProgram& prog, double rate,
                      double amplitude, std::uint64_t seed,
                      const Region& region = {}, bool extruding = false);

struct Scale3 {
  double x = 1.0, y = 1.0, z = 1.0;
};

Mutation scale_dimensions(const gcode::GcodeProgram& prog, Scale3 scale,
                          const Region& region = {},
                          std::optional<std::pair<double, double>> pivot_xy =
                              std::nullopt);

Mutation insert_cavity(const gcode::GcodeProgram& prog, double z_lo,
                       double z_hi, const Region& region = {});

struct ExfilEvent {
  double timestamp_s = 0.0;
  std::string digest;
  std::size_t size_bytes = 0;
  std::string source;
  std::string sink;
};

// Pure byte-level exfiltration record; the returned payload is the exact
// input (the copy the attacker keeps).
ExfilEvent exfiltrate_bytes(const std::string& bytes, double timestamp_s,
                            const std::string& source, const std::string& sink);

// Dispatcher used by the CLI and the adversary module.
Mutation apply_attack(const gcode::GcodeProgram& prog, const AttackSpec& spec);

}  // namespace fdmlab::attack
