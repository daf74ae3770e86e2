#include "fdmlab/fixtures.hpp"

#include <cmath>

#include "fdmlab/errors.hpp"
#include "fdmlab/gcode.hpp"

namespace fdmlab::fixtures {

using gcode::format_number;

namespace {

void emit(std::string& out, const std::string& line) {
  out += line;
  out += '\n';
}

}  // namespace

std::string build_cube_gcode(const CubeParams& p) {
  if (p.size_mm <= 0 || p.layers < 1 || p.layer_height <= 0 ||
      p.perimeters < 1 || p.line_width <= 0)
    throw ArgError("build_cube_gcode: degenerate cube parameters");
  if (p.line_width * static_cast<double>(p.perimeters) * 2.0 >= p.size_mm)
    throw ArgError("build_cube_gcode: perimeters do not fit inside the cube");

  std::string g;
  emit(g, "; " + p.job_name);
  emit(g, "; " + format_number(p.size_mm) + " x " + format_number(p.size_mm) +
              " mm, " + std::to_string(p.layers) + " layers");
  emit(g, "M104 S210");
  emit(g, "M109 S210");
  emit(g, "M221 S100");
  emit(g, "G28 ; home");
  emit(g, "G90");
  emit(g, p.relative_e ? "M83" : "M82");
  emit(g, "G92 E0");

  const std::string tf = " F" + format_number(p.travel_feed);
  const std::string pf = " F" + format_number(p.print_feed);
  double cum_e = 0.0;

  for (int layer = 0; layer < p.layers; ++layer) {
    double z = p.layer_height * static_cast<double>(layer + 1);
    emit(g, "; layer " + std::to_string(layer + 1));
    emit(g, "G0 Z" + format_number(z) + tf);
    for (int k = 0; k < p.perimeters; ++k) {
      double inset = p.line_width * static_cast<double>(k);
      double half = p.size_mm / 2.0 - inset;
      double x0 = p.center_x - half, x1 = p.center_x + half;
      double y0 = p.center_y - half, y1 = p.center_y + half;
      double side = 2.0 * half;
      double de = p.e_per_mm * side;
      emit(g, "G0 X" + format_number(x0) + " Y" + format_number(y0) + tf);
      auto print_to = [&](double x, double y, bool first) {
        cum_e += de;
        std::string ln = "G1 X" + format_number(x) + " Y" + format_number(y) +
                         " E" + format_number(p.relative_e ? de : cum_e);
        if (first) ln += pf;
        emit(g, ln);
      };
      print_to(x1, y0, true);
      print_to(x1, y1, false);
      print_to(x0, y1, false);
      print_to(x0, y0, false);
    }
  }

  double top = p.layer_height * static_cast<double>(p.layers);
  if (p.relative_e)
    emit(g, "G1 E-1 F1800 ; retract");
  else
    emit(g, "G1 E" + format_number(cum_e - 1.0) + " F1800 ; retract");
  emit(g, "G0 Z" + format_number(top + 5.0) + tf);
  emit(g, "M104 S0");
  emit(g, "M0 ; end of job");
  return g;
}

}  // namespace fdmlab::fixtures
