#pragma once

#include <cstdint>
#include <string>

namespace fdmlab::fixtures {

// Parameters for the synthetic calibration-cube toolpath.  Concentric square
// perimeters per layer; everything lands on a 0.01 mm grid so serialized
// programs reparse to identical doubles.
struct CubeParams {
  double size_mm = 30.0;       // outer square side
  int layers = 25;
  double layer_height = 0.2;
  int perimeters = 5;
  double line_width = 0.6;     // inset between perimeters
  double center_x = 110.0;
  double center_y = 110.0;
  double print_feed = 1500.0;  // mm/min
  double travel_feed = 6000.0;
  double e_per_mm = 0.05;      // filament mm per path mm
  bool relative_e = false;     // emit M83 + relative E moves
  std::uint64_t seed = 0;      // perturbs nothing yet; reserved for variants
  std::string job_name = "cube";
};

std::string build_cube_gcode(const CubeParams& p = {});

}  // namespace fdmlab::fixtures
