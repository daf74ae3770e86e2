#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fdmlab/gcode.hpp"

namespace fdmlab::telemetry {

struct SimConfig {
  double sampling_period_s = 1.0;
  // first-order thermal plant: dT/dt = k_heat*pwm - k_cool*(T - ambient)
  double k_heat = 4.0;   // °C/s at full duty
  double k_cool = 0.01;  // 1/s
  double ambient_c = 25.0;
  // PI controller on the extruder heater (plus analytic steady-state bias)
  double kp = 0.05;
  double ki = 0.002;
  double thermal_substep_s = 0.25;
  // host <-> MCU comm model
  double bytes_per_cmd = 38.0;
  double bytes_per_resp = 24.0;
  double retransmit_rate = 1e-4;  // events per command
  double invalid_rate = 1e-5;
  double jitter_lambda = 3.0;  // Poisson byte jitter per sampling period
  std::uint64_t seed = 0;

  void validate() const;  // ArgError naming the offending constant
  std::string echo() const;
};

// One sampling window of the Table-3-shaped schema, 26 channels.
struct LogRecord {
  double print_time = 0, sd_pos = 0, buffer_time = 0, gcodein = 0;
  double mcu_temp = 0, chamber_temp = 0, bed_temp = 0, extruder_temp = 0;
  double bed_pwm = 0, extruder_pwm = 0;
  double sysload = 0, cputime = 0, memavail = 0;
  double bytes_write = 0, bytes_read = 0, bytes_retransmit = 0,
         bytes_invalid = 0;
  double send_seq = 0, receive_seq = 0;
  double srtt = 0, rttvar = 0, rto = 0;
  double mcu_task_avg = 0, mcu_task_stddev = 0, mcu_awake = 0;
  double flow_rate = 0;
};

inline constexpr int kChannelCount = 26;

const std::vector<std::string>& channel_names();  // fixed schema order
std::vector<double> record_values(const LogRecord& r);
LogRecord record_from_values(const std::vector<double>& v);
bool is_counter(const std::string& channel);  // cumulative channels

struct TelemetryRun {
  std::vector<LogRecord> records;  // one per sampling period
  std::vector<double> line_duration_s;
  double total_time_s = 0.0;
  // Exact (pre-quantization) filament total attributed across windows;
  // equals the program's net extrusion up to floating-point roundoff.
  double extruded_mm_attributed = 0.0;
  std::vector<std::string> warnings;
};

// Pure plant update used by the controller loop.
double thermal_step(double temp_c, double pwm, double dt_s,
                    const SimConfig& cfg);

TelemetryRun execute(const gcode::GcodeProgram& prog, const SimConfig& cfg);

// Aggregate m consecutive sampling periods per window: means for gauges,
// inclusive last-minus-previous-last deltas for counters.  The trailing
// partial window is dropped.
std::vector<LogRecord> window_logs(const std::vector<LogRecord>& stream,
                                   int periods_per_window);

std::string to_jsonl(const std::vector<LogRecord>& recs,
                     const std::string& label, const SimConfig& cfg);
std::string to_csv(const std::vector<LogRecord>& recs,
                   const std::string& label, const SimConfig& cfg);

}  // namespace fdmlab::telemetry
