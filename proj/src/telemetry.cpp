#include "fdmlab/telemetry.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "fdmlab/digest.hpp"
#include "fdmlab/errors.hpp"
#include "fdmlab/rng.hpp"
#include "json.hpp"

namespace fdmlab::telemetry {

namespace {

using ojson = nlohmann::ordered_json;

struct Field {
  const char* name;
  double LogRecord::*member;
  bool counter;
};

// Schema order is load-bearing: feature extraction, serialization, and the
// CSV/JSONL writers all inherit it.
const std::array<Field, kChannelCount>& fields() {
  static const std::array<Field, kChannelCount> f = {{
      {"print_time", &LogRecord::print_time, false},
      {"sd_pos", &LogRecord::sd_pos, false},
      {"buffer_time", &LogRecord::buffer_time, false},
      {"gcodein", &LogRecord::gcodein, false},
      {"mcu_temp", &LogRecord::mcu_temp, false},
      {"chamber_temp", &LogRecord::chamber_temp, false},
      {"bed_temp", &LogRecord::bed_temp, false},
      {"extruder_temp", &LogRecord::extruder_temp, false},
      {"bed_pwm", &LogRecord::bed_pwm, false},
      {"extruder_pwm", &LogRecord::extruder_pwm, false},
      {"sysload", &LogRecord::sysload, false},
      {"cputime", &LogRecord::cputime, false},
      {"memavail", &LogRecord::memavail, false},
      {"bytes_write", &LogRecord::bytes_write, true},
      {"bytes_read", &LogRecord::bytes_read, true},
      {"bytes_retransmit", &LogRecord::bytes_retransmit, true},
      {"bytes_invalid", &LogRecord::bytes_invalid, true},
      {"send_seq", &LogRecord::send_seq, true},
      {"receive_seq", &LogRecord::receive_seq, true},
      {"srtt", &LogRecord::srtt, false},
      {"rttvar", &LogRecord::rttvar, false},
      {"rto", &LogRecord::rto, false},
      {"mcu_task_avg", &LogRecord::mcu_task_avg, false},
      {"mcu_task_stddev", &LogRecord::mcu_task_stddev, false},
      {"mcu_awake", &LogRecord::mcu_awake, false},
      {"flow_rate", &LogRecord::flow_rate, false},
  }};
  return f;
}

double quantize(double v, double res) { return std::round(v / res) * res; }
double floor_to(double v, double res) { return std::floor(v / res) * res; }

void require_positive(double v, const char* name) {
  if (!std::isfinite(v) || v <= 0.0)
    throw ArgError(std::string("SimConfig.") + name + " must be finite and > 0");
}

void require_nonneg(double v, const char* name) {
  if (!std::isfinite(v) || v < 0.0)
    throw ArgError(std::string("SimConfig.") + name + " must be finite and >= 0");
}

}  // namespace

void SimConfig::validate() const {
  require_positive(sampling_period_s, "sampling_period_s");
  require_positive(k_heat, "k_heat");
  require_positive(k_cool, "k_cool");
  require_positive(thermal_substep_s, "thermal_substep_s");
  require_positive(bytes_per_cmd, "bytes_per_cmd");
  require_positive(bytes_per_resp, "bytes_per_resp");
  require_nonneg(kp, "kp");
  require_nonneg(ki, "ki");
  require_nonneg(retransmit_rate, "retransmit_rate");
  require_nonneg(invalid_rate, "invalid_rate");
  require_nonneg(jitter_lambda, "jitter_lambda");
  if (!std::isfinite(ambient_c) || ambient_c < -273.15)
    throw ArgError("SimConfig.ambient_c must be a physical temperature");
}

std::string SimConfig::echo() const {
  std::ostringstream os;
  os << "sampling_period_s=" << sampling_period_s << " k_heat=" << k_heat
     << " k_cool=" << k_cool << " ambient_c=" << ambient_c << " kp=" << kp
     << " ki=" << ki << " thermal_substep_s=" << thermal_substep_s
     << " bytes_per_cmd=" << bytes_per_cmd
     << " bytes_per_resp=" << bytes_per_resp
     << " retransmit_rate=" << retransmit_rate
     << " invalid_rate=" << invalid_rate << " jitter_lambda=" << jitter_lambda
     << " seed=" << seed;
  return os.str();
}

const std::vector<std::string>& channel_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto& f : fields()) v.emplace_back(f.name);
    return v;
  }();
  return names;
}

std::vector<double> record_values(const LogRecord& r) {
  std::vector<double> v;
  v.reserve(kChannelCount);
  for (const auto& f : fields()) v.push_back(r.*(f.member));
  return v;
}

LogRecord record_from_values(const std::vector<double>& v) {
  if (v.size() != static_cast<std::size_t>(kChannelCount))
    throw ArgError("record_from_values: expected " +
                   std::to_string(kChannelCount) + " values, got " +
                   std::to_string(v.size()));
  LogRecord r;
  for (int i = 0; i < kChannelCount; ++i) r.*(fields()[i].member) = v[i];
  return r;
}

bool is_counter(const std::string& channel) {
  for (const auto& f : fields())
    if (channel == f.name) return f.counter;
  throw ArgError("unknown channel: " + channel);
}

double thermal_step(double temp_c, double pwm, double dt_s,
                    const SimConfig& cfg) {
  if (!(dt_s > 0.0) || !std::isfinite(dt_s))
    throw ArgError("thermal_step: dt_s must be finite and > 0");
  if (!std::isfinite(temp_c) || !std::isfinite(pwm))
    throw NumericError("thermal_step: non-finite input");
  double duty = std::clamp(pwm, 0.0, 1.0);
  return temp_c + dt_s * (cfg.k_heat * duty - cfg.k_cool * (temp_c - cfg.ambient_c));
}

TelemetryRun execute(const gcode::GcodeProgram& prog, const SimConfig& cfg) {
  cfg.validate();
  TelemetryRun run;
  gcode::InterpretResult ir = gcode::interpret(prog);
  run.line_duration_s = ir.line_duration_s;
  run.total_time_s = ir.total_time_s;
  run.warnings = ir.warnings;

  const double p = cfg.sampling_period_s;
  const std::size_t n_lines = prog.lines.size();
  if (n_lines == 0 || ir.total_time_s <= 0.0) return run;

  // Per-line completion times and source byte offsets.
  std::vector<double> done(n_lines, 0.0);
  std::vector<double> byte_end(n_lines, 0.0);
  std::vector<bool> is_cmd(n_lines, false);
  {
    double t = 0.0, b = 0.0;
    for (std::size_t i = 0; i < n_lines; ++i) {
      t += ir.line_duration_s[i];
      b += static_cast<double>(prog.lines[i].raw.size()) + 1.0;
      done[i] = t;
      byte_end[i] = b;
      is_cmd[i] = prog.lines[i].kind == gcode::LineKind::Command ||
                  prog.lines[i].kind == gcode::LineKind::Opaque;
    }
  }

  // Heater setpoint schedule: (effective-from time, target °C).
  std::vector<std::pair<double, double>> targets{{0.0, 0.0}};
  for (std::size_t i = 0; i < n_lines; ++i) {
    const auto& ln = prog.lines[i];
    if (ln.is('M', 104) || ln.is('M', 109)) {
      if (const auto* s = ln.find('S'); s && s->has_value)
        targets.emplace_back(done[i], s->value);
    }
  }

  const int K = static_cast<int>(std::ceil(ir.total_time_s / p - 1e-12));

  Rng root(cfg.seed);
  Rng r_load = root.fork("load");
  Rng r_comm = root.fork("comm-jitter");
  Rng r_retr = root.fork("retrans");
  Rng r_inv = root.fork("invalid");
  Rng r_rtt = root.fork("rtt");
  Rng r_mcu = root.fork("mcu");

  double temp = cfg.ambient_c;
  double integ = 0.0;  // PI integral state, °C·s
  double pwm = 0.0;
  std::size_t tgt_i = 0;
  double srtt = 0.0, rttvar = 0.0;
  bool rtt_primed = false;
  double cum_write = 0.0, cum_read = 0.0, cum_retr = 0.0, cum_inv = 0.0;
  double send_seq = 0.0, recv_seq = 0.0, cputime = 0.0;
  double attributed_mm = 0.0;
  std::size_t line_i = 0;   // next line not yet attributed to a window
  std::size_t step_i = 0;   // next motion step not fully consumed

  run.records.reserve(static_cast<std::size_t>(K));
  for (int k = 1; k <= K; ++k) {
    const double t0 = (k - 1) * p;
    const double t1 = k * p;

    // Command completions in this window; lines finishing at t=0 belong to
    // the first window.
    int cmds = 0;
    double sd_pos = (line_i > 0) ? byte_end[line_i - 1] : 0.0;
    while (line_i < n_lines && (done[line_i] <= t1 || k == K)) {
      if (is_cmd[line_i]) ++cmds;
      sd_pos = byte_end[line_i];
      ++line_i;
    }

    // Filament attribution: overlap of each motion step's execution interval
    // with this window, zero-length steps assigned to their completion
    // instant.
    double de_window = 0.0;
    while (step_i < ir.steps.size()) {
      const auto& s = ir.steps[step_i];
      const double me = done[s.line_index];
      const double ms = me - s.duration_s;
      // Zero-length steps belong to the window whose half-open interval
      // (t0, t1] contains their instant, so ms == t1 stays in this window.
      if (k < K && (s.duration_s > 0.0 ? ms >= t1 : ms > t1)) break;
      if (s.duration_s > 0.0) {
        const double lo = std::max(ms, t0);
        const double hi = std::min(me, t1);
        if (hi > lo) de_window += s.e_delta * (hi - lo) / s.duration_s;
        if (me > t1 && k < K) break;  // step continues into the next window
      } else if (k == K || (me > t0 && me <= t1) || (k == 1 && me <= 0.0)) {
        de_window += s.e_delta;
      }
      ++step_i;
    }
    attributed_mm += de_window;

    // Thermal integration across the window at substep resolution.
    {
      double a = t0;
      while (a < t1 - 1e-12) {
        const double dt = std::min(cfg.thermal_substep_s, t1 - a);
        while (tgt_i + 1 < targets.size() && targets[tgt_i + 1].first <= a)
          ++tgt_i;
        const double target = targets[tgt_i].second;
        const double err = target - temp;
        const double ff =
            target > cfg.ambient_c
                ? std::clamp(cfg.k_cool * (target - cfg.ambient_c) / cfg.k_heat,
                             0.0, 1.0)
                : 0.0;
        const double raw = ff + cfg.kp * err + cfg.ki * integ;
        pwm = std::clamp(raw, 0.0, 1.0);
        if (raw > 0.0 && raw < 1.0) integ += err * dt;  // anti-windup
        temp = thermal_step(temp, pwm, dt, cfg);
        a += dt;
      }
    }
    if (!std::isfinite(temp) || !std::isfinite(integ))
      throw NumericError(
          "extruder_temp diverged (check k_heat/k_cool/kp/ki at t=" +
          std::to_string(t1) + ")");

    const double load_raw =
        std::max(0.0, 0.2 + 0.05 * cmds + r_load.uniform(-0.02, 0.02));
    cputime += 0.7 * load_raw * p;

    cum_write += cfg.bytes_per_cmd * cmds +
                 static_cast<double>(r_comm.poisson(cfg.jitter_lambda));
    cum_read += cfg.bytes_per_resp * cmds +
                static_cast<double>(r_comm.poisson(cfg.jitter_lambda));
    cum_retr += cfg.bytes_per_cmd *
                static_cast<double>(r_retr.poisson(cfg.retransmit_rate * cmds));
    cum_inv += static_cast<double>(r_inv.poisson(cfg.invalid_rate * cmds));
    send_seq += cmds + 2;
    recv_seq += cmds + 1;

    const double rtt_sample = 2.0 + 0.5 * load_raw + r_rtt.uniform(0.0, 0.25);
    if (!rtt_primed) {
      srtt = rtt_sample;
      rttvar = rtt_sample / 2.0;
      rtt_primed = true;
    } else {
      rttvar = 0.75 * rttvar + 0.25 * std::abs(srtt - rtt_sample);
      srtt = 0.875 * srtt + 0.125 * rtt_sample;
    }

    const double task_avg = 11.0 + 0.4 * cmds + r_mcu.uniform(-0.3, 0.3);
    const double task_sd = 1.5 + 0.08 * cmds + r_mcu.uniform(0.0, 0.2);
    const double awake =
        std::clamp(0.03 + 0.004 * cmds + r_mcu.uniform(0.0, 0.004), 0.0, 1.0);

    LogRecord r;
    r.print_time = t1;
    r.sd_pos = sd_pos;
    r.buffer_time =
        quantize(std::clamp(ir.total_time_s - t1, 0.0, 2.0), 0.01);
    r.gcodein = cmds;
    r.extruder_temp = quantize(temp, 0.1);
    r.extruder_pwm = quantize(pwm, 0.01);
    r.bed_temp = cfg.ambient_c;
    r.bed_pwm = 0.0;
    r.chamber_temp = quantize(cfg.ambient_c + 0.02 * (temp - cfg.ambient_c), 0.1);
    r.mcu_temp =
        quantize(cfg.ambient_c + 20.0 * awake + 0.02 * (temp - cfg.ambient_c), 0.1);
    r.sysload = quantize(load_raw, 0.01);
    r.cputime = quantize(cputime, 0.01);
    r.memavail =
        (102400.0 - 25000.0 - std::floor(2000.0 * load_raw)) * 4096.0;
    r.bytes_write = floor_to(cum_write, 128.0);
    r.bytes_read = floor_to(cum_read, 64.0);
    r.bytes_retransmit = cum_retr;
    r.bytes_invalid = cum_inv;
    r.send_seq = send_seq;
    r.receive_seq = recv_seq;
    r.srtt = quantize(srtt, 0.1);
    r.rttvar = quantize(rttvar, 0.1);
    r.rto = quantize(srtt + 4.0 * rttvar, 0.1);
    r.mcu_task_avg = quantize(task_avg, 0.1);
    r.mcu_task_stddev = quantize(task_sd, 0.1);
    r.mcu_awake = quantize(awake, 0.01);
    r.flow_rate = quantize(de_window / p, 0.01);
    for (const auto& f : fields())
      if (!std::isfinite(r.*(f.member)))
        throw NumericError(std::string("non-finite channel value: ") + f.name);
    run.records.push_back(r);
  }
  run.extruded_mm_attributed = attributed_mm;
  return run;
}

std::vector<LogRecord> window_logs(const std::vector<LogRecord>& stream,
                                   int periods_per_window) {
  if (periods_per_window < 1)
    throw ArgError("window_logs: periods_per_window must be >= 1");
  const std::size_t m = static_cast<std::size_t>(periods_per_window);
  std::vector<LogRecord> out;
  if (stream.size() < m) return out;
  const std::size_t n_windows = stream.size() / m;
  out.reserve(n_windows);
  std::vector<double> prev_last(kChannelCount, 0.0);
  for (std::size_t w = 0; w < n_windows; ++w) {
    const std::size_t a = w * m;
    const std::size_t b = a + m - 1;
    LogRecord agg;
    std::vector<double> last = record_values(stream[b]);
    for (int c = 0; c < kChannelCount; ++c) {
      const auto& f = fields()[static_cast<std::size_t>(c)];
      if (f.counter) {
        agg.*(f.member) = last[static_cast<std::size_t>(c)] -
                          prev_last[static_cast<std::size_t>(c)];
      } else {
        double sum = 0.0;
        for (std::size_t i = a; i <= b; ++i)
          sum += stream[i].*(f.member);
        agg.*(f.member) = sum / static_cast<double>(m);
      }
    }
    prev_last = std::move(last);
    out.push_back(agg);
  }
  return out;
}

namespace {

ojson manifest_json(const std::vector<LogRecord>& recs,
                    const std::string& label, const SimConfig& cfg) {
  ojson m;
  m["schema_version"] = 1;
  m["kind"] = "telemetry";
  m["label"] = label;
  m["seed"] = cfg.seed;
  m["config_digest"] = digest_hex(cfg.echo());
  m["channels"] = channel_names();
  m["records"] = recs.size();
  return m;
}

std::string fmt_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

std::string to_jsonl(const std::vector<LogRecord>& recs,
                     const std::string& label, const SimConfig& cfg) {
  std::string out = manifest_json(recs, label, cfg).dump();
  out += '\n';
  for (const auto& r : recs) {
    ojson j;
    const auto vals = record_values(r);
    for (int c = 0; c < kChannelCount; ++c)
      j[fields()[static_cast<std::size_t>(c)].name] =
          vals[static_cast<std::size_t>(c)];
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::string to_csv(const std::vector<LogRecord>& recs, const std::string& label,
                   const SimConfig& cfg) {
  std::string out = "# manifest: " + manifest_json(recs, label, cfg).dump();
  out += '\n';
  const auto& names = channel_names();
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (i) out += ',';
    out += names[i];
  }
  out += '\n';
  for (const auto& r : recs) {
    const auto vals = record_values(r);
    for (std::size_t i = 0; i < vals.size(); ++i) {
      if (i) out += ',';
      out += fmt_value(vals[i]);
    }
    out += '\n';
  }
  return out;
}

}  // namespace fdmlab::telemetry
