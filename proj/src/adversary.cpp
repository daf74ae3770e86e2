#include "fdmlab/adversary.hpp"

#include <algorithm>
#include <deque>
#include <functional>
#include <limits>

#include "fdmlab/digest.hpp"
#include "fdmlab/errors.hpp"
#include "fdmlab/gcode.hpp"
#include "fdmlab/rng.hpp"
#include "json.hpp"

namespace fdmlab::adversary {

using attack::AttackKind;
using nlohmann::json;
using server::Actor;
using server::PrintServerSim;
using server::ServerError;
using server::ServerResult;

const char* strategy_name(Strategy s) {
  switch (s) {
    case Strategy::Deferred: return "deferred";
    case Strategy::AccessJam: return "access_jam";
    case Strategy::ExecutionPhase: return "execution_phase";
  }
  return "?";
}

Strategy strategy_from_name(const std::string& name) {
  if (name == "deferred") return Strategy::Deferred;
  if (name == "access_jam") return Strategy::AccessJam;
  if (name == "execution_phase") return Strategy::ExecutionPhase;
  throw DataError("unknown strategy: " + name);
}

double mutation_latency_s(std::size_t line_count) {
  return 0.5 * static_cast<double>(line_count) / 10000.0;
}

IntrusionPlan IntrusionPlan::from_json(const std::string& text) {
  IntrusionPlan p;
  try {
    json j = json::parse(text);
    p.strategy = strategy_from_name(j.at("strategy").get<std::string>());
    if (j.contains("attack"))
      p.attack = attack::parse_attack_spec_json(j["attack"].dump());
    p.delay_s = j.value("delay_s", p.delay_s);
    p.lock_s = j.value("lock_s", p.lock_s);
    p.trigger_s = j.value("trigger_s", p.trigger_s);
    p.allow_out_of_bounds = j.value("allow_out_of_bounds", false);
    p.whole_file = j.value("whole_file", false);
    p.seed = j.value("seed", std::uint64_t{0});
  } catch (const json::exception& e) {
    throw DataError(std::string("intrusion plan: ") + e.what());
  }
  return p;
}

std::string IntrusionPlan::to_json() const {
  json j;
  j["strategy"] = strategy_name(strategy);
  j["attack"] = json::parse(attack.echo());
  j["delay_s"] = delay_s;
  j["lock_s"] = lock_s;
  j["trigger_s"] = trigger_s;
  j["allow_out_of_bounds"] = allow_out_of_bounds;
  j["whole_file"] = whole_file;
  j["seed"] = seed;
  return j.dump();
}

void Scenario::validate() const {
  double last = 0.0;
  for (const UserAction& a : actions) {
    if (a.t < last) throw ArgError("scenario: actions must be time-sorted");
    last = a.t;
    if (a.action != "upload" && a.action != "start" && a.action != "pause" &&
        a.action != "resume" && a.action != "cancel" && a.action != "read")
      throw ArgError("scenario: unknown action: " + a.action);
    if ((a.action == "upload" || a.action == "start" || a.action == "read") &&
        a.name.empty())
      throw ArgError("scenario: action '" + a.action + "' needs a file name");
  }
}

Scenario Scenario::from_json(const std::string& text) {
  Scenario s;
  try {
    json j = json::parse(text);
    for (const json& a : j.at("actions")) {
      UserAction u;
      u.t = a.at("t").get<double>();
      u.action = a.at("action").get<std::string>();
      u.name = a.value("name", std::string());
      u.bytes = a.value("bytes", std::string());
      s.actions.push_back(std::move(u));
    }
    s.horizon = j.value("horizon", -1.0);
  } catch (const json::exception& e) {
    throw DataError(std::string("scenario: ") + e.what());
  }
  s.validate();
  return s;
}

std::string Scenario::to_json() const {
  json j;
  json arr = json::array();
  for (const UserAction& a : actions) {
    json e{{"t", a.t}, {"action", a.action}};
    if (!a.name.empty()) e["name"] = a.name;
    if (!a.bytes.empty()) e["bytes"] = a.bytes;
    arr.push_back(std::move(e));
  }
  j["actions"] = arr;
  if (horizon >= 0) j["horizon"] = horizon;
  return j.dump();
}

std::string IntrusionResult::report_json() const {
  json j;
  j["strategy"] = strategy_name(strategy);
  j["seed"] = seed;
  j["hit"] = hit;
  j["miss_reason"] = miss_reason;
  j["target"] = target;
  j["original_digest"] = original_digest;
  j["mutated_digest"] = mutated_digest;
  j["splice_line"] = splice_line;
  j["delay_s"] = delay_s;
  j["lock_s"] = lock_s;
  j["trigger_s"] = trigger_s;
  j["mutation_latency_s"] = mutation_latency_s;
  json ms = json::array();
  for (const Milestone& m : milestones)
    ms.push_back(
        {{"t", m.t}, {"what", m.what}, {"detail", json::parse(m.detail_json)}});
  j["milestones"] = ms;
  return j.dump(2);
}

namespace {

struct Task {
  double t;
  long long seq;
  std::function<void()> fn;
};

struct Engine {
  PrintServerSim& sim;
  const IntrusionPlan& plan;
  IntrusionResult res;
  std::vector<Task> tasks;  // attacker queue
  long long seq = 0;
  bool engaged = false;
  std::string mutated_bytes;

  explicit Engine(PrintServerSim& s, const IntrusionPlan& p)
      : sim(s), plan(p) {
    res.strategy = p.strategy;
    res.seed = p.seed;
  }

  void schedule(double t, std::function<void()> fn) {
    tasks.push_back({t, seq++, std::move(fn)});
  }

  bool pop_next(double* t_out, Task* out) {
    if (tasks.empty()) return false;
    std::size_t best = 0;
    for (std::size_t i = 1; i < tasks.size(); ++i)
      if (tasks[i].t < tasks[best].t ||
          (tasks[i].t == tasks[best].t && tasks[i].seq < tasks[best].seq))
        best = i;
    *t_out = tasks[best].t;
    *out = std::move(tasks[best]);
    tasks.erase(tasks.begin() + static_cast<std::ptrdiff_t>(best));
    return true;
  }

  double peek_next() const {
    double t = std::numeric_limits<double>::infinity();
    for (const Task& k : tasks) t = std::min(t, k.t);
    return t;
  }

  void note(double t, const std::string& what, const json& detail) {
    res.milestones.push_back({t, what, detail.dump()});
  }

  // shared mutation step: download, apply the attack, remember digests
  bool mutate_now(const attack::AttackSpec& spec) {
    std::string bytes;
    ServerResult r = sim.read_file(res.target, Actor::Attacker, &bytes);
    if (!r.ok()) {
      res.miss_reason = "download_failed";
      note(sim.clock(), "miss", {{"reason", res.miss_reason}});
      return false;
    }
    gcode::GcodeProgram prog = gcode::parse_program(bytes);
    auto [mut, audit] = attack::apply_attack(prog, spec);
    mutated_bytes = gcode::serialize_program(mut);
    res.original_digest = digest_hex(bytes);
    res.mutated_digest = digest_hex(mutated_bytes);
    res.mutation_latency_s = mutation_latency_s(prog.lines.size());
    note(sim.clock(), "mutation",
         {{"from", res.original_digest},
          {"to", res.mutated_digest},
          {"touched", audit.touch_count()},
          {"latency_s", res.mutation_latency_s}});
    if (spec.kind == AttackKind::Exfiltration) {
      attack::ExfilEvent ev = attack::exfiltrate_bytes(
          bytes, sim.clock(), res.target, spec.sink);
      note(sim.clock(), "exfiltration",
           {{"digest", ev.digest},
            {"size", ev.size_bytes},
            {"sink", ev.sink}});
    }
    return true;
  }
};

void run_deferred(Engine& e, const UserAction& a, const ServerResult& r) {
  if (e.engaged || a.action != "upload" || !r.ok()) return;
  e.engaged = true;
  e.res.target = a.name;
  e.res.delay_s = e.plan.delay_s;
  e.note(e.sim.clock(), "detected", {{"name", a.name}});
  double t0 = e.sim.clock();
  e.schedule(t0 + e.plan.delay_s, [&e] {
    if (!e.mutate_now(e.plan.attack)) return;
    e.schedule(e.sim.clock() + e.res.mutation_latency_s, [&e] {
      if (e.sim.printer_status().job_state != "idle") {
        e.res.miss_reason = "user_started_before_reupload";
        e.note(e.sim.clock(), "miss", {{"reason", e.res.miss_reason}});
        return;
      }
      ServerResult up =
          e.sim.upload(e.res.target, e.mutated_bytes, Actor::Attacker);
      if (up.ok()) {
        e.res.hit = true;
        e.note(e.sim.clock(), "reupload", {{"digest", e.res.mutated_digest}});
      } else {
        e.res.miss_reason = "reupload_denied";
        e.note(e.sim.clock(), "miss", {{"reason", e.res.miss_reason}});
      }
    });
  });
}

void run_access_jam(Engine& e, const UserAction& a, const ServerResult& r,
                    double lock_s) {
  if (e.engaged || a.action != "upload" || !r.ok()) return;
  e.engaged = true;
  e.res.target = a.name;
  e.res.lock_s = lock_s;
  e.note(e.sim.clock(), "detected", {{"name", a.name}});
  // lock immediately on detection, then swap while the user is jammed
  e.schedule(e.sim.clock(), [&e, lock_s] {
    ServerResult lk = e.sim.lock_file(e.res.target, lock_s, Actor::Attacker);
    if (!lk.ok()) {
      e.res.miss_reason = "lock_failed";
      e.note(e.sim.clock(), "miss", {{"reason", e.res.miss_reason}});
      return;
    }
    e.note(e.sim.clock(), "locked",
           {{"name", e.res.target}, {"duration_s", lock_s}});
    if (!e.mutate_now(e.plan.attack)) return;
    e.schedule(e.sim.clock() + e.res.mutation_latency_s, [&e] {
      if (e.sim.printer_status().job_state != "idle") {
        e.res.miss_reason = "user_started_before_reupload";
        e.note(e.sim.clock(), "miss", {{"reason", e.res.miss_reason}});
        return;
      }
      ServerResult up =
          e.sim.upload(e.res.target, e.mutated_bytes, Actor::Attacker);
      if (up.ok()) {
        e.res.hit = true;
        e.note(e.sim.clock(), "reupload", {{"digest", e.res.mutated_digest}});
      } else {
        e.res.miss_reason = "reupload_denied";
        e.note(e.sim.clock(), "miss", {{"reason", e.res.miss_reason}});
      }
      // the jam window outlives the swap; the lock lapses on schedule
    });
  });
}

void run_execution_phase(Engine& e, const UserAction& a, const ServerResult& r,
                         double trigger_s) {
  if (e.engaged || a.action != "start" || !r.ok()) return;
  e.engaged = true;
  e.res.target = a.name;
  e.res.trigger_s = trigger_s;
  e.note(e.sim.clock(), "detected",
         {{"name", a.name}, {"trigger_s", trigger_s}});
  e.schedule(e.sim.clock() + trigger_s, [&e] {
    server::Status st = e.sim.printer_status();
    if (st.job_state != "printing") {
      e.res.miss_reason = st.job_state == "complete"
                              ? "job_finished_before_trigger"
                              : "job_not_printing_at_trigger";
      e.note(e.sim.clock(), "miss",
             {{"reason", e.res.miss_reason}, {"state", st.job_state}});
      return;
    }
    std::size_t line = st.next_line;
    ServerResult p = e.sim.pause(Actor::Attacker);
    if (!p.ok()) {
      e.res.miss_reason = "pause_failed";
      e.note(e.sim.clock(), "miss", {{"reason", e.res.miss_reason}});
      return;
    }
    e.note(e.sim.clock(), "paused", {{"next_line", line}});
    attack::AttackSpec spec = e.plan.attack;
    std::string bytes;
    e.sim.read_file(e.res.target, Actor::Attacker, &bytes);
    std::size_t n_lines = gcode::parse_program(bytes).lines.size();
    if (line >= n_lines) {
      e.res.miss_reason = "no_remaining_lines";
      e.note(e.sim.clock(), "miss", {{"reason", e.res.miss_reason}});
      e.sim.resume(Actor::Attacker);
      return;
    }
    if (!e.plan.whole_file)
      spec.region = {attack::Region::Kind::Lines, line, n_lines - 1};
    if (!e.mutate_now(spec)) return;
    e.res.splice_line = static_cast<long long>(line);
    e.schedule(e.sim.clock() + e.res.mutation_latency_s, [&e, line] {
      ServerResult up =
          e.sim.upload(e.res.target, e.mutated_bytes, Actor::Attacker);
      ServerResult rs = e.sim.resume(Actor::Attacker);
      if (up.ok() && rs.ok()) {
        e.res.hit = true;
        e.note(e.sim.clock(), "spliced",
               {{"line", line}, {"digest", e.res.mutated_digest}});
      } else {
        e.res.miss_reason = up.ok() ? "resume_failed" : "reupload_denied";
        e.note(e.sim.clock(), "miss", {{"reason", e.res.miss_reason}});
      }
    });
  });
}

}  // namespace

ScenarioRun run_intrusion(PrintServerSim& sim, const IntrusionPlan& plan,
                          const Scenario& script) {
  script.validate();
  if (plan.delay_s < 0) throw ArgError("plan: delay_s must be >= 0");

  Rng rng(plan.seed);
  double lock_s = plan.lock_s;
  double trigger_s = plan.trigger_s;
  if (plan.strategy == Strategy::AccessJam) {
    if (lock_s < 0) lock_s = rng.fork("lock").uniform(5.0, 10.0);
    if (!plan.allow_out_of_bounds && (lock_s < 5.0 || lock_s > 10.0))
      throw ArgError("plan: lock_s must lie in [5,10]");
  }
  if (plan.strategy == Strategy::ExecutionPhase) {
    if (trigger_s < 0) trigger_s = rng.fork("trigger").uniform(120.0, 300.0);
    if (!plan.allow_out_of_bounds && (trigger_s < 120.0 || trigger_s > 300.0))
      throw ArgError("plan: trigger_s must lie in [120,300]");
  }

  Engine eng(sim, plan);

  auto observe = [&](const UserAction& a, const ServerResult& r) {
    switch (plan.strategy) {
      case Strategy::Deferred: run_deferred(eng, a, r); break;
      case Strategy::AccessJam: run_access_jam(eng, a, r, lock_s); break;
      case Strategy::ExecutionPhase:
        run_execution_phase(eng, a, r, trigger_s);
        break;
    }
  };

  auto advance_to = [&](double t) {
    double dt = t - sim.clock();
    if (dt > 0) sim.advance_clock(dt);
  };

  std::size_t ui = 0;
  for (;;) {
    double ut = ui < script.actions.size()
                    ? script.actions[ui].t
                    : std::numeric_limits<double>::infinity();
    double at = eng.peek_next();
    if (ut == std::numeric_limits<double>::infinity() &&
        at == std::numeric_limits<double>::infinity())
      break;
    if (ut <= at) {  // user wins ties
      const UserAction& a = script.actions[ui++];
      advance_to(a.t);
      ServerResult r;
      if (a.action == "upload")
        r = sim.upload(a.name, a.bytes, Actor::User);
      else if (a.action == "start")
        r = sim.start_print(a.name, Actor::User);
      else if (a.action == "pause")
        r = sim.pause(Actor::User);
      else if (a.action == "resume")
        r = sim.resume(Actor::User);
      else if (a.action == "cancel")
        r = sim.cancel(Actor::User);
      else if (a.action == "read")
        r = sim.read_file(a.name, Actor::User, nullptr);
      if (r.error == ServerError::AccessDenied)
        eng.note(sim.clock(), "user_denied",
                 {{"action", a.action}, {"name", a.name}});
      observe(a, r);
    } else {
      Task task;
      double t = 0.0;
      eng.pop_next(&t, &task);
      advance_to(t);
      task.fn();
    }
  }
  if (script.horizon >= 0) advance_to(script.horizon);

  ScenarioRun out;
  if (!eng.res.hit && eng.res.miss_reason.empty() && eng.engaged)
    eng.res.miss_reason = "incomplete";
  if (!eng.engaged) eng.res.miss_reason = "never_engaged";
  out.result = std::move(eng.res);
  out.transcript_jsonl = sim.transcript_jsonl();
  out.state_json = sim.state_json();
  if (!out.result.target.empty())
    sim.read_file(out.result.target, Actor::System, &out.final_bytes);
  return out;
}

static ScenarioRun run_checked(PrintServerSim& sim, const IntrusionPlan& plan,
                               const Scenario& script, Strategy want) {
  if (plan.strategy != want)
    throw ArgError(std::string("plan strategy mismatch: expected ") +
                   strategy_name(want) + ", got " +
                   strategy_name(plan.strategy));
  return run_intrusion(sim, plan, script);
}

ScenarioRun run_deferred_exploit(PrintServerSim& sim, const IntrusionPlan& plan,
                                 const Scenario& script) {
  return run_checked(sim, plan, script, Strategy::Deferred);
}

ScenarioRun run_access_jam_swap(PrintServerSim& sim, const IntrusionPlan& plan,
                                const Scenario& script) {
  return run_checked(sim, plan, script, Strategy::AccessJam);
}

ScenarioRun run_execution_phase_tamper(PrintServerSim& sim,
                                       const IntrusionPlan& plan,
                                       const Scenario& script) {
  return run_checked(sim, plan, script, Strategy::ExecutionPhase);
}

Scenario make_deferred_scenario(const std::string& name,
                                const std::string& bytes, std::uint64_t seed) {
  Rng rng(seed);
  double start_t = rng.fork("scenario-start").uniform(2.0, 60.0);
  Scenario s;
  s.actions.push_back({0.0, "upload", name, bytes});
  s.actions.push_back({start_t, "start", name, {}});
  s.horizon = start_t + 10.0;
  return s;
}

}  // namespace fdmlab::adversary
