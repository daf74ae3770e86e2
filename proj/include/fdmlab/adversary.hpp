#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fdmlab/attack.hpp"
#include "fdmlab/server.hpp"

namespace fdmlab::adversary {

enum class Strategy { Deferred, AccessJam, ExecutionPhase };

const char* strategy_name(Strategy s);
Strategy strategy_from_name(const std::string& name);

struct IntrusionPlan {
  Strategy strategy = Strategy::Deferred;
  attack::AttackSpec attack;

  double delay_s = 3.0;     // Deferred: wait after upload detection
  double lock_s = -1.0;     // AccessJam: negative draws uniform [5,10]
  double trigger_s = -1.0;  // ExecutionPhase: negative draws uniform [120,300]
  bool allow_out_of_bounds = false;
  bool whole_file = false;  // ExecutionPhase: replace whole file, not the tail
  std::uint64_t seed = 0;

  static IntrusionPlan from_json(const std::string& text);
  std::string to_json() const;
};

struct UserAction {
  double t = 0.0;
  std::string action;  // upload | start | pause | resume | cancel | read
  std::string name;
  std::string bytes;  // upload only
};

struct Scenario {
  std::vector<UserAction> actions;  // non-decreasing t
  double horizon = -1.0;            // final clock advance, if beyond

  static Scenario from_json(const std::string& text);
  std::string to_json() const;
  void validate() const;
};

struct Milestone {
  double t = 0.0;
  std::string what;
  std::string detail_json;
};

struct IntrusionResult {
  Strategy strategy = Strategy::Deferred;
  std::uint64_t seed = 0;
  bool hit = false;
  std::string miss_reason;
  std::string target;
  std::string original_digest;
  std::string mutated_digest;
  long long splice_line = -1;  // ExecutionPhase
  double delay_s = 0.0;        // resolved timing, per strategy
  double lock_s = 0.0;
  double trigger_s = 0.0;
  double mutation_latency_s = 0.0;
  std::vector<Milestone> milestones;

  std::string report_json() const;
};

struct ScenarioRun {
  IntrusionResult result;
  std::string transcript_jsonl;  // replayable server event log
  std::string state_json;        // server state snapshot at the end
  std::string final_bytes;       // stored bytes of the target afterwards
};

// Simulated attacker-side work: download + mutate + re-upload cost.
double mutation_latency_s(std::size_t line_count);

ScenarioRun run_intrusion(server::PrintServerSim& sim,
                          const IntrusionPlan& plan, const Scenario& script);

ScenarioRun run_deferred_exploit(server::PrintServerSim& sim,
                                 const IntrusionPlan& plan,
                                 const Scenario& script);
ScenarioRun run_access_jam_swap(server::PrintServerSim& sim,
                                const IntrusionPlan& plan,
                                const Scenario& script);
ScenarioRun run_execution_phase_tamper(server::PrintServerSim& sim,
                                       const IntrusionPlan& plan,
                                       const Scenario& script);

// Upload at t=0, user start drawn uniform [2,60] seconds later.
Scenario make_deferred_scenario(const std::string& name,
                                const std::string& bytes, std::uint64_t seed);

}  // namespace fdmlab::adversary
