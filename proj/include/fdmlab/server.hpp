#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fdmlab/gcode.hpp"

namespace fdmlab::server {

enum class Actor { User, Attacker, System };
const char* actor_name(Actor a);
Actor actor_from_name(const std::string& s);

enum class JobState { Queued, Printing, Paused, Complete, Cancelled };
const char* job_state_name(JobState s);

enum class ServerError {
  None,
  AccessDenied,
  NotFound,
  Conflict,
  IllegalTransition,
  BadGcode,
};

struct ServerResult {
  ServerError error = ServerError::None;
  std::string message;
  bool ok() const { return error == ServerError::None; }
};

struct Event {
  double t = 0.0;
  Actor actor = Actor::System;
  std::string action;
  std::string args_json;  // canonical JSON object
  bool command = false;   // true: replayable API call; false: derived effect
};

struct FileEntry {
  std::string bytes;
  std::string digest;
  double uploaded_at = 0.0;
  bool locked = false;
  Actor lock_owner = Actor::System;
  double lock_expiry = 0.0;
};

struct Status {
  std::string job_state = "idle";
  std::string filename;
  double progress = 0.0;
  double current_z = 0.0;
  double clock = 0.0;
  std::size_t steps_done = 0;
  std::size_t steps_total = 0;
  std::size_t next_line = 0;  // program line of the next motion step
};

// Deterministic in-process print server on a simulated clock.  All mutations
// go through the API below and are event-logged; replaying the command
// events of a transcript reconstructs the state bit-identically.
class PrintServerSim {
 public:
  PrintServerSim() = default;

  ServerResult upload(const std::string& name, const std::string& bytes,
                      Actor actor, bool force = false);
  ServerResult read_file(const std::string& name, Actor actor,
                         std::string* out_bytes) const;
  ServerResult lock_file(const std::string& name, double duration_s,
                         Actor actor);
  ServerResult unlock_file(const std::string& name, Actor actor);
  ServerResult start_print(const std::string& name, Actor actor);
  ServerResult pause(Actor actor);
  ServerResult resume(Actor actor);
  ServerResult cancel(Actor actor);
  void advance_clock(double dt_s);

  Status printer_status() const;
  double clock() const { return clock_; }
  const std::vector<Event>& events() const { return events_; }
  bool has_file(const std::string& name) const;
  const FileEntry* file(const std::string& name) const;
  bool file_locked(const std::string& name) const;  // honours lazy expiry

  std::string state_json() const;       // full serialization incl. log
  std::string transcript_jsonl() const; // one event per line

  static PrintServerSim replay(const std::string& transcript_jsonl);

 private:
  struct ProgramCache {
    std::vector<std::size_t> motion_line;   // program line per motion step
    std::vector<double> motion_done_time;   // active seconds when step ends
    std::vector<double> motion_z;           // z after each motion step
    double total_time = 0.0;
    std::size_t line_count = 0;
  };

  struct Job {
    std::string filename;
    JobState state = JobState::Queued;
    std::string exec_digest;
    std::size_t steps_done = 0;
    double active_seconds = 0.0;
    ProgramCache cache;
  };

  void log(double t, Actor actor, const std::string& action,
           const std::string& args_json, bool command);
  static ProgramCache build_cache(const std::string& bytes);
  bool lock_active(const FileEntry& f) const;
  bool can_touch(const FileEntry& f, Actor actor) const;
  void sync_steps();
  bool job_active() const;

  double clock_ = 0.0;
  std::vector<std::pair<std::string, FileEntry>> files_;  // insertion order
  std::optional<Job> job_;
  std::vector<Event> events_;

  FileEntry* find_file(const std::string& name);
  const FileEntry* find_file(const std::string& name) const;
};

}  // namespace fdmlab::server
