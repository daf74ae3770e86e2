#include "fdmlab/server.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fdmlab/digest.hpp"
#include "fdmlab/errors.hpp"
#include "json.hpp"

namespace fdmlab::server {

using nlohmann::json;

const char* actor_name(Actor a) {
  switch (a) {
    case Actor::User: return "user";
    case Actor::Attacker: return "attacker";
    case Actor::System: return "system";
  }
  return "?";
}

Actor actor_from_name(const std::string& s) {
  if (s == "user") return Actor::User;
  if (s == "attacker") return Actor::Attacker;
  if (s == "system") return Actor::System;
  throw DataError("unknown actor: " + s);
}

const char* job_state_name(JobState s) {
  switch (s) {
    case JobState::Queued: return "queued";
    case JobState::Printing: return "printing";
    case JobState::Paused: return "paused";
    case JobState::Complete: return "complete";
    case JobState::Cancelled: return "cancelled";
  }
  return "?";
}

void PrintServerSim::log(double t, Actor actor, const std::string& action,
                         const std::string& args_json, bool command) {
  events_.push_back({t, actor, action, args_json, command});
}

FileEntry* PrintServerSim::find_file(const std::string& name) {
  for (auto& [n, f] : files_)
    if (n == name) return &f;
  return nullptr;
}

const FileEntry* PrintServerSim::find_file(const std::string& name) const {
  for (const auto& [n, f] : files_)
    if (n == name) return &f;
  return nullptr;
}

bool PrintServerSim::lock_active(const FileEntry& f) const {
  return f.locked && clock_ < f.lock_expiry;
}

bool PrintServerSim::can_touch(const FileEntry& f, Actor actor) const {
  return !lock_active(f) || f.lock_owner == actor || actor == Actor::System;
}

bool PrintServerSim::has_file(const std::string& name) const {
  return find_file(name) != nullptr;
}

const FileEntry* PrintServerSim::file(const std::string& name) const {
  return find_file(name);
}

bool PrintServerSim::file_locked(const std::string& name) const {
  const FileEntry* f = find_file(name);
  return f && lock_active(*f);
}

PrintServerSim::ProgramCache PrintServerSim::build_cache(
    const std::string& bytes) {
  ProgramCache c;
  gcode::GcodeProgram prog = gcode::parse_program(bytes);
  gcode::InterpretResult ir = gcode::interpret(prog);
  c.line_count = prog.lines.size();
  // per-line completion times, then restricted to motion lines
  double t = 0.0;
  std::vector<double> done_at(prog.lines.size(), 0.0);
  for (std::size_t i = 0; i < prog.lines.size(); ++i) {
    t += ir.line_duration_s[i];
    done_at[i] = t;
  }
  c.total_time = t;
  for (const auto& s : ir.steps) {
    c.motion_line.push_back(s.line_index);
    c.motion_done_time.push_back(done_at[s.line_index]);
    c.motion_z.push_back(s.after.position.z);
  }
  return c;
}

ServerResult PrintServerSim::upload(const std::string& name,
                                    const std::string& bytes, Actor actor,
                                    bool force) {
  if (name.empty()) throw ArgError("upload: empty file name");
  FileEntry* existing = find_file(name);
  if (existing && !can_touch(*existing, actor)) {
    json a{{"name", name}};
    log(clock_, actor, "jammed", a.dump(), true);
    return {ServerError::AccessDenied, "file is locked: " + name};
  }
  if (!force) {
    try {
      (void)gcode::parse_program(bytes);
    } catch (const DataError& e) {
      json a{{"name", name}, {"error", e.what()}, {"bytes", bytes}};
      log(clock_, actor, "upload_rejected", a.dump(), true);
      return {ServerError::BadGcode, e.what()};
    }
  }
  std::string digest = digest_hex(bytes);
  bool replaced = existing != nullptr;
  if (existing) {
    existing->bytes = bytes;
    existing->digest = digest;
    existing->uploaded_at = clock_;
  } else {
    FileEntry f;
    f.bytes = bytes;
    f.digest = digest;
    f.uploaded_at = clock_;
    files_.emplace_back(name, std::move(f));
  }
  json a{{"name", name},
         {"digest", digest},
         {"size", bytes.size()},
         {"replaced", replaced},
         {"bytes", bytes}};
  if (force) a["force"] = true;
  log(clock_, actor, "upload", a.dump(), true);
  return {};
}

ServerResult PrintServerSim::read_file(const std::string& name, Actor actor,
                                       std::string* out_bytes) const {
  const FileEntry* f = find_file(name);
  if (!f) return {ServerError::NotFound, "no such file: " + name};
  if (!can_touch(*f, actor))
    return {ServerError::AccessDenied, "file is locked: " + name};
  if (out_bytes) *out_bytes = f->bytes;
  return {};
}

ServerResult PrintServerSim::lock_file(const std::string& name,
                                       double duration_s, Actor actor) {
  if (duration_s < 0) throw ArgError("lock_file: negative duration");
  FileEntry* f = find_file(name);
  if (!f) {
    json a{{"name", name}, {"duration", duration_s}, {"reason", "not_found"}};
    log(clock_, actor, "lock_failed", a.dump(), true);
    return {ServerError::NotFound, "no such file: " + name};
  }
  if (lock_active(*f) && f->lock_owner != actor) {
    json a{{"name", name}, {"duration", duration_s}, {"reason", "conflict"}};
    log(clock_, actor, "lock_failed", a.dump(), true);
    return {ServerError::Conflict, "already locked: " + name};
  }
  f->locked = true;
  f->lock_owner = actor;
  f->lock_expiry = clock_ + duration_s;
  json a{{"name", name}, {"duration", duration_s}};
  log(clock_, actor, "lock", a.dump(), true);
  return {};
}

ServerResult PrintServerSim::unlock_file(const std::string& name,
                                         Actor actor) {
  FileEntry* f = find_file(name);
  if (!f) {
    json a{{"name", name}, {"reason", "not_found"}};
    log(clock_, actor, "unlock_failed", a.dump(), true);
    return {ServerError::NotFound, "no such file: " + name};
  }
  if (!f->locked || !lock_active(*f)) {
    json a{{"name", name}, {"reason", "not_locked"}};
    log(clock_, actor, "unlock_failed", a.dump(), true);
    return {ServerError::IllegalTransition, "not locked: " + name};
  }
  if (f->lock_owner != actor && actor != Actor::System) {
    json a{{"name", name}, {"reason", "not_owner"}};
    log(clock_, actor, "unlock_failed", a.dump(), true);
    return {ServerError::AccessDenied, "lock owned by another actor"};
  }
  f->locked = false;
  json a{{"name", name}};
  log(clock_, actor, "unlock", a.dump(), true);
  return {};
}

bool PrintServerSim::job_active() const {
  return job_ && (job_->state == JobState::Queued ||
                  job_->state == JobState::Printing ||
                  job_->state == JobState::Paused);
}

ServerResult PrintServerSim::start_print(const std::string& name,
                                         Actor actor) {
  auto fail = [&](ServerError err, const std::string& reason,
                  const std::string& msg) {
    json a{{"name", name}, {"reason", reason}};
    log(clock_, actor, "start_failed", a.dump(), true);
    return ServerResult{err, msg};
  };
  FileEntry* f = find_file(name);
  if (!f) return fail(ServerError::NotFound, "not_found", "no such file");
  if (!can_touch(*f, actor))
    return fail(ServerError::AccessDenied, "locked", "file is locked");
  if (job_active())
    return fail(ServerError::Conflict, "busy", "a job is already active");

  Job j;
  j.filename = name;
  j.exec_digest = f->digest;
  try {
    j.cache = build_cache(f->bytes);
  } catch (const DataError& e) {
    return fail(ServerError::BadGcode, "bad_gcode", e.what());
  }
  job_ = std::move(j);
  json a{{"name", name},
         {"digest", f->digest},
         {"motion_lines", job_->cache.motion_line.size()}};
  log(clock_, actor, "start", a.dump(), true);
  return {};
}

ServerResult PrintServerSim::pause(Actor actor) {
  if (!job_ || job_->state != JobState::Printing) {
    json a{{"reason", "no_printing_job"}};
    log(clock_, actor, "pause_failed", a.dump(), true);
    return {ServerError::IllegalTransition, "no printing job to pause"};
  }
  job_->state = JobState::Paused;
  json a{{"steps_done", job_->steps_done}};
  log(clock_, actor, "pause", a.dump(), true);
  return {};
}

ServerResult PrintServerSim::resume(Actor actor) {
  if (!job_ || job_->state != JobState::Paused) {
    json a{{"reason", "not_paused"}};
    log(clock_, actor, "resume_failed", a.dump(), true);
    return {ServerError::IllegalTransition, "no paused job to resume"};
  }
  const FileEntry* f = find_file(job_->filename);
  bool spliced = false;
  std::string from = job_->exec_digest, to;
  if (f && f->digest != job_->exec_digest) {
    // the stored file changed under the paused job: execution continues
    // from the same step index into the new content
    ProgramCache fresh = build_cache(f->bytes);
    std::size_t s = std::min(job_->steps_done, fresh.motion_line.size());
    job_->cache = std::move(fresh);
    job_->steps_done = s;
    job_->active_seconds = s > 0 ? job_->cache.motion_done_time[s - 1] : 0.0;
    to = f->digest;
    job_->exec_digest = f->digest;
    spliced = true;
  }
  job_->state = JobState::Printing;
  json a{{"steps_done", job_->steps_done}, {"spliced", spliced}};
  log(clock_, actor, "resume", a.dump(), true);
  if (spliced) {
    std::size_t next =
        job_->steps_done < job_->cache.motion_line.size()
            ? job_->cache.motion_line[job_->steps_done]
            : job_->cache.line_count;
    json sa{{"line", next}, {"from", from}, {"to", to}};
    log(clock_, Actor::System, "splice", sa.dump(), false);
  }
  return {};
}

ServerResult PrintServerSim::cancel(Actor actor) {
  if (!job_active()) {
    json a{{"reason", "no_active_job"}};
    log(clock_, actor, "cancel_failed", a.dump(), true);
    return {ServerError::IllegalTransition, "no active job"};
  }
  job_->state = JobState::Cancelled;
  json a{{"name", job_->filename}};
  log(clock_, actor, "cancel", a.dump(), true);
  return {};
}

void PrintServerSim::sync_steps() {
  if (!job_) return;
  const auto& done = job_->cache.motion_done_time;
  job_->steps_done = static_cast<std::size_t>(
      std::upper_bound(done.begin(), done.end(), job_->active_seconds) -
      done.begin());
}

void PrintServerSim::advance_clock(double dt_s) {
  if (dt_s < 0) throw ArgError("advance_clock: negative dt");
  if (dt_s == 0) return;
  json a{{"dt", dt_s}};
  log(clock_, Actor::System, "advance", a.dump(), true);

  if (job_ && job_->state == JobState::Queued) {
    job_->state = JobState::Printing;
    json pa{{"name", job_->filename}};
    log(clock_, Actor::System, "printing", pa.dump(), false);
  }

  const double target = clock_ + dt_s;
  for (;;) {
    // locks already past due (e.g. zero-duration): release where we stand
    bool released = false;
    std::vector<std::string> due;
    for (auto& [n, f] : files_)
      if (f.locked && f.lock_expiry <= clock_) due.push_back(n);
    std::sort(due.begin(), due.end());
    for (const std::string& n : due) {
      FileEntry* f = find_file(n);
      f->locked = false;
      json ea{{"name", n}};
      log(clock_, Actor::System, "lock_expired", ea.dump(), false);
      released = true;
    }
    if (released) continue;

    constexpr double kNever = std::numeric_limits<double>::infinity();
    double t_exp = kNever;
    for (auto& [n, f] : files_)
      if (f.locked && f.lock_expiry > clock_ && f.lock_expiry <= target)
        t_exp = std::min(t_exp, f.lock_expiry);

    double t_comp = kNever;
    bool printing = job_ && job_->state == JobState::Printing;
    if (printing && job_->active_seconds < job_->cache.total_time)
      t_comp = clock_ + (job_->cache.total_time - job_->active_seconds);

    double stop = std::min({target, t_exp, t_comp});
    if (printing) {
      job_->active_seconds += stop - clock_;
      sync_steps();
    }
    clock_ = stop;

    if (stop == t_exp) {
      std::vector<std::string> names;
      for (auto& [n, f] : files_)
        if (f.locked && f.lock_expiry == t_exp) names.push_back(n);
      std::sort(names.begin(), names.end());
      for (const std::string& n : names) {
        find_file(n)->locked = false;
        json ea{{"name", n}};
        log(clock_, Actor::System, "lock_expired", ea.dump(), false);
      }
    }
    if (printing && stop == t_comp) {
      job_->active_seconds = job_->cache.total_time;
      sync_steps();
      job_->state = JobState::Complete;
      json ca{{"name", job_->filename}};
      log(clock_, Actor::System, "complete", ca.dump(), false);
    }
    if (clock_ >= target) break;
  }
}

Status PrintServerSim::printer_status() const {
  Status st;
  st.clock = clock_;
  if (!job_) return st;
  st.job_state = job_state_name(job_->state);
  st.filename = job_->filename;
  st.steps_done = job_->steps_done;
  st.steps_total = job_->cache.motion_line.size();
  st.progress =
      st.steps_total == 0
          ? (job_->state == JobState::Complete ? 1.0 : 0.0)
          : static_cast<double>(st.steps_done) /
                static_cast<double>(st.steps_total);
  st.current_z =
      job_->steps_done > 0 ? job_->cache.motion_z[job_->steps_done - 1] : 0.0;
  st.next_line = job_->steps_done < job_->cache.motion_line.size()
                     ? job_->cache.motion_line[job_->steps_done]
                     : job_->cache.line_count;
  return st;
}

std::string PrintServerSim::state_json() const {
  json j;
  j["clock"] = clock_;
  json files = json::array();
  for (const auto& [n, f] : files_) {
    files.push_back({{"name", n},
                     {"digest", f.digest},
                     {"size", f.bytes.size()},
                     {"uploaded_at", f.uploaded_at},
                     {"locked", f.locked},
                     {"lock_owner", actor_name(f.lock_owner)},
                     {"lock_expiry", f.lock_expiry}});
  }
  j["files"] = files;
  if (job_) {
    j["job"] = {{"filename", job_->filename},
                {"state", job_state_name(job_->state)},
                {"digest", job_->exec_digest},
                {"steps_done", job_->steps_done},
                {"active_seconds", job_->active_seconds}};
  } else {
    j["job"] = nullptr;
  }
  json evs = json::array();
  for (const Event& e : events_) {
    evs.push_back({{"t", e.t},
                   {"actor", actor_name(e.actor)},
                   {"action", e.action},
                   {"args", json::parse(e.args_json)},
                   {"command", e.command}});
  }
  j["events"] = evs;
  return j.dump(2);
}

std::string PrintServerSim::transcript_jsonl() const {
  std::string out;
  for (const Event& e : events_) {
    json j{{"t", e.t},
           {"actor", actor_name(e.actor)},
           {"action", e.action},
           {"args", json::parse(e.args_json)},
           {"command", e.command}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

PrintServerSim PrintServerSim::replay(const std::string& transcript_jsonl) {
  PrintServerSim sim;
  std::size_t start = 0;
  while (start < transcript_jsonl.size()) {
    std::size_t nl = transcript_jsonl.find('\n', start);
    std::string line = transcript_jsonl.substr(
        start, nl == std::string::npos ? std::string::npos : nl - start);
    start = nl == std::string::npos ? transcript_jsonl.size() : nl + 1;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError(std::string("transcript: invalid JSON line: ") +
                      e.what());
    }
    if (!j.value("command", false)) continue;  // effects regenerate
    std::string action = j.at("action").get<std::string>();
    Actor actor = actor_from_name(j.at("actor").get<std::string>());
    json args = j.value("args", json::object());
    if (action == "upload" || action == "jammed" ||
        action == "upload_rejected") {
      sim.upload(args.at("name").get<std::string>(),
                 args.value("bytes", std::string()), actor,
                 args.value("force", false));
    } else if (action == "lock" || action == "lock_failed") {
      sim.lock_file(args.at("name").get<std::string>(),
                    args.value("duration", 0.0), actor);
    } else if (action == "unlock" || action == "unlock_failed") {
      sim.unlock_file(args.at("name").get<std::string>(), actor);
    } else if (action == "start" || action == "start_failed") {
      sim.start_print(args.at("name").get<std::string>(), actor);
    } else if (action == "pause" || action == "pause_failed") {
      sim.pause(actor);
    } else if (action == "resume" || action == "resume_failed") {
      sim.resume(actor);
    } else if (action == "cancel" || action == "cancel_failed") {
      sim.cancel(actor);
    } else if (action == "advance") {
      sim.advance_clock(args.at("dt").get<double>());
    } else {
      throw DataError("transcript: unknown command action: " + action);
    }
  }
  return sim;
}

}  // namespace fdmlab::server
