#include "fdmlab/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <sstream>
#include <utility>

#include "json.hpp"

#include "fdmlab/digest.hpp"
#include "fdmlab/errors.hpp"
#include "fdmlab/fixtures.hpp"
#include "fdmlab/gcode.hpp"
#include "fdmlab/rng.hpp"
#include "fdmlab/telemetry.hpp"

namespace fdmlab::eval {
namespace {

constexpr double kNominalFeed = 1500.0;

// Rethrow stage failures with the stage name while preserving the error
// class (and therefore the CLI exit code).
template <typename F>
auto stage(const char* name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ArgError& e) {
    throw ArgError(std::string("stage ") + name + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError(std::string("stage ") + name + ": " + e.what());
  } catch (const NumericError& e) {
    throw NumericError(std::string("stage ") + name + ": " + e.what());
  }
}

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

double f1_of(double precision, double recall, bool& zero_division) {
  double denom = precision + recall;
  if (denom == 0.0) {
    zero_division = true;
    return 0.0;
  }
  return 2.0 * precision * recall / denom;
}

}  // namespace

// --------------------------------------------------------------------metrics

ConfusionMatrix confusion(const std::vector<int>& labels,
                          const std::vector<int>& predictions) {
  if (labels.size() != predictions.size())
    throw ArgError("confusion: labels and predictions differ in length");
  if (labels.empty()) throw ArgError("confusion: need at least one sample");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    int l = labels[i], p = predictions[i];
    if ((l != 0 && l != 1) || (p != 0 && p != 1))
      throw ArgError("confusion: labels and predictions must be 0 or 1");
    if (l == 1)
      (p == 1 ? cm.tp : cm.fn) += 1;
    else
      (p == 1 ? cm.fp : cm.tn) += 1;
  }
  return cm;
}

MetricsReport metrics(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw ArgError("metrics: empty confusion matrix");
  MetricsReport r;
  auto rate = [&r](std::size_t num, std::size_t den) {
    if (den == 0) {
      r.zero_division = true;
      return 0.0;
    }
    return static_cast<double>(num) / static_cast<double>(den);
  };
  r.attack.precision = rate(cm.tp, cm.tp + cm.fp);
  r.attack.recall = rate(cm.tp, cm.tp + cm.fn);
  r.attack.f1 = f1_of(r.attack.precision, r.attack.recall, r.zero_division);
  r.benign.precision = rate(cm.tn, cm.tn + cm.fn);
  r.benign.recall = rate(cm.tn, cm.tn + cm.fp);
  r.benign.f1 = f1_of(r.benign.precision, r.benign.recall, r.zero_division);
  double total = static_cast<double>(cm.total());
  r.accuracy = static_cast<double>(cm.tp + cm.tn) / total;
  r.macro_f1 = 0.5 * (r.benign.f1 + r.attack.f1);
  r.weighted_f1 = (static_cast<double>(cm.actual_benign()) * r.benign.f1 +
                   static_cast<double>(cm.actual_attack()) * r.attack.f1) /
                  total;
  return r;
}

double auroc(const std::vector<double>& scores,
             const std::vector<int>& labels) {
  if (scores.size() != labels.size())
    throw ArgError("auroc: scores and labels differ in length");
  if (scores.empty()) throw ArgError("auroc: empty input");
  std::size_t n_pos = 0, n_neg = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i]))
      throw NumericError("auroc: non-finite score");
    if (labels[i] == 1)
      ++n_pos;
    else if (labels[i] == 0)
      ++n_neg;
    else
      throw ArgError("auroc: labels must be 0 or 1");
  }
  if (n_pos == 0 || n_neg == 0)
    throw DataError("auroc: undefined, both classes must be present");

  // Mann-Whitney U from average ranks; equals the trapezoidal ROC area,
  // ties contributing half.
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  const std::size_t n = idx.size();
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[idx[j + 1]] == scores[idx[i]]) ++j;
    double avg_rank = 0.5 * static_cast<double>(i + j) + 1.0;  // 1-based
    for (std::size_t k = i; k <= j; ++k)
      if (labels[idx[k]] == 1) rank_sum_pos += avg_rank;
    i = j + 1;
  }
  double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
  double u = rank_sum_pos - np * (np + 1.0) / 2.0;
  return u / (np * nn);
}

// -------------------------------------------------------------configuration

std::vector<AttackDatasetPlan> default_attack_plans(std::size_t windows) {
  using K = attack::AttackKind;
  return {{K::UnderExtrusion, windows},
          {K::OverExtrusion, windows},
          {K::NoiseInjection, windows},
          {K::DimensionalChange, windows},
          {K::CavityInsertion, windows}};
}

void ExperimentConfig::validate() const {
  if (train_windows < 2) throw ArgError("config: train_windows must be >= 2");
  if (val_windows < 20)
    throw ArgError("config: val_windows must be >= 20 (threshold calibration)");
  if (window_periods < 1)
    throw ArgError("config: window_periods must be >= 1");
  if (kmeans_k < 1) throw ArgError("config: kmeans_k must be >= 1");
  if (train_windows < kmeans_k)
    throw ArgError("config: train_windows must be >= kmeans_k");
  if (!(threshold_percentile >= 0.0 && threshold_percentile <= 100.0))
    throw ArgError("config: threshold_percentile must be in [0, 100]");
  head.validate();
  ae.validate();
  bool seen[6] = {false, false, false, false, false, false};
  for (const auto& plan : attacks) {
    if (plan.kind == attack::AttackKind::Exfiltration)
      throw ArgError(
          "config: exfiltration leaves no telemetry fingerprint; it is not a "
          "dataset class");
    if (plan.windows < 1)
      throw ArgError("config: attack dataset windows must be >= 1");
    auto bit = static_cast<std::size_t>(plan.kind);
    if (seen[bit])
      throw ArgError(std::string("config: duplicate attack class '") +
                     attack::attack_kind_name(plan.kind) + "'");
    seen[bit] = true;
  }
}

std::string ExperimentConfig::echo() const {
  std::string s = "seed=" + std::to_string(seed);
  s += " train_windows=" + std::to_string(train_windows);
  s += " val_windows=" + std::to_string(val_windows);
  s += " attacks=[";
  for (std::size_t i = 0; i < attacks.size(); ++i) {
    if (i) s += ",";
    s += attack::attack_kind_name(attacks[i].kind);
    s += ":" + std::to_string(attacks[i].windows);
  }
  s += "] window_periods=" + std::to_string(window_periods);
  s += " kmeans_k=" + std::to_string(kmeans_k);
  s += " threshold_pct=" + fmt("%g", threshold_percentile);
  s += " head={" + head.echo() + "}";
  s += " ae={" + ae.echo() + "}";
  return s;
}

ExperimentConfig paper_scale_preset() {
  using K = attack::AttackKind;
  ExperimentConfig cfg;
  cfg.seed = 42;
  cfg.train_windows = 98720;
  cfg.val_windows = 57373;
  cfg.attacks = {{K::UnderExtrusion, 10120},
                 {K::OverExtrusion, 9950},
                 {K::NoiseInjection, 15456},
                 {K::DimensionalChange, 9324},
                 {K::CavityInsertion, 10521}};
  return cfg;
}

std::string plan_manifest(const ExperimentConfig& cfg) {
  cfg.validate();
  nlohmann::json j;
  j["schema_version"] = 1;
  j["kind"] = "experiment-plan";
  j["seed"] = cfg.seed;
  j["window_periods"] = cfg.window_periods;
  nlohmann::json sets = nlohmann::json::array();
  sets.push_back({{"name", "benign_train"},
                  {"role", "train"},
                  {"label", 0},
                  {"windows", cfg.train_windows}});
  sets.push_back({{"name", "benign_val"},
                  {"role", "validation"},
                  {"label", 0},
                  {"windows", cfg.val_windows}});
  for (const auto& plan : cfg.attacks)
    sets.push_back({{"name", attack::attack_kind_name(plan.kind)},
                    {"role", "validation"},
                    {"label", 1},
                    {"windows", plan.windows}});
  j["datasets"] = std::move(sets);
  return j.dump(2);
}

namespace {

std::string trim(std::string s) {
  auto issp = [](unsigned char c) { return std::isspace(c) != 0; };
  while (!s.empty() && issp(static_cast<unsigned char>(s.back()))) s.pop_back();
  std::size_t i = 0;
  while (i < s.size() && issp(static_cast<unsigned char>(s[i]))) ++i;
  return s.substr(i);
}

double parse_double_cfg(int line, const std::string& key,
                        const std::string& v) {
  if (v.empty())
    throw ArgError("config line " + std::to_string(line) + ": " + key +
                   ": empty value");
  char* end = nullptr;
  errno = 0;
  double d = std::strtod(v.c_str(), &end);
  if (end != v.c_str() + v.size() || errno == ERANGE || !std::isfinite(d))
    throw ArgError("config line " + std::to_string(line) + ": " + key +
                   ": not a finite number: '" + v + "'");
  return d;
}

std::uint64_t parse_u64_cfg(int line, const std::string& key,
                            const std::string& v) {
  if (v.empty() || v[0] == '-')
    throw ArgError("config line " + std::to_string(line) + ": " + key +
                   ": not a non-negative integer: '" + v + "'");
  char* end = nullptr;
  errno = 0;
  unsigned long long u = std::strtoull(v.c_str(), &end, 10);
  if (end != v.c_str() + v.size() || errno == ERANGE)
    throw ArgError("config line " + std::to_string(line) + ": " + key +
                   ": not a non-negative integer: '" + v + "'");
  return static_cast<std::uint64_t>(u);
}

int parse_int_cfg(int line, const std::string& key, const std::string& v) {
  std::uint64_t u = parse_u64_cfg(line, key, v);
  if (u > 1000000000ULL)
    throw ArgError("config line " + std::to_string(line) + ": " + key +
                   ": out of range: '" + v + "'");
  return static_cast<int>(u);
}

std::optional<attack::AttackKind> windows_key_kind(const std::string& key) {
  using K = attack::AttackKind;
  for (K k : {K::UnderExtrusion, K::OverExtrusion, K::NoiseInjection,
              K::DimensionalChange, K::CavityInsertion}) {
    if (key == std::string(attack::attack_kind_name(k)) + "_windows") return k;
  }
  return std::nullopt;
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& text) {
  ExperimentConfig cfg;
  cfg.attacks = default_attack_plans();
  std::string section;
  std::istringstream in(text);
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string line = raw;
    std::size_t cut = line.find_first_of("#;");
    if (cut != std::string::npos) line.resize(cut);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3)
        throw ArgError("config line " + std::to_string(lineno) +
                       ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section != "experiment" && section != "head" && section != "ae")
        throw ArgError("config line " + std::to_string(lineno) +
                       ": unknown section [" + section + "]");
      continue;
    }
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ArgError("config line " + std::to_string(lineno) +
                     ": expected 'key = value'");
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    if (key.empty())
      throw ArgError("config line " + std::to_string(lineno) + ": empty key");
    if (section.empty())
      throw ArgError("config line " + std::to_string(lineno) +
                     ": key before any [section]");

    if (section == "experiment") {
      if (key == "seed") {
        cfg.seed = parse_u64_cfg(lineno, key, val);
      } else if (key == "train_windows") {
        cfg.train_windows =
            static_cast<std::size_t>(parse_u64_cfg(lineno, key, val));
      } else if (key == "val_windows") {
        cfg.val_windows =
            static_cast<std::size_t>(parse_u64_cfg(lineno, key, val));
      } else if (key == "attack_windows") {
        auto n = static_cast<std::size_t>(parse_u64_cfg(lineno, key, val));
        for (auto& plan : cfg.attacks) plan.windows = n;
      } else if (auto kind = windows_key_kind(key)) {
        auto n = static_cast<std::size_t>(parse_u64_cfg(lineno, key, val));
        for (auto& plan : cfg.attacks)
          if (plan.kind == *kind) plan.windows = n;
      } else if (key == "window_periods") {
        cfg.window_periods = parse_int_cfg(lineno, key, val);
      } else if (key == "kmeans_k") {
        cfg.kmeans_k = static_cast<std::size_t>(parse_u64_cfg(lineno, key, val));
      } else if (key == "threshold_percentile") {
        cfg.threshold_percentile = parse_double_cfg(lineno, key, val);
      } else if (key == "out_dir") {
        cfg.out_dir = val;
      } else {
        throw ArgError("config line " + std::to_string(lineno) +
                       ": unknown key '" + key + "' in [experiment]");
      }
    } else if (section == "head") {
      if (key == "learning_rate") {
        cfg.head.learning_rate = parse_double_cfg(lineno, key, val);
      } else if (key == "batch_size") {
        cfg.head.batch_size = parse_int_cfg(lineno, key, val);
      } else if (key == "epochs") {
        cfg.head.epochs = parse_int_cfg(lineno, key, val);
      } else if (key == "beta1") {
        cfg.head.beta1 = parse_double_cfg(lineno, key, val);
      } else if (key == "beta2") {
        cfg.head.beta2 = parse_double_cfg(lineno, key, val);
      } else if (key == "eps") {
        cfg.head.eps = parse_double_cfg(lineno, key, val);
      } else if (key == "key_rate") {
        cfg.head.corruption.key_rate = parse_double_cfg(lineno, key, val);
      } else if (key == "value_rate") {
        cfg.head.corruption.value_rate = parse_double_cfg(lineno, key, val);
      } else if (key == "value_jitter") {
        cfg.head.corruption.value_jitter = parse_double_cfg(lineno, key, val);
      } else if (key == "min_changes") {
        cfg.head.corruption.min_changes = parse_int_cfg(lineno, key, val);
      } else {
        throw ArgError("config line " + std::to_string(lineno) +
                       ": unknown key '" + key + "' in [head]");
      }
    } else {  // [ae]
      if (key == "learning_rate") {
        cfg.ae.learning_rate = parse_double_cfg(lineno, key, val);
      } else if (key == "batch_size") {
        cfg.ae.batch_size = parse_int_cfg(lineno, key, val);
      } else if (key == "epochs") {
        cfg.ae.epochs = parse_int_cfg(lineno, key, val);
      } else if (key == "beta1") {
        cfg.ae.beta1 = parse_double_cfg(lineno, key, val);
      } else if (key == "beta2") {
        cfg.ae.beta2 = parse_double_cfg(lineno, key, val);
      } else if (key == "eps") {
        cfg.ae.eps = parse_double_cfg(lineno, key, val);
      } else {
        throw ArgError("config line " + std::to_string(lineno) +
                       ": unknown key '" + key + "' in [ae]");
      }
    }
  }
  cfg.validate();
  return cfg;
}

// -------------------------------------------------------------------datasets

const std::vector<double>& benign_feed_menu() {
  static const std::vector<double> menu = {1200.0, 1350.0, 1500.0, 1650.0,
                                           1800.0};
  return menu;
}

namespace {

gcode::GcodeProgram cube_program(double feed) {
  fixtures::CubeParams p;
  p.print_feed = feed;
  return gcode::parse_program(fixtures::build_cube_gcode(p));
}

// Dataset-generation operating points. The under/over factors are the attack
// module defaults; the noise rate is densified so nearly every multi-period
// log window contains a detour pair, and the cavity slab spans the part
// interior so most windows carry the zero-flow fingerprint.
attack::AttackSpec dataset_attack_spec(attack::AttackKind kind,
                                       std::uint64_t seed) {
  attack::AttackSpec sp;
  sp.kind = kind;
  sp.seed = seed;
  switch (kind) {
    case attack::AttackKind::UnderExtrusion:
      sp.factor = 0.72;
      break;
    case attack::AttackKind::OverExtrusion:
      sp.factor = 1.49;
      break;
    case attack::AttackKind::NoiseInjection:
      sp.rate = 60.0;
      sp.amplitude = 0.3;
      break;
    case attack::AttackKind::DimensionalChange:
      sp.sx = 0.98;
      sp.sy = 0.98;
      sp.sz = 1.0;
      break;
    case attack::AttackKind::CavityInsertion:
      sp.z_lo = 0.3;
      sp.z_hi = 4.8;
      break;
    case attack::AttackKind::Exfiltration:
      throw ArgError("dataset: exfiltration is not a telemetry dataset class");
  }
  return sp;
}

WindowSet generate_set(const ExperimentConfig& cfg, const std::string& name,
                       int label, std::size_t target,
                       std::optional<attack::AttackKind> kind) {
  WindowSet ws;
  ws.name = name;
  ws.label = label;
  ws.raw.names = telemetry::channel_names();
  ws.raw.rows.reserve(target);
  ws.ids.reserve(target);
  ws.digests.reserve(target);
  const auto& menu = benign_feed_menu();
  std::string digest_stream;

  for (std::size_t run = 0; ws.raw.rows.size() < target; ++run) {
    Rng shard = Rng(cfg.seed).fork("dataset").fork(name).fork(run);
    std::uint64_t sim_seed = shard.next_u64();
    std::uint64_t attack_seed = shard.next_u64();

    double feed = kind ? kNominalFeed : menu[run % menu.size()];
    gcode::GcodeProgram prog = cube_program(feed);
    if (kind) {
      attack::AttackSpec sp = dataset_attack_spec(*kind, attack_seed);
      prog = attack::apply_attack(prog, sp).first;
    }

    telemetry::SimConfig sc;
    sc.seed = sim_seed;
    telemetry::TelemetryRun sim = telemetry::execute(prog, sc);
    std::vector<telemetry::LogRecord> wins =
        telemetry::window_logs(sim.records, cfg.window_periods);

    // Steady-state trim: keep the contiguous span from the first to the last
    // extruding window. Heat-up and cool-down drop from every dataset alike;
    // interior zero-flow windows (cavity slabs) survive.
    std::size_t first = wins.size(), last = 0;
    for (std::size_t i = 0; i < wins.size(); ++i) {
      if (wins[i].flow_rate > 0.0) {
        if (first == wins.size()) first = i;
        last = i;
      }
    }
    // Runs are statistically identical, so a run that yields nothing means
    // the configuration can never reach the target; fail fast.
    if (first == wins.size())
      throw DataError("dataset '" + name +
                      "': a run produced no extruding windows (window_periods "
                      "too large for the program?)");

    for (std::size_t i = first; i <= last && ws.raw.rows.size() < target;
         ++i) {
      std::vector<double> row = telemetry::record_values(wins[i]);
      char idbuf[96];
      std::snprintf(idbuf, sizeof idbuf, "%s/%04zu/%04zu", name.c_str(), run,
                    i - first);
      std::string id = idbuf;
      std::string body = id;
      body.push_back('\n');
      char num[40];
      for (double v : row) {
        std::snprintf(num, sizeof num, "%.17g,", v);
        body += num;
      }
      std::string dg = digest_hex(body);
      ws.ids.push_back(std::move(id));
      digest_stream += dg;
      digest_stream.push_back('\n');
      ws.digests.push_back(std::move(dg));
      ws.raw.rows.push_back(std::move(row));
    }
  }
  ws.rolling_digest = digest_hex(digest_stream);
  ws.raw.validate();
  return ws;
}

}  // namespace

DatasetBundle build_datasets(const ExperimentConfig& cfg) {
  cfg.validate();
  DatasetBundle b;
  b.train = generate_set(cfg, "benign_train", 0, cfg.train_windows,
                         std::nullopt);
  b.val = generate_set(cfg, "benign_val", 0, cfg.val_windows, std::nullopt);
  b.attacks.reserve(cfg.attacks.size());
  for (const auto& plan : cfg.attacks)
    b.attacks.push_back(generate_set(cfg, attack::attack_kind_name(plan.kind),
                                     1, plan.windows, plan.kind));
  return b;
}

// ---------------------------------------------------------------------report

std::string DetectionReport::to_json() const {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["kind"] = "detection-report";
  j["config"] = config_echo;
  nlohmann::json sets = nlohmann::json::array();
  for (const auto& d : datasets)
    sets.push_back({{"name", d.name},
                    {"label", d.label},
                    {"windows", d.windows},
                    {"digest", d.digest}});
  j["datasets"] = std::move(sets);
  j["surviving_features"] = surviving_features;
  j["threshold"] = {{"tau", threshold.tau},
                    {"percentile", threshold.percentile_used},
                    {"count", threshold.count},
                    {"mean", threshold.mean},
                    {"p50", threshold.p50},
                    {"p95", threshold.p95},
                    {"p99", threshold.p99}};
  j["confusion"] = {{"tp", cm.tp}, {"fp", cm.fp}, {"tn", cm.tn}, {"fn", cm.fn}};
  j["metrics"] = {
      {"accuracy", metrics.accuracy},
      {"macro_f1", metrics.macro_f1},
      {"weighted_f1", metrics.weighted_f1},
      {"zero_division", metrics.zero_division},
      {"benign",
       {{"precision", metrics.benign.precision},
        {"recall", metrics.benign.recall},
        {"f1", metrics.benign.f1}}},
      {"attack",
       {{"precision", metrics.attack.precision},
        {"recall", metrics.attack.recall},
        {"f1", metrics.attack.f1}}}};
  nlohmann::json pc = nlohmann::json::array();
  for (const auto& a : auroc_ae_per_class)
    pc.push_back({{"name", a.name}, {"value", a.value}});
  j["auroc"] = {{"ae_pooled", auroc_ae},
                {"cluster_pooled", auroc_cluster},
                {"ae_per_class", std::move(pc)}};
  j["training"] = {{"head_final_loss", head_final_loss},
                   {"head_collapse_warnings", head_collapse_warnings},
                   {"ae_final_loss", ae_final_loss}};
  j["kmeans"] = {{"inertia", kmeans_inertia}, {"iterations", kmeans_iterations}};
  j["warnings"] = warnings;
  return j.dump(2);
}

DetectionReport DetectionReport::from_json(const std::string& text) {
  DetectionReport rep;
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.at("kind").get<std::string>() != "detection-report")
      throw DataError("report: kind is not detection-report");
    rep.config_echo = j.at("config").get<std::string>();
    for (const auto& d : j.at("datasets")) {
      DatasetSummary s;
      s.name = d.at("name").get<std::string>();
      s.label = d.at("label").get<int>();
      s.windows = d.at("windows").get<std::size_t>();
      s.digest = d.at("digest").get<std::string>();
      rep.datasets.push_back(std::move(s));
    }
    rep.surviving_features =
        j.at("surviving_features").get<std::vector<std::string>>();
    const auto& th = j.at("threshold");
    rep.threshold.tau = th.at("tau").get<double>();
    rep.threshold.percentile_used = th.at("percentile").get<double>();
    rep.threshold.count = th.at("count").get<std::size_t>();
    rep.threshold.mean = th.at("mean").get<double>();
    rep.threshold.p50 = th.at("p50").get<double>();
    rep.threshold.p95 = th.at("p95").get<double>();
    rep.threshold.p99 = th.at("p99").get<double>();
    const auto& c = j.at("confusion");
    rep.cm.tp = c.at("tp").get<std::size_t>();
    rep.cm.fp = c.at("fp").get<std::size_t>();
    rep.cm.tn = c.at("tn").get<std::size_t>();
    rep.cm.fn = c.at("fn").get<std::size_t>();
    const auto& m = j.at("metrics");
    rep.metrics.accuracy = m.at("accuracy").get<double>();
    rep.metrics.macro_f1 = m.at("macro_f1").get<double>();
    rep.metrics.weighted_f1 = m.at("weighted_f1").get<double>();
    rep.metrics.zero_division = m.at("zero_division").get<bool>();
    rep.metrics.benign.precision = m.at("benign").at("precision").get<double>();
    rep.metrics.benign.recall = m.at("benign").at("recall").get<double>();
    rep.metrics.benign.f1 = m.at("benign").at("f1").get<double>();
    rep.metrics.attack.precision = m.at("attack").at("precision").get<double>();
    rep.metrics.attack.recall = m.at("attack").at("recall").get<double>();
    rep.metrics.attack.f1 = m.at("attack").at("f1").get<double>();
    const auto& a = j.at("auroc");
    rep.auroc_ae = a.at("ae_pooled").get<double>();
    rep.auroc_cluster = a.at("cluster_pooled").get<double>();
    for (const auto& pc : a.at("ae_per_class"))
      rep.auroc_ae_per_class.push_back(
          {pc.at("name").get<std::string>(), pc.at("value").get<double>()});
    const auto& tr = j.at("training");
    rep.head_final_loss = tr.at("head_final_loss").get<double>();
    rep.head_collapse_warnings = tr.at("head_collapse_warnings").get<int>();
    rep.ae_final_loss = tr.at("ae_final_loss").get<double>();
    const auto& km = j.at("kmeans");
    rep.kmeans_inertia = km.at("inertia").get<double>();
    rep.kmeans_iterations = km.at("iterations").get<int>();
    rep.warnings = j.at("warnings").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("report: malformed JSON: ") + e.what());
  }
  return rep;
}

std::string DetectionReport::render_text() const {
  std::string s;
  s += "detection report\n";
  s += "================\n";
  s += "config: " + config_echo + "\n\n";
  s += "datasets:\n";
  for (const auto& d : datasets) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "  %-20s label=%d  windows=%-7zu  digest=%s\n",
                  d.name.c_str(), d.label, d.windows, d.digest.c_str());
    s += buf;
  }
  s += "\nsurviving features (" + std::to_string(surviving_features.size()) +
       "): ";
  for (std::size_t i = 0; i < surviving_features.size(); ++i) {
    if (i) s += ", ";
    s += surviving_features[i];
  }
  s += "\n\n";
  s += "threshold: tau=" + fmt("%.6g", threshold.tau) + " (p" +
       fmt("%g", threshold.percentile_used) + " of " +
       std::to_string(threshold.count) + " benign validation errors; mean=" +
       fmt("%.6g", threshold.mean) + ", p50=" + fmt("%.6g", threshold.p50) +
       ", p99=" + fmt("%.6g", threshold.p99) + ")\n";
  s += "confusion @ tau: tp=" + std::to_string(cm.tp) + " fp=" +
       std::to_string(cm.fp) + " tn=" + std::to_string(cm.tn) + " fn=" +
       std::to_string(cm.fn) + "\n\n";
  s += "metrics:\n";
  s += "  accuracy=" + fmt("%.6f", metrics.accuracy) + "  macro_f1=" +
       fmt("%.6f", metrics.macro_f1) + "  weighted_f1=" +
       fmt("%.6f", metrics.weighted_f1);
  if (metrics.zero_division) s += "  [zero-division cells]";
  s += "\n";
  s += "  benign: precision=" + fmt("%.6f", metrics.benign.precision) +
       " recall=" + fmt("%.6f", metrics.benign.recall) + " f1=" +
       fmt("%.6f", metrics.benign.f1) + "\n";
  s += "  attack: precision=" + fmt("%.6f", metrics.attack.precision) +
       " recall=" + fmt("%.6f", metrics.attack.recall) + " f1=" +
       fmt("%.6f", metrics.attack.f1) + "\n\n";
  s += "auroc: ae_pooled=" + fmt("%.6f", auroc_ae) + "  cluster_pooled=" +
       fmt("%.6f", auroc_cluster) + "\n";
  for (const auto& a : auroc_ae_per_class)
    s += "  " + a.name + "=" + fmt("%.6f", a.value) + "\n";
  s += "\ntraining: head_final_loss=" + fmt("%.6g", head_final_loss) +
       " collapse_warnings=" + std::to_string(head_collapse_warnings) +
       "; ae_final_loss=" + fmt("%.6g", ae_final_loss) + "\n";
  s += "kmeans: inertia=" + fmt("%.6g", kmeans_inertia) + " iterations=" +
       std::to_string(kmeans_iterations) + "\n";
  if (warnings.empty()) {
    s += "warnings: none\n";
  } else {
    s += "warnings:\n";
    for (const auto& w : warnings) s += "  - " + w + "\n";
  }
  return s;
}

// -----------------------------------------------------------------experiment

namespace {

void write_file(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw DataError("artifacts: cannot open " + p.string());
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  f.flush();
  if (!f) throw DataError("artifacts: short write to " + p.string());
}

}  // namespace

DetectionReport run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.attacks.empty())
    throw ArgError("run_experiment: config needs at least one attack dataset");

  DetectionReport rep;
  rep.config_echo = cfg.echo();

  DatasetBundle data =
      stage("dataset-generation", [&] { return build_datasets(cfg); });

  features::FeatureSelection sel = stage(
      "feature-selection", [&] { return features::fit_selection(data.train.raw); });
  rep.surviving_features = sel.surviving;

  auto sentences_of = [&sel](const WindowSet& ws) {
    features::FeatureMatrix m = features::apply_selection(ws.raw, sel);
    std::vector<features::SentenceRecord> recs =
        features::serialize_matrix(m, 4, ws.label);
    std::vector<std::string> out;
    out.reserve(recs.size());
    for (auto& r : recs) out.push_back(std::move(r.text));
    return out;
  };

  std::vector<std::string> train_sent =
      stage("serialization", [&] { return sentences_of(data.train); });

  embed::HashedTokenEncoder enc;
  embed::ProjectionHead head =
      embed::ProjectionHead::init(Rng(cfg.seed).fork("head-init").next_u64());
  embed::TrainConfig hc = cfg.head;
  hc.seed = Rng(cfg.seed).fork("train-head").next_u64();
  embed::TrainReport hrep = stage(
      "train-head", [&] { return embed::train_projection(head, train_sent, enc, hc); });
  rep.head_final_loss = hrep.epoch_loss.empty() ? 0.0 : hrep.epoch_loss.back();
  rep.head_collapse_warnings = hrep.collapse_warnings;
  for (const auto& w : hrep.warnings) rep.warnings.push_back("train-head: " + w);

  auto project_set = [&head, &enc](const std::vector<std::string>& sents) {
    std::vector<detect::Vec> z;
    z.reserve(sents.size());
    for (const auto& s : sents) z.push_back(embed::project(head, enc.encode(s)));
    return z;
  };

  std::vector<detect::Vec> z_train =
      stage("projection", [&] { return project_set(train_sent); });
  train_sent.clear();
  train_sent.shrink_to_fit();
  std::vector<detect::Vec> z_val =
      stage("projection", [&] { return project_set(sentences_of(data.val)); });
  std::vector<std::vector<detect::Vec>> z_att;
  z_att.reserve(data.attacks.size());
  for (const auto& a : data.attacks)
    z_att.push_back(stage("projection", [&] { return project_set(sentences_of(a)); }));

  detect::AttentionAutoencoder ae =
      detect::AttentionAutoencoder::init(Rng(cfg.seed).fork("ae-init").next_u64());
  detect::TrainConfig ac = cfg.ae;
  ac.seed = Rng(cfg.seed).fork("train-ae").next_u64();
  detect::TrainReport arep = stage(
      "train-autoencoder", [&] { return detect::train_autoencoder(ae, z_train, ac); });
  rep.ae_final_loss = arep.epoch_loss.empty() ? 0.0 : arep.epoch_loss.back();
  for (const auto& w : arep.warnings)
    rep.warnings.push_back("train-autoencoder: " + w);

  auto ae_scores_of = [&ae](const std::vector<detect::Vec>& zs) {
    std::vector<double> s;
    s.reserve(zs.size());
    for (const auto& z : zs) s.push_back(detect::reconstruction_error(ae, z));
    return s;
  };
  std::vector<double> val_ae = stage("scoring", [&] { return ae_scores_of(z_val); });

  rep.threshold = stage("threshold-calibration", [&] {
    return detect::calibrate_threshold(val_ae, cfg.threshold_percentile);
  });

  detect::CentroidModel km = stage("clustering", [&] {
    return detect::fit_kmeans(z_train, cfg.kmeans_k,
                              Rng(cfg.seed).fork("kmeans").next_u64());
  });
  rep.kmeans_inertia = km.inertia;
  rep.kmeans_iterations = km.iterations;

  auto cluster_scores_of = [&km](const std::vector<detect::Vec>& zs) {
    std::vector<double> s;
    s.reserve(zs.size());
    for (const auto& z : zs) s.push_back(detect::cluster_score(km, z));
    return s;
  };
  std::vector<double> val_cl =
      stage("scoring", [&] { return cluster_scores_of(z_val); });

  std::vector<double> pool_ae = val_ae;
  std::vector<double> pool_cl = val_cl;
  std::vector<int> pool_lab(val_ae.size(), 0);
  std::vector<std::string> pool_ids = data.val.ids;
  std::vector<std::string> pool_set(val_ae.size(), data.val.name);

  for (std::size_t i = 0; i < data.attacks.size(); ++i) {
    std::vector<double> a_ae = stage("scoring", [&] { return ae_scores_of(z_att[i]); });
    std::vector<double> a_cl =
        stage("scoring", [&] { return cluster_scores_of(z_att[i]); });

    std::vector<double> s = val_ae;
    s.insert(s.end(), a_ae.begin(), a_ae.end());
    std::vector<int> l(val_ae.size(), 0);
    l.insert(l.end(), a_ae.size(), 1);
    rep.auroc_ae_per_class.push_back(
        {data.attacks[i].name, stage("metrics", [&] { return auroc(s, l); })});

    pool_ae.insert(pool_ae.end(), a_ae.begin(), a_ae.end());
    pool_cl.insert(pool_cl.end(), a_cl.begin(), a_cl.end());
    pool_lab.insert(pool_lab.end(), a_ae.size(), 1);
    pool_ids.insert(pool_ids.end(), data.attacks[i].ids.begin(),
                    data.attacks[i].ids.end());
    pool_set.insert(pool_set.end(), a_ae.size(), data.attacks[i].name);
  }

  rep.auroc_ae = stage("metrics", [&] { return auroc(pool_ae, pool_lab); });
  rep.auroc_cluster = stage("metrics", [&] { return auroc(pool_cl, pool_lab); });

  std::vector<int> preds = detect::classify_batch(pool_ae, rep.threshold.tau);
  rep.cm = stage("metrics", [&] { return confusion(pool_lab, preds); });
  rep.metrics = stage("metrics", [&] { return metrics(rep.cm); });

  rep.datasets.push_back(
      {data.train.name, 0, data.train.size(), data.train.rolling_digest});
  rep.datasets.push_back(
      {data.val.name, 0, data.val.size(), data.val.rolling_digest});
  for (const auto& a : data.attacks)
    rep.datasets.push_back({a.name, 1, a.size(), a.rolling_digest});

  if (!cfg.out_dir.empty()) {
    stage("artifacts", [&] {
      namespace fs = std::filesystem;
      fs::path dir(cfg.out_dir);
      std::error_code ec;
      fs::create_directories(dir, ec);
      if (ec)
        throw DataError("artifacts: cannot create directory " + dir.string() +
                        ": " + ec.message());

      write_file(dir / "report.json", rep.to_json());
      write_file(dir / "report.txt", rep.render_text());

      std::string config_digest = digest_hex(rep.config_echo);
      write_file(dir / "head.fdmt", head.serialize(config_digest));
      write_file(dir / "ae.fdmt", ae.serialize(config_digest));
      write_file(dir / "centroids.fdmt", km.serialize());
      write_file(dir / "threshold.json", rep.threshold.to_json());
      write_file(dir / "selection.json", sel.manifest_json());

      nlohmann::json mj;
      mj["schema_version"] = 1;
      mj["kind"] = "dataset-manifest";
      mj["seed"] = cfg.seed;
      nlohmann::json sets = nlohmann::json::array();
      auto manifest_entry = [](const WindowSet& ws, const char* role) {
        return nlohmann::json{{"name", ws.name},
                              {"label", ws.label},
                              {"role", role},
                              {"windows", ws.size()},
                              {"digest", ws.rolling_digest},
                              {"window_digests", ws.digests}};
      };
      sets.push_back(manifest_entry(data.train, "train"));
      sets.push_back(manifest_entry(data.val, "validation"));
      for (const auto& a : data.attacks)
        sets.push_back(manifest_entry(a, "validation"));
      mj["datasets"] = std::move(sets);
      write_file(dir / "manifest.json", mj.dump(2));

      std::string scores = "id,dataset,label,ae_score,cluster_score\n";
      for (std::size_t i = 0; i < pool_ids.size(); ++i) {
        scores += pool_ids[i];
        scores += ',';
        scores += pool_set[i];
        scores += ',';
        scores += std::to_string(pool_lab[i]);
        scores += ',';
        scores += fmt("%.12g", pool_ae[i]);
        scores += ',';
        scores += fmt("%.12g", pool_cl[i]);
        scores += '\n';
      }
      write_file(dir / "scores.csv", scores);

      std::vector<detect::Vec> pool_z = z_val;
      for (const auto& za : z_att)
        pool_z.insert(pool_z.end(), za.begin(), za.end());
      detect::PcaResult pca = detect::pca_project(pool_z, 2);
      std::string pcsv = "id,score,label,pc1,pc2\n";
      for (std::size_t i = 0; i < pool_ids.size(); ++i) {
        pcsv += pool_ids[i];
        pcsv += ',';
        pcsv += fmt("%.12g", pool_ae[i]);
        pcsv += ',';
        pcsv += std::to_string(pool_lab[i]);
        pcsv += ',';
        pcsv += fmt("%.12g", pca.coords[i][0]);
        pcsv += ',';
        pcsv += fmt("%.12g", pca.coords[i][1]);
        pcsv += '\n';
      }
      write_file(dir / "pca.csv", pcsv);
    });
  }

  return rep;
}

}  // namespace fdmlab::eval
