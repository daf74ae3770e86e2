// fdmlab command-line workbench: dataset generation, sabotage transforms,
// intrusion scenarios, telemetry simulation, and the detection pipeline as
// separable stages. Exit codes: 0 ok, 2 argument error, 3 data error,
// 4 numeric failure, 1 anything else.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "fdmlab/adversary.hpp"
#include "fdmlab/attack.hpp"
#include "fdmlab/detect.hpp"
#include "fdmlab/digest.hpp"
#include "fdmlab/embed.hpp"
#include "fdmlab/errors.hpp"
#include "fdmlab/eval.hpp"
#include "fdmlab/features.hpp"
#include "fdmlab/fixtures.hpp"
#include "fdmlab/gcode.hpp"
#include "fdmlab/rng.hpp"
#include "fdmlab/server.hpp"
#include "fdmlab/telemetry.hpp"

namespace fs = std::filesystem;
using namespace fdmlab;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_out(const fs::path& dir, const std::string& name,
               const std::string& content) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec && !fs::exists(dir))
    throw DataError("cannot create directory " + dir.string() + ": " +
                    ec.message());
  fs::path p = dir / name;
  std::ofstream out(p, std::ios::binary);
  if (!out) throw DataError("cannot write " + p.string());
  out << content;
  if (!out) throw DataError("short write to " + p.string());
  std::cerr << "wrote " << p.string() << "\n";
}

std::vector<std::string> load_sentences(const std::string& path) {
  std::istringstream in(read_file(path));
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) lines.push_back(line);
  if (lines.empty()) throw DataError(path + ": no sentences");
  return lines;
}

std::vector<int> load_labels(const std::string& path, std::size_t expect) {
  std::istringstream in(read_file(path));
  std::vector<int> labels;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line != "0" && line != "1")
      throw DataError(path + ": labels must be 0 or 1, got '" + line + "'");
    labels.push_back(line == "1" ? 1 : 0);
  }
  if (labels.size() != expect)
    throw DataError(path + ": " + std::to_string(labels.size()) +
                    " labels for " + std::to_string(expect) + " sentences");
  return labels;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// Shared between `attack` and `intrude`: either a JSON spec file or the flag
// set below; flags are ignored when --spec is given (seed still applies).
struct AttackOpts {
  std::string spec_path;
  std::string kind = "under_extrusion";
  double factor = 0.0;
  double rate = 10.0;
  double amplitude = 0.3;
  bool extruding_noise = false;
  double sx = 1.0, sy = 1.0, sz = 1.0;
  std::vector<double> pivot;
  double z_lo = 0.0, z_hi = 0.0;
  std::string sink;
  std::vector<std::size_t> layers, lines;
};

void add_attack_opts(CLI::App* cmd, AttackOpts& o) {
  cmd->add_option("--spec", o.spec_path,
                  "Attack spec JSON file (overrides the flags below)");
  cmd->add_option("--kind", o.kind,
                  "under_extrusion | over_extrusion | noise_injection | "
                  "dimensional_change | cavity_insertion | exfiltration");
  cmd->add_option("--factor", o.factor,
                  "Extrusion scale; 0 keeps the kind's default");
  cmd->add_option("--rate", o.rate, "Noise: jitter pairs per 100 motion lines");
  cmd->add_option("--amplitude", o.amplitude, "Noise: per-axis cap, mm");
  cmd->add_flag("--extruding-noise", o.extruding_noise,
                "Noise detours extrude (visible variant)");
  cmd->add_option("--sx", o.sx, "Dimensional: X scale");
  cmd->add_option("--sy", o.sy, "Dimensional: Y scale");
  cmd->add_option("--sz", o.sz, "Dimensional: Z scale");
  cmd->add_option("--pivot", o.pivot, "Dimensional: fixed XY pivot")
      ->expected(2);
  cmd->add_option("--z-lo", o.z_lo, "Cavity: lower Z bound, mm");
  cmd->add_option("--z-hi", o.z_hi, "Cavity: upper Z bound, mm");
  cmd->add_option("--sink", o.sink, "Exfiltration sink label");
  cmd->add_option("--layers", o.layers, "Restrict to layers A B (1-based)")
      ->expected(2);
  cmd->add_option("--lines", o.lines, "Restrict to line numbers A B (1-based)")
      ->expected(2);
}

attack::AttackSpec make_spec(const AttackOpts& o, std::uint64_t seed) {
  if (!o.spec_path.empty()) {
    attack::AttackSpec spec =
        attack::parse_attack_spec_json(read_file(o.spec_path));
    spec.seed = seed;
    return spec;
  }
  attack::AttackSpec spec;
  spec.kind = attack::attack_kind_from_name(o.kind);
  spec.factor = o.factor;
  spec.rate = o.rate;
  spec.amplitude = o.amplitude;
  spec.extruding_noise = o.extruding_noise;
  spec.sx = o.sx;
  spec.sy = o.sy;
  spec.sz = o.sz;
  if (!o.pivot.empty()) spec.pivot_xy = {o.pivot[0], o.pivot[1]};
  spec.z_lo = o.z_lo;
  spec.z_hi = o.z_hi;
  spec.sink = o.sink;
  spec.seed = seed;
  if (!o.layers.empty())
    spec.region = {attack::Region::Kind::Layers, o.layers[0], o.layers[1]};
  else if (!o.lines.empty())
    spec.region = {attack::Region::Kind::Lines, o.lines[0], o.lines[1]};
  return spec;
}

std::string fixture_or_file(const std::string& path, std::uint64_t seed,
                            double feed, int layers) {
  if (!path.empty()) return read_file(path);
  fixtures::CubeParams p;
  p.seed = seed;
  p.print_feed = feed;
  p.layers = layers;
  return fixtures::build_cube_gcode(p);
}

struct SizeOverrides {
  std::size_t train = 0, val = 0, attack = 0;
  CLI::Option *train_opt = nullptr, *val_opt = nullptr, *attack_opt = nullptr;
  int periods = 0;
  CLI::Option* periods_opt = nullptr;

  void add(CLI::App* cmd) {
    train_opt = cmd->add_option("--train", train, "Benign training windows");
    val_opt = cmd->add_option("--val", val, "Benign validation windows");
    attack_opt =
        cmd->add_option("--attack-windows", attack, "Windows per attack class");
    periods_opt =
        cmd->add_option("--periods", periods, "Sampling periods per window");
  }
  void apply(eval::ExperimentConfig& cfg) const {
    if (train_opt->count()) cfg.train_windows = train;
    if (val_opt->count()) cfg.val_windows = val;
    if (attack_opt->count())
      for (auto& plan : cfg.attacks) plan.windows = attack;
    if (periods_opt->count()) cfg.window_periods = periods;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "fdmlab: sabotage transforms, intrusion protocols, and log-based "
      "anomaly detection for a simulated FDM print server"};
  app.require_subcommand(1);

  std::uint64_t seed = 42;
  std::string config_path;
  std::string out_dir = ".";
  auto* seed_opt = app.add_option("--seed", seed, "Master seed (default 42)");
  auto* config_opt =
      app.add_option("--config", config_path, "Experiment config file");
  auto* out_opt = app.add_option("--out", out_dir, "Output directory");

  auto load_config = [&]() {
    eval::ExperimentConfig cfg;
    if (config_opt->count()) {
      cfg = eval::parse_experiment_config(read_file(config_path));
    } else {
      cfg.attacks = eval::default_attack_plans();
    }
    if (seed_opt->count()) cfg.seed = seed;
    if (out_opt->count()) cfg.out_dir = out_dir;
    return cfg;
  };

  // ------------------------------------------------------------------- gen
  auto* gen = app.add_subcommand(
      "gen", "Generate benign + attack window datasets as CSV");
  gen->fallthrough();
  SizeOverrides gen_sizes;
  gen_sizes.add(gen);
  gen->callback([&]() {
    eval::ExperimentConfig cfg = load_config();
    gen_sizes.apply(cfg);
    cfg.validate();
    eval::DatasetBundle data = eval::build_datasets(cfg);

    auto to_csv = [](const eval::WindowSet& ws) {
      std::string csv;
      for (std::size_t i = 0; i < ws.raw.names.size(); ++i) {
        if (i) csv += ',';
        csv += ws.raw.names[i];
      }
      csv += '\n';
      for (const auto& row : ws.raw.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
          if (i) csv += ',';
          csv += fmt("%.17g", row[i]);
        }
        csv += '\n';
      }
      return csv;
    };

    nlohmann::json mj;
    mj["schema_version"] = 1;
    mj["kind"] = "dataset-manifest";
    mj["seed"] = cfg.seed;
    nlohmann::json sets = nlohmann::json::array();
    auto emit = [&](const eval::WindowSet& ws, const char* role) {
      write_out(out_dir, ws.name + ".csv", to_csv(ws));
      sets.push_back({{"name", ws.name},
                      {"label", ws.label},
                      {"role", role},
                      {"windows", ws.size()},
                      {"digest", ws.rolling_digest},
                      {"window_digests", ws.digests},
                      {"ids", ws.ids}});
    };
    emit(data.train, "train");
    emit(data.val, "validation");
    for (const auto& a : data.attacks) emit(a, "validation");
    mj["datasets"] = std::move(sets);
    write_out(out_dir, "manifest.json", mj.dump(2));
    std::cout << "generated " << 2 + data.attacks.size() << " datasets, seed "
              << cfg.seed << "\n";
  });

  // ---------------------------------------------------------------- attack
  auto* atk = app.add_subcommand(
      "attack", "Apply a sabotage transform to a G-code program");
  atk->fallthrough();
  std::string atk_in;
  atk->add_option("--in", atk_in, "Input G-code (default: built-in cube)");
  AttackOpts atk_opts;
  add_attack_opts(atk, atk_opts);
  atk->callback([&]() {
    gcode::GcodeProgram prog =
        gcode::parse_program(fixture_or_file(atk_in, seed, 1500.0, 25));
    attack::AttackSpec spec = make_spec(atk_opts, seed);
    auto [mutated, audit] = attack::apply_attack(prog, spec);
    write_out(out_dir, "mutated.gcode", gcode::serialize_program(mutated));
    write_out(out_dir, "audit.json", attack::audit_json(audit));
    std::cout << attack::audit_json(audit) << "\n";
  });

  // --------------------------------------------------------------- intrude
  auto* intr = app.add_subcommand(
      "intrude", "Run a MitM intrusion protocol against the print server");
  intr->fallthrough();
  std::string intr_strategy = "deferred";
  std::string intr_in;
  std::string intr_name = "job.gcode";
  double intr_delay = 3.0, intr_lock = -1.0, intr_trigger = -1.0;
  bool intr_whole = false, intr_oob = false;
  intr->add_option("--strategy", intr_strategy,
                   "deferred | access_jam | execution_phase");
  intr->add_option("--in", intr_in, "Target G-code (default: built-in cube)");
  intr->add_option("--name", intr_name, "Stored filename on the server");
  intr->add_option("--delay", intr_delay, "Deferred: seconds after upload");
  intr->add_option("--lock", intr_lock,
                   "AccessJam: lock duration; negative draws [5,10]");
  intr->add_option("--trigger", intr_trigger,
                   "ExecutionPhase: splice time; negative draws [120,300]");
  intr->add_flag("--whole-file", intr_whole,
                 "ExecutionPhase: replace the whole file, not the tail");
  intr->add_flag("--out-of-bounds", intr_oob,
                 "Permit mutations outside the build volume");
  AttackOpts intr_opts;
  add_attack_opts(intr, intr_opts);
  intr->callback([&]() {
    adversary::IntrusionPlan plan;
    plan.strategy = adversary::strategy_from_name(intr_strategy);
    plan.attack = make_spec(intr_opts, seed);
    plan.delay_s = intr_delay;
    plan.lock_s = intr_lock;
    plan.trigger_s = intr_trigger;
    plan.whole_file = intr_whole;
    plan.allow_out_of_bounds = intr_oob;
    plan.seed = seed;
    std::string bytes = fixture_or_file(intr_in, seed, 1500.0, 25);
    adversary::Scenario script =
        adversary::make_deferred_scenario(intr_name, bytes, seed);
    server::PrintServerSim sim;
    adversary::ScenarioRun run = adversary::run_intrusion(sim, plan, script);
    write_out(out_dir, "transcript.jsonl", run.transcript_jsonl);
    write_out(out_dir, "state.json", run.state_json);
    write_out(out_dir, "result.json", run.result.report_json());
    write_out(out_dir, "final.gcode", run.final_bytes);
    std::cout << run.result.report_json() << "\n";
  });

  // -------------------------------------------------------------- simulate
  auto* sim_cmd = app.add_subcommand(
      "simulate", "Execute G-code on the telemetry simulator");
  sim_cmd->fallthrough();
  std::string sim_in;
  std::string sim_label = "0";
  std::string sim_format = "csv";
  int sim_periods = 0;
  double sim_feed = 1500.0;
  int sim_layers = 25;
  sim_cmd->add_option("--in", sim_in, "Input G-code (default: built-in cube)");
  sim_cmd->add_option("--label", sim_label, "Label column for the output");
  sim_cmd->add_option("--format", sim_format, "csv | jsonl")
      ->check(CLI::IsMember({"csv", "jsonl"}));
  sim_cmd->add_option("--periods", sim_periods,
                      "Aggregate into m-period windows (0 = raw records)");
  sim_cmd->add_option("--feed", sim_feed, "Built-in cube print feed, mm/min");
  sim_cmd->add_option("--layers", sim_layers, "Built-in cube layer count");
  sim_cmd->callback([&]() {
    gcode::GcodeProgram prog = gcode::parse_program(
        fixture_or_file(sim_in, seed, sim_feed, sim_layers));
    telemetry::SimConfig cfg;
    cfg.seed = seed;
    telemetry::TelemetryRun run = telemetry::execute(prog, cfg);
    std::vector<telemetry::LogRecord> recs = run.records;
    if (sim_periods > 0) recs = telemetry::window_logs(recs, sim_periods);
    if (sim_format == "jsonl")
      write_out(out_dir, "logs.jsonl", telemetry::to_jsonl(recs, sim_label, cfg));
    else
      write_out(out_dir, "logs.csv", telemetry::to_csv(recs, sim_label, cfg));
    std::cout << recs.size() << " records, " << fmt("%.1f", run.total_time_s)
              << " s simulated, " << fmt("%.2f", run.extruded_mm_attributed)
              << " mm extruded\n";
  });

  // -------------------------------------------------------------- features
  auto* feat = app.add_subcommand(
      "features", "Select features and serialize log windows to sentences");
  feat->fallthrough();
  std::string feat_in;
  double feat_var = 0.01, feat_corr = 0.95;
  int feat_prec = 4, feat_label = 0;
  feat->add_option("--in", feat_in, "Input window CSV")->required();
  feat->add_option("--variance", feat_var, "Variance filter threshold");
  feat->add_option("--correlation", feat_corr, "Correlation prune threshold");
  feat->add_option("--precision", feat_prec, "Serialized decimal places");
  feat->add_option("--label", feat_label, "Label for every row (0/1)");
  feat->callback([&]() {
    features::FeatureMatrix m = features::FeatureMatrix::from_csv(
        read_file(feat_in));
    features::FeatureSelection sel =
        features::fit_selection(m, feat_var, feat_corr);
    features::FeatureMatrix kept = features::apply_selection(m, sel);
    auto sentences = features::serialize_matrix(kept, feat_prec, feat_label);
    write_out(out_dir, "selection.json", sel.manifest_json());
    write_out(out_dir, "sentences.txt", features::sentences_text(sentences));
    write_out(out_dir, "labels.txt", features::labels_text(sentences));
    std::cout << sel.surviving.size() << "/" << sel.input_schema.size()
              << " features survive:";
    for (const auto& n : sel.surviving) std::cout << " " << n;
    std::cout << "\n";
  });

  // ------------------------------------------------------------ train-head
  auto* th = app.add_subcommand(
      "train-head", "Train the contrastive projection head on sentences");
  th->fallthrough();
  std::string th_sentences;
  embed::TrainConfig th_cfg;
  th->add_option("--sentences", th_sentences, "Sentence file, one per line")
      ->required();
  th->add_option("--epochs", th_cfg.epochs, "Training epochs");
  th->add_option("--lr", th_cfg.learning_rate, "Adam learning rate");
  th->add_option("--batch", th_cfg.batch_size, "Batch size");
  th->add_option("--key-rate", th_cfg.corruption.key_rate,
                 "Corruption: synonym-rename probability");
  th->add_option("--value-rate", th_cfg.corruption.value_rate,
                 "Corruption: value jitter probability");
  th->add_option("--value-jitter", th_cfg.corruption.value_jitter,
                 "Corruption: relative jitter magnitude");
  th->callback([&]() {
    auto sentences = load_sentences(th_sentences);
    embed::HashedTokenEncoder enc;
    embed::ProjectionHead head =
        embed::ProjectionHead::init(Rng(seed).fork("head-init").next_u64());
    th_cfg.seed = Rng(seed).fork("train-head").next_u64();
    embed::TrainReport rep = embed::train_projection(head, sentences, enc, th_cfg);
    write_out(out_dir, "head.fdmt", head.serialize(digest_hex(th_cfg.echo())));
    nlohmann::json j{{"kind", "train-report"},
                     {"model", "projection-head"},
                     {"epoch_loss", rep.epoch_loss},
                     {"collapse_warnings", rep.collapse_warnings},
                     {"warnings", rep.warnings}};
    write_out(out_dir, "head_train.json", j.dump(2));
    std::cout << "final epoch loss " << fmt("%.6g", rep.epoch_loss.back())
              << ", collapse warnings " << rep.collapse_warnings << "\n";
  });

  // -------------------------------------------------------------- train-ae
  auto* ta = app.add_subcommand(
      "train-ae", "Train the attention autoencoder on projected embeddings");
  ta->fallthrough();
  std::string ta_sentences, ta_head;
  detect::TrainConfig ta_cfg;
  bool ta_tokenized = false;
  ta->add_option("--sentences", ta_sentences, "Sentence file")->required();
  ta->add_option("--head", ta_head, "Trained projection head (.fdmt)")
      ->required();
  ta->add_option("--epochs", ta_cfg.epochs, "Training epochs");
  ta->add_option("--lr", ta_cfg.learning_rate, "Adam learning rate");
  ta->add_option("--batch", ta_cfg.batch_size, "Batch size");
  ta->add_flag("--tokenized", ta_tokenized,
               "Use the tokenized attention ablation");
  ta->callback([&]() {
    auto sentences = load_sentences(ta_sentences);
    embed::ProjectionHead head =
        embed::ProjectionHead::deserialize(read_file(ta_head));
    embed::HashedTokenEncoder enc;
    std::vector<detect::Vec> z;
    z.reserve(sentences.size());
    for (const auto& s : sentences) z.push_back(embed::project(head, enc.encode(s)));
    detect::AttentionAutoencoder ae =
        detect::AttentionAutoencoder::init(Rng(seed).fork("ae-init").next_u64());
    ae.tokenized = ta_tokenized;
    ta_cfg.seed = Rng(seed).fork("train-ae").next_u64();
    detect::TrainReport rep = detect::train_autoencoder(ae, z, ta_cfg);
    write_out(out_dir, "ae.fdmt", ae.serialize(digest_hex(ta_cfg.echo())));
    nlohmann::json j{{"kind", "train-report"},
                     {"model", "attention-autoencoder"},
                     {"epoch_loss", rep.epoch_loss},
                     {"warnings", rep.warnings}};
    write_out(out_dir, "ae_train.json", j.dump(2));
    std::cout << "final epoch loss " << fmt("%.6g", rep.epoch_loss.back())
              << "\n";
  });

  // ------------------------------------------------------------ fit-kmeans
  auto* km = app.add_subcommand(
      "fit-kmeans", "Cluster projected embeddings; k=2 separates the classes");
  km->fallthrough();
  std::string km_sentences, km_head, km_labels;
  std::size_t km_k = 2;
  bool km_pca = false;
  km->add_option("--sentences", km_sentences, "Sentence file")->required();
  km->add_option("--head", km_head, "Trained projection head (.fdmt)")
      ->required();
  km->add_option("--k", km_k, "Cluster count");
  km->add_option("--labels", km_labels, "Label file for the PCA export");
  km->add_flag("--pca", km_pca, "Also write 2-d PCA coordinates (pca.csv)");
  km->callback([&]() {
    auto sentences = load_sentences(km_sentences);
    embed::ProjectionHead head =
        embed::ProjectionHead::deserialize(read_file(km_head));
    embed::HashedTokenEncoder enc;
    std::vector<detect::Vec> z;
    z.reserve(sentences.size());
    for (const auto& s : sentences) z.push_back(embed::project(head, enc.encode(s)));
    detect::CentroidModel model =
        detect::fit_kmeans(z, km_k, Rng(seed).fork("kmeans").next_u64());
    write_out(out_dir, "centroids.fdmt", model.serialize());
    if (km_pca) {
      std::vector<int> labels(z.size(), 0);
      if (!km_labels.empty()) labels = load_labels(km_labels, z.size());
      detect::PcaResult pca = detect::pca_project(z, 2);
      std::string csv = "id,score,label,pc1,pc2\n";
      for (std::size_t i = 0; i < z.size(); ++i) {
        csv += std::to_string(i) + ",";
        csv += fmt("%.12g", detect::cluster_score(model, z[i])) + ",";
        csv += std::to_string(labels[i]) + ",";
        csv += fmt("%.12g", pca.coords[i][0]) + ",";
        csv += fmt("%.12g", pca.coords[i][1]) + "\n";
      }
      write_out(out_dir, "pca.csv", csv);
    }
    std::cout << "k=" << model.k() << ", inertia "
              << fmt("%.6g", model.inertia) << ", " << model.iterations
              << " iterations\n";
  });

  // ----------------------------------------------------------------- score
  auto* sc = app.add_subcommand(
      "score", "Score sentences with a trained autoencoder and/or centroids");
  sc->fallthrough();
  std::string sc_sentences, sc_head, sc_ae, sc_centroids, sc_threshold,
      sc_labels;
  sc->add_option("--sentences", sc_sentences, "Sentence file")->required();
  sc->add_option("--head", sc_head, "Trained projection head (.fdmt)")
      ->required();
  sc->add_option("--ae", sc_ae, "Trained autoencoder (.fdmt)");
  sc->add_option("--centroids", sc_centroids, "Centroid model (.fdmt)");
  sc->add_option("--threshold", sc_threshold,
                 "threshold.json; adds a flag column from the AE score");
  sc->add_option("--labels", sc_labels, "Label file for the label column");
  sc->callback([&]() {
    if (sc_ae.empty() && sc_centroids.empty())
      throw ArgError("score: provide --ae and/or --centroids");
    if (!sc_threshold.empty() && sc_ae.empty())
      throw ArgError("score: --threshold needs --ae");
    auto sentences = load_sentences(sc_sentences);
    embed::ProjectionHead head =
        embed::ProjectionHead::deserialize(read_file(sc_head));
    embed::HashedTokenEncoder enc;
    std::vector<int> labels(sentences.size(), 0);
    if (!sc_labels.empty()) labels = load_labels(sc_labels, sentences.size());

    std::optional<detect::AttentionAutoencoder> ae;
    if (!sc_ae.empty())
      ae = detect::AttentionAutoencoder::deserialize(read_file(sc_ae));
    std::optional<detect::CentroidModel> km_model;
    if (!sc_centroids.empty())
      km_model = detect::CentroidModel::deserialize(read_file(sc_centroids));
    std::optional<detect::ThresholdModel> th_model;
    if (!sc_threshold.empty())
      th_model = detect::ThresholdModel::from_json(read_file(sc_threshold));

    std::string csv = "id,label";
    if (ae) csv += ",ae_score";
    if (km_model) csv += ",cluster_score";
    if (th_model) csv += ",flag";
    csv += '\n';
    double ae_sum = 0.0;
    std::size_t flagged = 0;
    for (std::size_t i = 0; i < sentences.size(); ++i) {
      detect::Vec z = embed::project(head, enc.encode(sentences[i]));
      csv += std::to_string(i) + "," + std::to_string(labels[i]);
      if (ae) {
        double e = detect::reconstruction_error(*ae, z);
        ae_sum += e;
        csv += "," + fmt("%.12g", e);
        if (th_model) {
          bool hit = detect::classify(e, th_model->tau);
          flagged += hit;
          csv += hit ? ",1" : ",0";
        }
      }
      if (km_model) csv += "," + fmt("%.12g", detect::cluster_score(*km_model, z));
      csv += '\n';
    }
    write_out(out_dir, "scores.csv", csv);
    std::cout << sentences.size() << " rows";
    if (ae) std::cout << ", mean AE error "
                      << fmt("%.6g", ae_sum / double(sentences.size()));
    if (th_model) std::cout << ", flagged " << flagged;
    std::cout << "\n";
  });

  // -------------------------------------------------------------- evaluate
  auto* ev = app.add_subcommand(
      "evaluate", "Run the full pipeline end to end and print the report");
  ev->fallthrough();
  SizeOverrides ev_sizes;
  ev_sizes.add(ev);
  int ev_epochs = 0;
  auto* ev_epochs_opt =
      ev->add_option("--epochs", ev_epochs, "Head and AE training epochs");
  ev->callback([&]() {
    eval::ExperimentConfig cfg = load_config();
    ev_sizes.apply(cfg);
    if (ev_epochs_opt->count()) {
      cfg.head.epochs = ev_epochs;
      cfg.ae.epochs = ev_epochs;
    }
    eval::DetectionReport rep = eval::run_experiment(cfg);
    std::cout << rep.render_text();
  });

  // ---------------------------------------------------------------- report
  auto* rp = app.add_subcommand(
      "report", "Render a stored report.json as human-readable text");
  rp->fallthrough();
  std::string rp_in;
  rp->add_option("--in", rp_in, "report.json path")->required();
  rp->callback([&]() {
    std::cout << eval::DetectionReport::from_json(read_file(rp_in)).render_text();
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const ArgError& e) {
    std::cerr << "argument error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
