#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fdmlab/attack.hpp"
#include "fdmlab/detect.hpp"
#include "fdmlab/embed.hpp"
#include "fdmlab/features.hpp"

namespace fdmlab::eval {

// ------------------------------------------------------------------- metrics

// Attack is the positive class throughout.
struct ConfusionMatrix {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

  std::size_t total() const { return tp + fp + tn + fn; }
  std::size_t actual_attack() const { return tp + fn; }
  std::size_t actual_benign() const { return tn + fp; }
};

// labels/predictions: 0 = benign, 1 = attack.
ConfusionMatrix confusion(const std::vector<int>& labels,
                          const std::vector<int>& predictions);

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct MetricsReport {
  ClassMetrics benign;
  ClassMetrics attack;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double weighted_f1 = 0.0;  // weighted by actual class counts
  bool zero_division = false;  // some cell had an empty denominator
};

MetricsReport metrics(const ConfusionMatrix& cm);

// Mann-Whitney statistic with average ranks over ties; identical to the
// trapezoidal ROC area. Labels: 0 = benign, 1 = attack (positive).
double auroc(const std::vector<double>& scores, const std::vector<int>& labels);

// ------------------------------------------------------------ configuration

struct AttackDatasetPlan {
  attack::AttackKind kind = attack::AttackKind::UnderExtrusion;
  std::size_t windows = 0;
};

struct ExperimentConfig {
  std::uint64_t seed = 42;
  std::size_t train_windows = 20000;   // benign, fitting only
  std::size_t val_windows = 5000;      // benign, calibration + scoring
  std::vector<AttackDatasetPlan> attacks;  // validation-only datasets
  int window_periods = 3;              // sampling periods per log window
  std::size_t kmeans_k = 4;
  double threshold_percentile = 95.0;
  embed::TrainConfig head;             // projection head training
  detect::TrainConfig ae;              // autoencoder training
  std::string out_dir;                 // empty = no artifact files

  void validate() const;
  std::string echo() const;
};

// Five attack classes at 1,000 windows each (the desk-scale validation mix).
std::vector<AttackDatasetPlan> default_attack_plans(std::size_t windows = 1000);

// Table-2-shaped dataset sizes; intended for plan_manifest, not execution.
ExperimentConfig paper_scale_preset();

// Dataset roster an experiment would generate: names, roles, labels, window
// counts. Pure function of the config; generates nothing.
std::string plan_manifest(const ExperimentConfig& cfg);

// INI-style `key = value` sections: [experiment], [head], [ae]. Unknown
// sections or keys are argument errors; '#' and ';' start comments.
ExperimentConfig parse_experiment_config(const std::string& text);

// ------------------------------------------------------------------ datasets

// One generated dataset: windowed raw telemetry plus per-window identity.
struct WindowSet {
  std::string name;
  int label = 0;  // 0 benign, 1 attack
  features::FeatureMatrix raw;        // rows in generation order
  std::vector<std::string> ids;       // "<name>/<run>/<window>"
  std::vector<std::string> digests;   // content+identity digest per window
  std::string rolling_digest;         // digest over the per-window digests

  std::size_t size() const { return raw.n_rows(); }
};

struct DatasetBundle {
  WindowSet train;                 // benign
  WindowSet val;                   // benign
  std::vector<WindowSet> attacks;  // one per configured attack class
};

// Simulates prints run-by-run until each dataset reaches its target window
// count. Benign runs cycle through a discrete print-feed menu; attack runs
// print at the nominal feed with the class transform applied. Run seeds are
// deterministic shards of (master seed, dataset name, run index).
DatasetBundle build_datasets(const ExperimentConfig& cfg);

// The benign print-feed menu, exposed for tests.
const std::vector<double>& benign_feed_menu();

// --------------------------------------------------------------- experiment

struct DatasetSummary {
  std::string name;
  int label = 0;
  std::size_t windows = 0;
  std::string digest;  // rolling digest of the member window digests
};

struct PerClassAuroc {
  std::string name;
  double value = 0.0;
};

struct DetectionReport {
  ConfusionMatrix cm;        // pooled validation at tau
  MetricsReport metrics;
  double auroc_ae = 0.0;       // pooled over all attack classes
  double auroc_cluster = 0.0;  // pooled, k-means distance score
  std::vector<PerClassAuroc> auroc_ae_per_class;
  detect::ThresholdModel threshold;
  std::vector<std::string> surviving_features;
  std::vector<DatasetSummary> datasets;
  double head_final_loss = 0.0;
  int head_collapse_warnings = 0;
  double ae_final_loss = 0.0;
  double kmeans_inertia = 0.0;
  int kmeans_iterations = 0;
  std::string config_echo;
  std::vector<std::string> warnings;

  std::string to_json() const;
  std::string render_text() const;
  // Inverse of to_json; DataError on malformed or mismatched documents.
  static DetectionReport from_json(const std::string& text);
};

// Full pipeline: generate datasets, fit selection + head + autoencoder +
// k-means on benign training windows, calibrate tau on benign validation,
// score every validation set, and (with out_dir set) write report.json,
// report.txt, scores.csv, pca.csv, manifest.json, and the model files.
// Deterministic per master seed; stage failures rethrow with the stage name.
DetectionReport run_experiment(const ExperimentConfig& cfg);

}  // namespace fdmlab::eval
