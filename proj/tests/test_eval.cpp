#include "fdmlab/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"

#include "fdmlab/detect.hpp"
#include "fdmlab/embed.hpp"
#include "fdmlab/errors.hpp"
#include "fdmlab/rng.hpp"
#include "fdmlab/telemetry.hpp"

using namespace fdmlab;
using eval::ConfusionMatrix;
using eval::ExperimentConfig;
using eval::MetricsReport;

namespace {

// Independent recount, written as a plain per-cell tally.
ConfusionMatrix confusion_oracle(const std::vector<int>& labels,
                                 const std::vector<int>& preds) {
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == 1 && preds[i] == 1) cm.tp++;
    if (labels[i] == 1 && preds[i] == 0) cm.fn++;
    if (labels[i] == 0 && preds[i] == 1) cm.fp++;
    if (labels[i] == 0 && preds[i] == 0) cm.tn++;
  }
  return cm;
}

// O(N^2) pairwise rank statistic: P(attack > benign) + 0.5 P(equal).
double auroc_oracle(const std::vector<double>& s, const std::vector<int>& l) {
  long double num = 0.0L;
  long double pairs = 0.0L;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (l[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (l[j] != 0) continue;
      pairs += 1.0L;
      if (s[i] > s[j])
        num += 1.0L;
      else if (s[i] == s[j])
        num += 0.5L;
    }
  }
  return static_cast<double>(num / pairs);
}

ExperimentConfig smoke_config() {
  ExperimentConfig cfg;
  cfg.seed = 7;
  cfg.train_windows = 600;
  cfg.val_windows = 200;
  cfg.attacks = eval::default_attack_plans(100);
  cfg.head.epochs = 2;
  cfg.ae.epochs = 2;
  return cfg;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(static_cast<bool>(f));
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::size_t count_lines(const std::string& text) {
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

bool is_hex16(const std::string& s) {
  if (s.size() != 16) return false;
  for (char c : s)
    if (!((c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'))) return false;
  return true;
}

}  // namespace

TEST_CASE("confusion matrix tallies") {
  SUBCASE("all correct") {
    ConfusionMatrix cm = eval::confusion({1, 0, 1, 0}, {1, 0, 1, 0});
    CHECK(cm.tp == 2);
    CHECK(cm.tn == 2);
    CHECK(cm.fp == 0);
    CHECK(cm.fn == 0);
  }
  SUBCASE("crossed pair") {
    // labels [benign, attack], predictions [attack, benign]
    ConfusionMatrix cm = eval::confusion({0, 1}, {1, 0});
    CHECK(cm.fp == 1);
    CHECK(cm.fn == 1);
    CHECK(cm.tp == 0);
    CHECK(cm.tn == 0);
  }
  SUBCASE("1000-sample fixture matches the per-element oracle") {
    Rng rng(2026);
    std::vector<int> labels, preds;
    for (int i = 0; i < 1000; ++i) {
      labels.push_back(static_cast<int>(rng.below(2)));
      preds.push_back(static_cast<int>(rng.below(2)));
    }
    ConfusionMatrix got = eval::confusion(labels, preds);
    ConfusionMatrix want = confusion_oracle(labels, preds);
    CHECK(got.tp == want.tp);
    CHECK(got.fp == want.fp);
    CHECK(got.tn == want.tn);
    CHECK(got.fn == want.fn);
    CHECK(got.total() == 1000);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(eval::confusion({1, 0}, {1}), ArgError);
    CHECK_THROWS_AS(eval::confusion({}, {}), ArgError);
    CHECK_THROWS_AS(eval::confusion({2}, {1}), ArgError);
    CHECK_THROWS_AS(eval::confusion({1}, {-1}), ArgError);
  }
}

TEST_CASE("metrics arithmetic") {
  SUBCASE("constructed counts matching the published confusion rates") {
    // 20,000 benign / 10,000 attack windows at the reported row rates.
    ConfusionMatrix cm;
    cm.tp = 9614;
    cm.fn = 386;
    cm.fp = 1003;
    cm.tn = 18997;
    MetricsReport m = eval::metrics(cm);
    CHECK(std::abs(m.attack.recall - 0.9614) <= 1e-12);
    // 18997/20000 = 0.94985, i.e. 0.9499 at 4 decimals (tolerance 5e-5).
    CHECK(std::abs(m.benign.recall - 0.9499) <= 5.0001e-5);
    CHECK(std::abs(m.accuracy - 0.9537) <= 1e-12);  // 28611/30000 exactly
    CHECK(m.attack.precision == 9614.0 / (9614.0 + 1003.0));
    CHECK(!m.zero_division);
    CHECK(m.weighted_f1 >= std::min(m.benign.f1, m.attack.f1));
    CHECK(m.weighted_f1 <= std::max(m.benign.f1, m.attack.f1));
  }
  SUBCASE("perfect matrix") {
    ConfusionMatrix cm;
    cm.tp = 40;
    cm.tn = 60;
    MetricsReport m = eval::metrics(cm);
    CHECK(m.attack.precision == 1.0);
    CHECK(m.attack.recall == 1.0);
    CHECK(m.attack.f1 == 1.0);
    CHECK(m.benign.f1 == 1.0);
    CHECK(m.accuracy == 1.0);
    CHECK(m.macro_f1 == 1.0);
    CHECK(m.weighted_f1 == 1.0);
    CHECK(!m.zero_division);
  }
  SUBCASE("all-benign predictions flag the empty denominator") {
    ConfusionMatrix cm;
    cm.tn = 20;
    cm.fn = 10;  // every attack missed, nothing predicted positive
    MetricsReport m = eval::metrics(cm);
    CHECK(m.attack.recall == 0.0);
    CHECK(m.attack.precision == 0.0);  // tp+fp = 0
    CHECK(m.attack.f1 == 0.0);
    CHECK(m.zero_division);
    CHECK(m.accuracy == doctest::Approx(20.0 / 30.0).epsilon(1e-12));
  }
  SUBCASE("empty matrix is an argument error") {
    CHECK_THROWS_AS(eval::metrics(ConfusionMatrix{}), ArgError);
  }
  SUBCASE("rates stay in range on random matrices") {
    Rng rng(11);
    for (int t = 0; t < 200; ++t) {
      ConfusionMatrix cm;
      cm.tp = rng.below(500) + 1;
      cm.fp = rng.below(500) + 1;
      cm.tn = rng.below(500) + 1;
      cm.fn = rng.below(500) + 1;
      MetricsReport m = eval::metrics(cm);
      for (double v : {m.attack.precision, m.attack.recall, m.attack.f1,
                       m.benign.precision, m.benign.recall, m.benign.f1,
                       m.accuracy, m.macro_f1, m.weighted_f1}) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
      }
      CHECK(m.weighted_f1 >=
            std::min(m.benign.f1, m.attack.f1) - 1e-15);
      CHECK(m.weighted_f1 <=
            std::max(m.benign.f1, m.attack.f1) + 1e-15);
    }
  }
}

TEST_CASE("auroc rank statistic") {
  SUBCASE("perfect separation") {
    CHECK(eval::auroc({0.1, 0.2, 0.9, 0.8}, {0, 0, 1, 1}) == 1.0);
    CHECK(eval::auroc({0.9, 0.8, 0.1, 0.2}, {0, 0, 1, 1}) == 0.0);
  }
  SUBCASE("identical scores give the tie convention value") {
    CHECK(eval::auroc({0.5, 0.5, 0.5, 0.5}, {0, 1, 0, 1}) == 0.5);
  }
  SUBCASE("200-sample tied fixture matches the pairwise oracle") {
    Rng rng(31);
    std::vector<double> s;
    std::vector<int> l;
    for (int i = 0; i < 200; ++i) {
      l.push_back(static_cast<int>(rng.below(2)));
      // quantize onto a coarse grid so tie handling is exercised heavily
      double base = l.back() == 1 ? 0.55 : 0.45;
      double v = base + 0.4 * (rng.uniform() - 0.5);
      s.push_back(std::round(v * 20.0) / 20.0);
    }
    double got = eval::auroc(s, l);
    double want = auroc_oracle(s, l);
    CHECK(std::abs(got - want) <= 1e-12);
    CHECK(got > 0.5);  // yes, the classes were drawn apart
  }
  SUBCASE("invariant under strictly monotone transforms") {
    Rng rng(47);
    std::vector<double> s;
    std::vector<int> l;
    for (int i = 0; i < 101; ++i) {
      l.push_back(static_cast<int>(rng.below(2)));
      s.push_back(std::round(rng.uniform() * 50.0) / 50.0);
    }
    std::vector<double> t;
    for (double v : s) t.push_back(2.0 * v + 1.0);
    CHECK(eval::auroc(s, l) == eval::auroc(t, l));
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(eval::auroc({0.1, 0.2}, {0, 0}), DataError);
    CHECK_THROWS_AS(eval::auroc({0.1, 0.2}, {1, 1}), DataError);
    CHECK_THROWS_AS(eval::auroc({0.1}, {0, 1}), ArgError);
    CHECK_THROWS_AS(eval::auroc({}, {}), ArgError);
    CHECK_THROWS_AS(eval::auroc({0.1, 0.4}, {0, 2}), ArgError);
    CHECK_THROWS_AS(
        eval::auroc({0.1, std::numeric_limits<double>::quiet_NaN()}, {0, 1}),
        NumericError);
  }
}

TEST_CASE("experiment configuration") {
  SUBCASE("defaults validate and echo the key knobs") {
    ExperimentConfig cfg;
    cfg.attacks = eval::default_attack_plans();
    cfg.validate();
    std::string e = cfg.echo();
    CHECK(e.find("seed=42") != std::string::npos);
    CHECK(e.find("train_windows=20000") != std::string::npos);
    CHECK(e.find("under_extrusion:1000") != std::string::npos);
    CHECK(e.find("cavity_insertion:1000") != std::string::npos);
    CHECK(e.find("head={") != std::string::npos);
    CHECK(e.find("ae={") != std::string::npos);
  }
  SUBCASE("validation rejects bad values") {
    ExperimentConfig cfg;
    cfg.attacks = eval::default_attack_plans();
    cfg.train_windows = 1;
    CHECK_THROWS_AS(cfg.validate(), ArgError);
    cfg = ExperimentConfig{};
    cfg.attacks = eval::default_attack_plans();
    cfg.val_windows = 19;
    CHECK_THROWS_AS(cfg.validate(), ArgError);
    cfg = ExperimentConfig{};
    cfg.attacks = eval::default_attack_plans();
    cfg.window_periods = 0;
    CHECK_THROWS_AS(cfg.validate(), ArgError);
    cfg = ExperimentConfig{};
    cfg.attacks = eval::default_attack_plans();
    cfg.threshold_percentile = 101.0;
    CHECK_THROWS_AS(cfg.validate(), ArgError);
    cfg = ExperimentConfig{};
    cfg.attacks = eval::default_attack_plans();
    cfg.attacks[2].windows = 0;
    CHECK_THROWS_AS(cfg.validate(), ArgError);
    cfg = ExperimentConfig{};
    cfg.attacks = eval::default_attack_plans();
    cfg.attacks.push_back({attack::AttackKind::UnderExtrusion, 5});
    CHECK_THROWS_AS(cfg.validate(), ArgError);  // duplicate class
    cfg = ExperimentConfig{};
    cfg.attacks = {{attack::AttackKind::Exfiltration, 5}};
    CHECK_THROWS_AS(cfg.validate(), ArgError);
    cfg = ExperimentConfig{};
    cfg.attacks = eval::default_attack_plans();
    cfg.kmeans_k = 0;
    CHECK_THROWS_AS(cfg.validate(), ArgError);
  }
  SUBCASE("paper-scale preset echoes the published dataset counts") {
    ExperimentConfig cfg = eval::paper_scale_preset();
    std::string manifest = eval::plan_manifest(cfg);
    nlohmann::json j = nlohmann::json::parse(manifest);
    CHECK(j["kind"] == "experiment-plan");
    REQUIRE(j["datasets"].size() == 7);
    auto find = [&](const std::string& name) -> nlohmann::json {
      for (const auto& d : j["datasets"])
        if (d["name"] == name) return d;
      REQUIRE(false);
      return {};
    };
    CHECK(find("benign_train")["windows"] == 98720);
    CHECK(find("benign_train")["role"] == "train");
    CHECK(find("benign_val")["windows"] == 57373);
    CHECK(find("under_extrusion")["windows"] == 10120);
    CHECK(find("over_extrusion")["windows"] == 9950);
    CHECK(find("noise_injection")["windows"] == 15456);
    CHECK(find("dimensional_change")["windows"] == 9324);
    CHECK(find("cavity_insertion")["windows"] == 10521);
    for (const auto& d : j["datasets"]) {
      bool is_benign = d["name"] == "benign_train" || d["name"] == "benign_val";
      CHECK(d["label"] == (is_benign ? 0 : 1));
    }
  }
  SUBCASE("config file parsing") {
    const char* text =
        "# experiment sweep\n"
        "[experiment]\n"
        "seed = 99\n"
        "train_windows = 4000\n"
        "val_windows = 800        ; inline comment\n"
        "attack_windows = 300\n"
        "noise_injection_windows = 450\n"
        "window_periods = 4\n"
        "kmeans_k = 6\n"
        "threshold_percentile = 97.5\n"
        "out_dir = runs/sweep1\n"
        "\n"
        "[head]\n"
        "learning_rate = 2e-4\n"
        "batch_size = 32\n"
        "epochs = 10\n"
        "value_rate = 0.2\n"
        "value_jitter = 0.08\n"
        "\n"
        "[ae]\n"
        "learning_rate = 5e-5\n"
        "epochs = 12\n";
    ExperimentConfig cfg = eval::parse_experiment_config(text);
    CHECK(cfg.seed == 99);
    CHECK(cfg.train_windows == 4000);
    CHECK(cfg.val_windows == 800);
    CHECK(cfg.window_periods == 4);
    CHECK(cfg.kmeans_k == 6);
    CHECK(cfg.threshold_percentile == 97.5);
    CHECK(cfg.out_dir == "runs/sweep1");
    REQUIRE(cfg.attacks.size() == 5);
    for (const auto& plan : cfg.attacks) {
      if (plan.kind == attack::AttackKind::NoiseInjection)
        CHECK(plan.windows == 450);
      else
        CHECK(plan.windows == 300);
    }
    CHECK(cfg.head.learning_rate == 2e-4);
    CHECK(cfg.head.batch_size == 32);
    CHECK(cfg.head.epochs == 10);
    CHECK(cfg.head.corruption.value_rate == 0.2);
    CHECK(cfg.head.corruption.value_jitter == 0.08);
    CHECK(cfg.ae.learning_rate == 5e-5);
    CHECK(cfg.ae.epochs == 12);
    CHECK(cfg.ae.batch_size == 64);  // untouched default
  }
  SUBCASE("config file errors") {
    CHECK_THROWS_AS(eval::parse_experiment_config("[nope]\n"), ArgError);
    CHECK_THROWS_AS(eval::parse_experiment_config("seed = 1\n"), ArgError);
    CHECK_THROWS_AS(
        eval::parse_experiment_config("[experiment]\nbogus_key = 1\n"),
        ArgError);
    CHECK_THROWS_AS(
        eval::parse_experiment_config("[experiment]\nseed\n"), ArgError);
    CHECK_THROWS_AS(
        eval::parse_experiment_config("[experiment]\nseed = abc\n"), ArgError);
    CHECK_THROWS_AS(
        eval::parse_experiment_config("[experiment\nseed = 1\n"), ArgError);
    CHECK_THROWS_AS(
        eval::parse_experiment_config("[head]\nlearning_rate = -1\n"),
        ArgError);  // TrainConfig::validate fires at the end
    CHECK_THROWS_AS(
        eval::parse_experiment_config("[experiment]\nseed = 18446744073709551616\n"),
        ArgError);  // overflow
  }
}

TEST_CASE("dataset generation") {
  ExperimentConfig cfg;
  cfg.seed = 5;
  cfg.train_windows = 40;
  cfg.val_windows = 250;  // spans two runs, so two feed-menu entries
  cfg.attacks = eval::default_attack_plans(10);

  eval::DatasetBundle b = eval::build_datasets(cfg);

  SUBCASE("shapes, names, labels") {
    CHECK(b.train.name == "benign_train");
    CHECK(b.train.label == 0);
    CHECK(b.train.size() == 40);
    CHECK(b.val.size() == 250);
    REQUIRE(b.attacks.size() == 5);
    CHECK(b.attacks[0].name == "under_extrusion");
    CHECK(b.attacks[4].name == "cavity_insertion");
    for (const auto& a : b.attacks) {
      CHECK(a.label == 1);
      CHECK(a.size() == 10);
    }
    CHECK(b.train.raw.names == telemetry::channel_names());
    CHECK(b.train.raw.n_cols() == 26);
    CHECK(b.train.ids.size() == 40);
    CHECK(b.train.digests.size() == 40);
  }

  SUBCASE("ids and digests are well-formed and unique") {
    CHECK(b.train.ids[0] == "benign_train/0000/0000");
    std::set<std::string> dg;
    for (const auto& ws : {b.train, b.val}) {
      for (const auto& d : ws.digests) {
        CHECK(is_hex16(d));
        dg.insert(d);
      }
    }
    for (const auto& a : b.attacks)
      for (const auto& d : a.digests) dg.insert(d);
    CHECK(dg.size() == 40 + 250 + 5 * 10);
    CHECK(is_hex16(b.train.rolling_digest));
  }

  SUBCASE("split hygiene holds at generation time") {
    std::set<std::string> train_dg(b.train.digests.begin(),
                                   b.train.digests.end());
    for (const auto& a : b.attacks)
      for (const auto& d : a.digests) CHECK(train_dg.count(d) == 0);
  }

  SUBCASE("steady-state trim and feed variety") {
    auto flow_col = [&](const eval::WindowSet& ws) {
      std::vector<double> out;
      for (const auto& row : ws.raw.rows) out.push_back(row[25]);  // flow_rate
      return out;
    };
    // benign windows always extrude
    for (double f : flow_col(b.train)) CHECK(f > 0.0);
    for (double f : flow_col(b.val)) CHECK(f > 0.0);
    // the 250-window validation set spans two print feeds
    std::set<double> plateaus;
    for (double f : flow_col(b.val)) plateaus.insert(f);
    CHECK(plateaus.size() >= 2);
    // the cavity slab leaves interior zero-flow windows in place
    std::vector<double> cavity = flow_col(b.attacks[4]);
    CHECK(std::count(cavity.begin(), cavity.end(), 0.0) > 0);
    CHECK(cavity.front() > 0.0);
  }

  SUBCASE("deterministic per master seed, sensitive to it") {
    eval::DatasetBundle b2 = eval::build_datasets(cfg);
    CHECK(b2.train.rolling_digest == b.train.rolling_digest);
    CHECK(b2.val.rolling_digest == b.val.rolling_digest);
    for (std::size_t i = 0; i < 5; ++i)
      CHECK(b2.attacks[i].rolling_digest == b.attacks[i].rolling_digest);
    ExperimentConfig other = cfg;
    other.seed = 6;
    eval::DatasetBundle b3 = eval::build_datasets(other);
    CHECK(b3.train.rolling_digest != b.train.rolling_digest);
  }

  SUBCASE("oversized windows fail fast with the stage name") {
    ExperimentConfig bad = cfg;
    bad.window_periods = 100000;
    CHECK_THROWS_WITH_AS(eval::run_experiment(bad),
                         doctest::Contains("stage dataset-generation"),
                         DataError);
  }
}

// One deliberately flat test: the experiment is the expensive part, so it
// runs once and every aspect of the result is checked in sequence.
TEST_CASE("end-to-end experiment at desk scale") {
  namespace fs = std::filesystem;
  fs::path out = fs::temp_directory_path() / "fdmlab_eval_smoke";
  fs::remove_all(out);

  ExperimentConfig cfg = smoke_config();
  cfg.out_dir = out.string();
  eval::DetectionReport rep = eval::run_experiment(cfg);

  // -- report populated and self-consistent
  CHECK(rep.threshold.tau > 0.0);
  CHECK(rep.threshold.count == 200);
  CHECK(rep.cm.total() == 200 + 5 * 100);
  CHECK(rep.cm.actual_benign() == 200);
  CHECK(rep.cm.actual_attack() == 500);
  double acc = static_cast<double>(rep.cm.tp + rep.cm.tn) /
               static_cast<double>(rep.cm.total());
  CHECK(std::abs(acc - rep.metrics.accuracy) <= 1e-12);
  CHECK(rep.auroc_ae >= 0.0);
  CHECK(rep.auroc_ae <= 1.0);
  REQUIRE(rep.auroc_ae_per_class.size() == 5);
  CHECK(rep.auroc_ae_per_class[0].name == "under_extrusion");
  REQUIRE(rep.datasets.size() == 7);
  CHECK(rep.datasets[0].name == "benign_train");
  CHECK(rep.datasets[0].windows == 600);
  CHECK(rep.datasets[1].windows == 200);
  CHECK(rep.config_echo.find("seed=7") != std::string::npos);
  // the strict > tau rule flags about 5% of the calibration set itself
  CHECK(rep.cm.fp >= 4);
  CHECK(rep.cm.fp <= 16);

  // -- separation, loosely: two training epochs on 600 windows. The
  //    acceptance suite holds the full-scale run to the real bars.
  CHECK(rep.auroc_ae > 0.6);
  CHECK(rep.auroc_cluster > 0.6);

  // -- selection kept the load-bearing channels
  auto has = [&](const std::string& n) {
    return std::find(rep.surviving_features.begin(),
                     rep.surviving_features.end(),
                     n) != rep.surviving_features.end();
  };
  CHECK(has("flow_rate"));
  CHECK(has("print_time"));
  CHECK(!has("sd_pos"));  // rides the same ramp as print_time

  // -- artifacts land on disk and reload
  for (const char* f :
       {"report.json", "report.txt", "scores.csv", "pca.csv", "head.fdmt",
        "ae.fdmt", "centroids.fdmt", "threshold.json", "selection.json",
        "manifest.json"})
    CHECK(fs::exists(out / f));

  nlohmann::json rj = nlohmann::json::parse(slurp(out / "report.json"));
  CHECK(rj["kind"] == "detection-report");
  CHECK(rj["metrics"]["accuracy"] == rep.metrics.accuracy);
  CHECK(rj["auroc"]["ae_pooled"] == rep.auroc_ae);

  embed::ProjectionHead head =
      embed::ProjectionHead::deserialize(slurp(out / "head.fdmt"));
  head.validate();
  detect::AttentionAutoencoder ae =
      detect::AttentionAutoencoder::deserialize(slurp(out / "ae.fdmt"));
  ae.validate();
  detect::CentroidModel km =
      detect::CentroidModel::deserialize(slurp(out / "centroids.fdmt"));
  km.validate();
  CHECK(km.k() == 4);
  detect::ThresholdModel th =
      detect::ThresholdModel::from_json(slurp(out / "threshold.json"));
  CHECK(th.tau == rep.threshold.tau);

  std::string scores = slurp(out / "scores.csv");
  CHECK(count_lines(scores) == 1 + 700);
  CHECK(scores.rfind("id,dataset,label,ae_score,cluster_score\n", 0) == 0);
  std::string pca = slurp(out / "pca.csv");
  CHECK(count_lines(pca) == 1 + 700);
  CHECK(pca.rfind("id,score,label,pc1,pc2\n", 0) == 0);

  // -- train/validation hygiene in the emitted manifest
  nlohmann::json mj = nlohmann::json::parse(slurp(out / "manifest.json"));
  REQUIRE(mj["datasets"].size() == 7);
  std::set<std::string> train_dg;
  for (const auto& d : mj["datasets"]) {
    if (d["role"] == "train") {
      CHECK(d["name"] == "benign_train");
      for (const auto& w : d["window_digests"])
        train_dg.insert(w.get<std::string>());
    }
  }
  CHECK(train_dg.size() == 600);
  for (const auto& d : mj["datasets"]) {
    if (d["label"] == 1) {
      CHECK(d["window_digests"].size() == 100);
      for (const auto& w : d["window_digests"])
        CHECK(train_dg.count(w.get<std::string>()) == 0);
    }
  }

  // -- deterministic per master seed (out_dir left empty: no artifacts)
  eval::DetectionReport rep2 = eval::run_experiment(smoke_config());
  CHECK(rep2.to_json() == rep.to_json());
  CHECK(rep2.render_text() == rep.render_text());

  // -- report JSON round-trips through from_json
  eval::DetectionReport round = eval::DetectionReport::from_json(rep.to_json());
  CHECK(round.to_json() == rep.to_json());
  CHECK(round.render_text() == rep.render_text());
  CHECK_THROWS_AS(eval::DetectionReport::from_json("{]"), DataError);
  CHECK_THROWS_AS(eval::DetectionReport::from_json("{\"kind\":\"x\"}"),
                  DataError);

  // -- config errors surface before any work
  ExperimentConfig bad = smoke_config();
  bad.attacks.clear();
  CHECK_THROWS_AS(eval::run_experiment(bad), ArgError);

  fs::remove_all(out);
}
