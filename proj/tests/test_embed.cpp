#include "fdmlab/embed.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "doctest.h"
#include "fdmlab/digest.hpp"
#include "fdmlab/errors.hpp"
#include "fdmlab/rng.hpp"
#include "fdmlab/tensorio.hpp"

using namespace fdmlab;
using embed::kEncDim;
using embed::kHiddenDim;
using embed::kProjDim;
using embed::ProjectionHead;
using embed::Vec;

namespace {

double vdot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double cosine(const Vec& a, const Vec& b) {
  return vdot(a, b) / std::sqrt(vdot(a, a) * vdot(b, b));
}

// Matrix-arithmetic oracle for the projection head: long double two-layer
// MLP written independently of the library's loops.
Vec oracle_project(const ProjectionHead& h, const Vec& x) {
  std::vector<long double> r1(kHiddenDim);
  for (int i = 0; i < kHiddenDim; ++i) {
    long double a = h.b1[std::size_t(i)];
    for (int j = 0; j < kEncDim; ++j)
      a += static_cast<long double>(h.w1[std::size_t(i) * kEncDim + j]) *
           x[std::size_t(j)];
    r1[std::size_t(i)] = a > 0.0L ? a : 0.0L;
  }
  Vec z(kProjDim);
  for (int i = 0; i < kProjDim; ++i) {
    long double a = h.b2[std::size_t(i)];
    for (int j = 0; j < kHiddenDim; ++j)
      a += static_cast<long double>(h.w2[std::size_t(i) * kHiddenDim + j]) *
           r1[std::size_t(j)];
    z[std::size_t(i)] = static_cast<double>(a);
  }
  return z;
}

Vec random_unit(Rng& rng) {
  Vec v(kEncDim);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  const double n = std::sqrt(vdot(v, v));
  for (double& x : v) x /= n;
  return v;
}

std::vector<std::string> split_on_sep(const std::string& s) {
  std::vector<std::string> parts;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    std::size_t sep = s.find(" | ", pos);
    if (sep == std::string::npos) {
      parts.push_back(s.substr(pos));
      break;
    }
    parts.push_back(s.substr(pos, sep - pos));
    pos = sep + 3;
  }
  return parts;
}

// Telemetry-shaped sentences over small discrete value menus, mirroring how
// the benign corpus keeps its token vocabulary finite.
std::string synth_sentence(Rng& rng) {
  static const char* keys[10] = {
      "print_time", "gcodein",     "mcu_temp", "extruder_pwm", "memavail",
      "bytes_write", "bytes_read", "rto",      "mcu_task_avg", "flow_rate"};
  static const double menu[5] = {1.00, 1.13, 1.25, 1.38, 1.50};
  std::string s;
  char buf[64];
  for (int k = 0; k < 10; ++k) {
    const double scale = 1.0 + 3.0 * k;
    std::snprintf(buf, sizeof buf, "%s=%.4f", keys[k],
                  scale * menu[rng.below(5)]);
    if (k) s += " | ";
    s += buf;
  }
  return s;
}

std::vector<std::string> synth_corpus(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::string> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(synth_sentence(rng));
  return out;
}

}  // namespace

TEST_CASE("hashed encoder: unit norm, determinism, sensitivity") {
  embed::HashedTokenEncoder enc;
  const std::string s = "mcu_temp=31.4000 | gcodein=12.0000 | flow_rate=1.2500";
  Vec a = enc.encode(s);
  REQUIRE(a.size() == std::size_t(kEncDim));
  CHECK(std::abs(std::sqrt(vdot(a, a)) - 1.0) <= 1e-12);
  for (double x : a) CHECK(std::isfinite(x));

  Vec b = enc.encode(s);
  CHECK(a == b);  // bitwise deterministic

  // One value token changed: embeddings must differ but stay correlated
  // through the shared tokens.
  Vec c = enc.encode(
      "mcu_temp=31.4000 | gcodein=12.0000 | flow_rate=0.9000");
  const double cs = cosine(a, c);
  CHECK(cs < 1.0 - 1e-9);
  CHECK(cs > 0.0);

  // A different hash seed is a different encoder.
  embed::HashedTokenEncoder enc2(12345);
  Vec d = enc2.encode(s);
  CHECK(cosine(a, d) < 1.0 - 1e-9);

  CHECK_THROWS_AS((void)enc.encode(""), ArgError);
}

TEST_CASE("external vector source: exact return and failure modes") {
  const std::string s1 = "a=1.0000 | b=2.0000";
  const std::string s2 = "a=1.0000 | b=2.5000";
  Vec v1(kEncDim), v2(kEncDim);
  for (int i = 0; i < kEncDim; ++i) {
    v1[std::size_t(i)] = 0.001 * i;
    v2[std::size_t(i)] = -0.002 * i + 0.1;
  }
  auto row = [](const std::string& s, const Vec& v) {
    std::string line = "{\"digest\":\"" + digest_hex(s) + "\",\"vector\":[";
    char buf[32];
    for (std::size_t i = 0; i < v.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", v[i]);
      if (i) line += ",";
      line += buf;
    }
    return line + "]}";
  };
  auto src = embed::ExternalVectorSource::from_jsonl(
      row(s1, v1) + "\n\n" + row(s2, v2) + "\n");
  REQUIRE(src.size() == 2);
  CHECK(src.encode(s1) == v1);
  CHECK(src.encode(s2) == v2);
  CHECK_THROWS_AS((void)src.encode("a=9.0000"), DataError);
  CHECK_THROWS_AS((void)src.encode(""), ArgError);

  CHECK_THROWS_AS(
      (void)embed::ExternalVectorSource::from_jsonl("{not json}"), DataError);
  CHECK_THROWS_AS(
      (void)embed::ExternalVectorSource::from_jsonl("{\"digest\":\"x\"}"),
      DataError);
  CHECK_THROWS_AS((void)embed::ExternalVectorSource::from_jsonl(
                      "{\"digest\":\"x\",\"vector\":[1.0,2.0]}"),
                  DataError);
}

TEST_CASE("projection head: init bounds, identity block, matrix oracle") {
  ProjectionHead h = ProjectionHead::init(42);
  h.validate();
  CHECK(h.w1.size() == std::size_t(kHiddenDim) * kEncDim);
  const double bound1 = 1.0 / std::sqrt(double(kEncDim));
  for (double x : h.w1) CHECK(std::abs(x) <= bound1);
  const double bound2 = 1.0 / std::sqrt(double(kHiddenDim));
  for (double x : h.w2) CHECK(std::abs(x) <= bound2);
  ProjectionHead h2 = ProjectionHead::init(42);
  CHECK(h.w1 == h2.w1);  // seeded init is reproducible
  ProjectionHead h3 = ProjectionHead::init(43);
  CHECK(h.w1 != h3.w1);

  // Identity block: w1 = [I_256; 0], w2 = [I_128 0] passes the first 128
  // nonnegative inputs straight through.
  ProjectionHead id;
  id.w1.assign(std::size_t(kHiddenDim) * kEncDim, 0.0);
  id.b1.assign(kHiddenDim, 0.0);
  id.w2.assign(std::size_t(kProjDim) * kHiddenDim, 0.0);
  id.b2.assign(kProjDim, 0.0);
  for (int i = 0; i < kHiddenDim; ++i) id.w1[std::size_t(i) * kEncDim + i] = 1.0;
  for (int j = 0; j < kProjDim; ++j) id.w2[std::size_t(j) * kHiddenDim + j] = 1.0;
  Vec x(kEncDim, 0.0);
  for (int j = 0; j < kEncDim; ++j)
    x[std::size_t(j)] = j < 128 ? 0.25 + j / 1000.0 : (j < 256 ? -1.0 : 7.0);
  Vec z = embed::project(id, x);
  REQUIRE(z.size() == std::size_t(kProjDim));
  for (int j = 0; j < kProjDim; ++j) CHECK(z[std::size_t(j)] == x[std::size_t(j)]);

  // Seeded heads against the independent long double oracle.
  Rng rng(7);
  for (int trial = 0; trial < 3; ++trial) {
    ProjectionHead ht = ProjectionHead::init(100 + std::uint64_t(trial));
    Vec in = random_unit(rng);
    Vec got = embed::project(ht, in);
    Vec want = oracle_project(ht, in);
    for (int i = 0; i < kProjDim; ++i)
      CHECK(std::abs(got[std::size_t(i)] - want[std::size_t(i)]) <= 1e-9);
  }

  CHECK_THROWS_AS((void)embed::project(h, Vec(10, 0.0)), ArgError);
  ProjectionHead bad = ProjectionHead::init(1);
  bad.b2.pop_back();
  CHECK_THROWS_AS(bad.validate(), ArgError);
  ProjectionHead nan_head = ProjectionHead::init(1);
  nan_head.w2[5] = std::nan("");
  CHECK_THROWS_AS(nan_head.validate(), NumericError);
}

TEST_CASE("tensor file: round-trip, metadata, malformed input") {
  ProjectionHead h = ProjectionHead::init(99);
  const std::string bytes = h.serialize("cfgdigest123");
  ProjectionHead back = ProjectionHead::deserialize(bytes);
  CHECK(back.w1 == h.w1);
  CHECK(back.b1 == h.b1);
  CHECK(back.w2 == h.w2);
  CHECK(back.b2 == h.b2);

  tensorio::TensorFile f = tensorio::parse_tensors(bytes);
  CHECK(f.kind == "projection-head");
  CHECK(f.meta.at("config_digest") == "cfgdigest123");
  REQUIRE(f.tensors.size() == 4);
  CHECK(f.tensors[0].name == "w1");
  CHECK(f.tensors[0].shape ==
        std::vector<std::size_t>{std::size_t(kHiddenDim), std::size_t(kEncDim)});
  CHECK_THROWS_AS((void)tensorio::find_tensor(f, "w9"), DataError);

  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS((void)tensorio::parse_tensors(bad_magic), DataError);
  std::string bad_version = bytes;
  bad_version[4] = 2;
  CHECK_THROWS_AS((void)tensorio::parse_tensors(bad_version), DataError);
  CHECK_THROWS_AS((void)tensorio::parse_tensors(bytes.substr(0, 20)),
                  DataError);
  CHECK_THROWS_AS((void)tensorio::parse_tensors(bytes.substr(0, bytes.size() - 9)),
                  DataError);

  tensorio::TensorFile mism;
  mism.kind = "projection-head";
  mism.tensors = {{"w", {2, 3}, Vec(5, 0.0)}};
  CHECK_THROWS_AS((void)tensorio::serialize_tensors(mism), ArgError);

  tensorio::TensorFile wrong_kind;
  wrong_kind.kind = "other";
  wrong_kind.tensors = {{"w1", {1}, Vec(1, 0.0)}};
  CHECK_THROWS_AS(
      (void)ProjectionHead::deserialize(tensorio::serialize_tensors(wrong_kind)),
      DataError);

  ProjectionHead nan_head = ProjectionHead::init(5);
  nan_head.b1[0] = std::nan("");
  tensorio::TensorFile nf;
  nf.kind = "projection-head";
  nf.tensors = {
      {"w1", {std::size_t(kHiddenDim), std::size_t(kEncDim)}, nan_head.w1},
      {"b1", {std::size_t(kHiddenDim)}, nan_head.b1},
      {"w2", {std::size_t(kProjDim), std::size_t(kHiddenDim)}, nan_head.w2},
      {"b2", {std::size_t(kProjDim)}, nan_head.b2},
  };
  CHECK_THROWS_AS(
      (void)ProjectionHead::deserialize(tensorio::serialize_tensors(nf)),
      NumericError);
}

TEST_CASE("corruption: determinism and forced minimum change") {
  embed::CorruptionPolicy none;
  none.key_rate = 0.0;
  none.value_rate = 0.0;
  const std::string s =
      "extruder_temp=205.1000 | bytes_write=38.0000 | flow_rate=1.2500";

  const std::string c1 = embed::corrupt(s, 11, none);
  CHECK(c1 == embed::corrupt(s, 11, none));  // deterministic
  CHECK(c1 != s);                            // min_changes enforced

  // With both rates zero the forced change is exactly one synonym rename.
  auto orig = split_on_sep(s);
  auto got = split_on_sep(c1);
  REQUIRE(got.size() == orig.size());
  int diffs = 0;
  for (std::size_t i = 0; i < got.size(); ++i) {
    if (got[i] == orig[i]) continue;
    ++diffs;
    const auto eq_o = orig[i].find('=');
    const auto eq_g = got[i].find('=');
    REQUIRE(eq_o != std::string::npos);
    REQUIRE(eq_g != std::string::npos);
    CHECK(orig[i].substr(eq_o) == got[i].substr(eq_g));  // value untouched
    CHECK(orig[i].substr(0, eq_o) != got[i].substr(0, eq_g));
  }
  CHECK(diffs == 1);

  // Single eligible key: the swap is fully pinned down.
  CHECK(embed::corrupt("extruder_temp=200.0000", 1, none) ==
        "toolhead_temp=200.0000");
  CHECK(embed::corrupt("extruder_temp=200.0000", 999, none) ==
        "toolhead_temp=200.0000");

  // No '=' and no synonym hit: last-resort digit bump appends.
  CHECK(embed::corrupt("hello", 3, none) == "hello1");
  CHECK(embed::corrupt("mcu=5", 3, none) == "controller=5");

  CHECK_THROWS_AS((void)embed::corrupt("", 1, none), ArgError);
}

TEST_CASE("corruption: value jitter stays relative and keeps precision") {
  embed::CorruptionPolicy all;
  all.key_rate = 0.0;
  all.value_rate = 1.0;
  all.value_jitter = 0.05;
  Rng seeds(404);
  for (int trial = 0; trial < 20; ++trial) {
    Rng mk(seeds.next_u64());
    const std::string s = synth_sentence(mk);
    const std::string c = embed::corrupt(s, seeds.next_u64(), all);
    auto orig = split_on_sep(s);
    auto got = split_on_sep(c);
    REQUIRE(got.size() == orig.size());
    int diffs = 0;
    for (std::size_t i = 0; i < got.size(); ++i) {
      const auto eq_o = orig[i].find('=');
      const auto eq_g = got[i].find('=');
      CHECK(orig[i].substr(0, eq_o) == got[i].substr(0, eq_g));  // keys kept
      const std::string vo = orig[i].substr(eq_o + 1);
      const std::string vg = got[i].substr(eq_g + 1);
      // Fractional precision is preserved; the integer part may change
      // width when the jitter crosses a power of ten.
      CHECK(vg.size() - vg.find('.') == vo.size() - vo.find('.'));
      const double o = std::stod(vo), g = std::stod(vg);
      // jitter bound plus half-digit rounding, or a single last-digit bump
      CHECK(std::abs(g - o) <= 0.05 * std::abs(o) + 1e-4 * 0.51 + 1e-4);
      if (vg != vo) ++diffs;
    }
    CHECK(diffs >= 1);
  }
}

TEST_CASE("contrastive loss: hand values and conventions") {
  CHECK(embed::contrastive_loss({1.0, 0.0}, {1.0, 1.0}) ==
        doctest::Approx(1.0 - 1.0 / std::sqrt(2.0)).epsilon(1e-12));
  CHECK(std::abs(embed::contrastive_loss({0.5, 0.25, -1.0},
                                          {0.5, 0.25, -1.0})) <= 1e-12);
  CHECK(std::abs(embed::contrastive_loss({1.0, -2.0}, {-2.0, 4.0}) - 2.0) <=
        1e-12);
  CHECK(embed::contrastive_loss({0.0, 0.0}, {3.0, 4.0}) == 1.0);
  CHECK_THROWS_AS((void)embed::contrastive_loss({0.0}, {0.0}), NumericError);
  CHECK_THROWS_AS((void)embed::contrastive_loss({1.0}, {1.0, 2.0}), ArgError);

  Rng rng(8);
  for (int t = 0; t < 50; ++t) {
    Vec a(16), b(16);
    for (double& x : a) x = rng.uniform(-2.0, 2.0);
    for (double& x : b) x = rng.uniform(-2.0, 2.0);
    const double l = embed::contrastive_loss(a, b);
    CHECK(l >= 0.0);
    CHECK(l <= 2.0);
  }
}

TEST_CASE("pair loss gradients match central finite differences") {
  // Independent loss path for the differencing: contrastive_loss(project).
  auto loss_of = [](const ProjectionHead& head, const Vec& h, const Vec& hp) {
    return embed::contrastive_loss(embed::project(head, h),
                                   embed::project(head, hp));
  };
  const double step = 1e-5;
  Rng rng(2024);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    ProjectionHead head = ProjectionHead::init(seed);
    Vec h = random_unit(rng);
    Vec hp;
    if (seed % 2 == 1) {  // similar pair: the training regime
      hp = h;
      for (double& x : hp) x += rng.uniform(-0.05, 0.05);
      const double n = std::sqrt(vdot(hp, hp));
      for (double& x : hp) x /= n;
    } else {  // unrelated pair
      hp = random_unit(rng);
    }

    embed::HeadGrads grads;
    grads.reset();
    const double loss = embed::pair_loss_accumulate(head, h, hp, grads);
    CHECK(std::abs(loss - loss_of(head, h, hp)) <= 1e-12);

    auto check_tensor = [&](Vec& theta, const Vec& g, std::size_t samples) {
      for (std::size_t s = 0; s < samples; ++s) {
        const std::size_t i = std::size_t(rng.below(theta.size()));
        const double keep = theta[i];
        theta[i] = keep + step;
        const double up = loss_of(head, h, hp);
        theta[i] = keep - step;
        const double dn = loss_of(head, h, hp);
        theta[i] = keep;
        const double fd = (up - dn) / (2.0 * step);
        const double an = g[i];
        CHECK(std::abs(fd - an) <=
              1e-4 * std::max(std::abs(fd) + std::abs(an), 1e-8));
      }
    };
    check_tensor(head.w1, grads.w1, 12);
    check_tensor(head.b1, grads.b1, 8);
    check_tensor(head.w2, grads.w2, 12);
    check_tensor(head.b2, grads.b2, 8);
  }
}

TEST_CASE("pair loss accumulates and reports the clean projection") {
  ProjectionHead head = ProjectionHead::init(77);
  Rng rng(5);
  Vec h = random_unit(rng), hp = random_unit(rng);
  embed::HeadGrads once, twice;
  once.reset();
  twice.reset();
  Vec z;
  (void)embed::pair_loss_accumulate(head, h, hp, once, &z);
  CHECK(z == embed::project(head, h));
  (void)embed::pair_loss_accumulate(head, h, hp, twice);
  (void)embed::pair_loss_accumulate(head, h, hp, twice);
  for (std::size_t i = 0; i < once.w2.size(); ++i)
    CHECK(std::abs(twice.w2[i] - 2.0 * once.w2[i]) <= 1e-15);
}

TEST_CASE("train config validation") {
  embed::TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.learning_rate = 0.0;  // frozen-head runs are legal
  CHECK_NOTHROW(cfg.validate());
  cfg.learning_rate = -1e-4;
  CHECK_THROWS_AS(cfg.validate(), ArgError);
  cfg = {};
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), ArgError);
  cfg = {};
  cfg.epochs = 0;
  CHECK_THROWS_AS(cfg.validate(), ArgError);
  cfg = {};
  cfg.beta1 = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ArgError);
  cfg = {};
  cfg.beta2 = -0.1;
  CHECK_THROWS_AS(cfg.validate(), ArgError);
  cfg = {};
  cfg.eps = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ArgError);
  cfg = {};
  CHECK(cfg.echo().find("lr=") != std::string::npos);
  CHECK(cfg.echo().find("seed=") != std::string::npos);
}

TEST_CASE("training: zero learning rate leaves the head bit-identical") {
  auto corpus = synth_corpus(40, 900);
  embed::HashedTokenEncoder enc;
  ProjectionHead head = ProjectionHead::init(3);
  const std::string before = head.serialize();
  embed::TrainConfig cfg;
  cfg.learning_rate = 0.0;
  cfg.epochs = 2;
  cfg.batch_size = 16;
  cfg.seed = 7;
  auto report = embed::train_projection(head, corpus, enc, cfg);
  CHECK(head.serialize() == before);
  REQUIRE(report.epoch_loss.size() == 2);
  REQUIRE(report.batch_loss.size() == 6);  // ceil(40/16) = 3 per epoch
  // Frozen head: each epoch sees the same 40 pairs, so the pair-weighted
  // mean is shuffle-invariant (plain epoch means are not — the final short
  // batch regroups under each shuffle).
  auto pair_mean = [&](std::size_t first_batch) {
    const double sizes[3] = {16.0, 16.0, 8.0};
    double s = 0.0;
    for (std::size_t b = 0; b < 3; ++b)
      s += report.batch_loss[first_batch + b] * sizes[b];
    return s / 40.0;
  };
  CHECK(std::abs(pair_mean(0) - pair_mean(3)) <= 1e-12);
}

TEST_CASE("training: seeded determinism of weights and losses") {
  auto corpus = synth_corpus(64, 901);
  embed::HashedTokenEncoder enc;
  embed::TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 32;
  cfg.seed = 11;

  ProjectionHead a = ProjectionHead::init(5);
  ProjectionHead b = ProjectionHead::init(5);
  auto ra = embed::train_projection(a, corpus, enc, cfg);
  auto rb = embed::train_projection(b, corpus, enc, cfg);
  CHECK(a.serialize() == b.serialize());
  CHECK(ra.epoch_loss == rb.epoch_loss);
  CHECK(ra.batch_loss == rb.batch_loss);

  embed::TrainConfig other = cfg;
  other.seed = 12;
  ProjectionHead c = ProjectionHead::init(5);
  (void)embed::train_projection(c, corpus, enc, other);
  CHECK(a.serialize() != c.serialize());
}

TEST_CASE("training: loss descends and the encoder stays frozen") {
  auto corpus = synth_corpus(512, 902);
  embed::HashedTokenEncoder enc;
  std::vector<Vec> pre;
  for (std::size_t i = 0; i < 8; ++i) pre.push_back(enc.encode(corpus[i]));

  ProjectionHead head = ProjectionHead::init(21);
  embed::TrainConfig cfg;
  cfg.epochs = 6;
  cfg.seed = 13;
  auto report = embed::train_projection(head, corpus, enc, cfg);

  REQUIRE(report.epoch_loss.size() == 6);
  CHECK(report.epoch_loss.back() < report.epoch_loss.front());
  for (double l : report.batch_loss) {
    CHECK(l >= 0.0);
    CHECK(l <= 2.0);
  }
  CHECK(report.collapse_warnings == 0);
  CHECK(report.batch_variance.size() == report.batch_loss.size());
  for (double v : report.batch_variance) CHECK(v >= 0.0);

  // The sentence encoder has no trainable state.
  for (std::size_t i = 0; i < 8; ++i) CHECK(enc.encode(corpus[i]) == pre[i]);
}

TEST_CASE("training: collapse monitor fires on a degenerate corpus") {
  std::vector<std::string> same(64, "flow_rate=1.2500 | gcodein=12.0000");
  embed::HashedTokenEncoder enc;
  ProjectionHead head = ProjectionHead::init(9);
  embed::TrainConfig cfg;
  cfg.epochs = 1;
  cfg.seed = 2;
  auto report = embed::train_projection(head, same, enc, cfg);
  CHECK(report.collapse_warnings >= 1);
  REQUIRE(!report.warnings.empty());
  CHECK(report.warnings[0].find("collapse") != std::string::npos);
}

TEST_CASE("training: argument errors") {
  embed::HashedTokenEncoder enc;
  ProjectionHead head = ProjectionHead::init(1);
  embed::TrainConfig cfg;
  CHECK_THROWS_AS((void)embed::train_projection(head, {}, enc, cfg), ArgError);
  cfg.batch_size = 0;
  CHECK_THROWS_AS(
      (void)embed::train_projection(head, {"a=1.0"}, enc, cfg), ArgError);
}
