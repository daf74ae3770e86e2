#include "fdmlab/embed.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <sstream>

#include "fdmlab/digest.hpp"
#include "fdmlab/errors.hpp"
#include "fdmlab/rng.hpp"
#include "fdmlab/tensorio.hpp"
#include "json.hpp"

namespace fdmlab::embed {

namespace {

std::vector<std::string> split_parts(const std::string& sentence) {
  std::vector<std::string> parts;
  std::size_t pos = 0;
  while (pos <= sentence.size()) {
    std::size_t sep = sentence.find(" | ", pos);
    if (sep == std::string::npos) {
      parts.push_back(sentence.substr(pos));
      break;
    }
    parts.push_back(sentence.substr(pos, sep - pos));
    pos = sep + 3;
  }
  return parts;
}

double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

HashedTokenEncoder::HashedTokenEncoder(std::uint64_t seed) : seed_(seed) {}

Vec HashedTokenEncoder::encode(const std::string& sentence) const {
  if (sentence.empty())
    throw ArgError("encode: sentence must be non-empty");
  Vec v(kEncDim, 0.0);
  for (const std::string& part : split_parts(sentence)) {
    std::string toks[2];
    int ntok = 1;
    const std::size_t eq = part.find('=');
    if (eq == std::string::npos) {
      toks[0] = part;
    } else {
      toks[0] = part.substr(0, eq);
      toks[1] = part.substr(eq + 1);
      ntok = 2;
    }
    for (int t = 0; t < ntok; ++t) {
      const std::uint64_t base = fnv1a64(toks[t], seed_);
      for (std::uint64_t j = 0; j < 8; ++j) {
        // Remix per slot so the 8 positions are independent.
        std::uint64_t h = base ^ (j * 0x9e3779b97f4a7c15ULL);
        h ^= h >> 33;
        h *= 0xff51afd7ed558ccdULL;
        h ^= h >> 33;
        const auto pos = static_cast<std::size_t>(h % kEncDim);
        v[pos] += (h >> 63) ? -1.0 : 1.0;
      }
    }
  }
  const double norm = std::sqrt(dot(v, v));
  if (!(norm > 0.0))
    throw NumericError("encode: degenerate all-cancelling embedding");
  for (double& x : v) x /= norm;
  return v;
}

ExternalVectorSource ExternalVectorSource::from_jsonl(const std::string& text) {
  ExternalVectorSource src;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(std::string("external vectors: invalid JSON: ") +
                      e.what());
    }
    if (!j.contains("digest") || !j.contains("vector"))
      throw DataError("external vectors: record needs 'digest' and 'vector'");
    Vec v = j["vector"].get<Vec>();
    if (v.size() != static_cast<std::size_t>(kEncDim))
      throw DataError("external vectors: vector length " +
                      std::to_string(v.size()) + ", expected " +
                      std::to_string(kEncDim));
    for (double x : v)
      if (!std::isfinite(x))
        throw DataError("external vectors: non-finite component");
    src.by_digest_[j["digest"].get<std::string>()] = std::move(v);
  }
  return src;
}

Vec ExternalVectorSource::encode(const std::string& sentence) const {
  if (sentence.empty())
    throw ArgError("encode: sentence must be non-empty");
  auto it = by_digest_.find(digest_hex(sentence));
  if (it == by_digest_.end())
    throw DataError("external vectors: no embedding for sentence digest " +
                    digest_hex(sentence));
  return it->second;
}

ProjectionHead ProjectionHead::init(std::uint64_t seed) {
  ProjectionHead h;
  Rng rng(seed);
  auto fill = [&rng](Vec& v, std::size_t n, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    v.resize(n);
    for (double& x : v) x = rng.uniform(-bound, bound);
  };
  fill(h.w1, std::size_t(kHiddenDim) * kEncDim, kEncDim);
  fill(h.b1, kHiddenDim, kEncDim);
  fill(h.w2, std::size_t(kProjDim) * kHiddenDim, kHiddenDim);
  fill(h.b2, kProjDim, kHiddenDim);
  return h;
}

void ProjectionHead::validate() const {
  if (w1.size() != std::size_t(kHiddenDim) * kEncDim ||
      b1.size() != std::size_t(kHiddenDim) ||
      w2.size() != std::size_t(kProjDim) * kHiddenDim ||
      b2.size() != std::size_t(kProjDim))
    throw ArgError("ProjectionHead: wrong tensor shapes");
  for (const Vec* v : {&w1, &b1, &w2, &b2})
    for (double x : *v)
      if (!std::isfinite(x))
        throw NumericError("ProjectionHead: non-finite parameter");
}

std::string ProjectionHead::serialize(const std::string& config_digest) const {
  validate();
  tensorio::TensorFile f;
  f.kind = "projection-head";
  if (!config_digest.empty()) f.meta["config_digest"] = config_digest;
  f.tensors = {
      {"w1", {std::size_t(kHiddenDim), std::size_t(kEncDim)}, w1},
      {"b1", {std::size_t(kHiddenDim)}, b1},
      {"w2", {std::size_t(kProjDim), std::size_t(kHiddenDim)}, w2},
      {"b2", {std::size_t(kProjDim)}, b2},
  };
  return tensorio::serialize_tensors(f);
}

ProjectionHead ProjectionHead::deserialize(const std::string& bytes) {
  tensorio::TensorFile f = tensorio::parse_tensors(bytes);
  if (f.kind != "projection-head")
    throw DataError("ProjectionHead: tensor file kind is '" + f.kind + "'");
  ProjectionHead h;
  h.w1 = tensorio::find_tensor(f, "w1").data;
  h.b1 = tensorio::find_tensor(f, "b1").data;
  h.w2 = tensorio::find_tensor(f, "w2").data;
  h.b2 = tensorio::find_tensor(f, "b2").data;
  h.validate();
  return h;
}

Vec project(const ProjectionHead& head, const Vec& h) {
  if (h.size() != static_cast<std::size_t>(kEncDim))
    throw ArgError("project: input must be 384-d");
  Vec r1(kHiddenDim);
  for (int i = 0; i < kHiddenDim; ++i) {
    const double* row = head.w1.data() + std::size_t(i) * kEncDim;
    double a = head.b1[std::size_t(i)];
    for (int j = 0; j < kEncDim; ++j) a += row[j] * h[std::size_t(j)];
    r1[std::size_t(i)] = a > 0.0 ? a : 0.0;
  }
  Vec z(kProjDim);
  for (int i = 0; i < kProjDim; ++i) {
    const double* row = head.w2.data() + std::size_t(i) * kHiddenDim;
    double a = head.b2[std::size_t(i)];
    for (int j = 0; j < kHiddenDim; ++j) a += row[j] * r1[std::size_t(j)];
    z[std::size_t(i)] = a;
  }
  return z;
}

namespace {

// Synonym dictionary, first match wins; ordering is part of the contract
// (earlier entries take precedence inside composite key names).
const std::vector<std::pair<std::string, std::string>>& synonyms() {
  static const std::vector<std::pair<std::string, std::string>> table = {
      {"extruder", "toolhead"}, {"chamber", "enclosure"}, {"receive", "rx"},
      {"buffer", "queue"},      {"gcode", "script"},      {"bytes", "octets"},
      {"print", "job"},         {"send", "tx"},           {"flow", "feed"},
      {"task", "tick"},         {"temp", "heat"},         {"time", "clock"},
      {"awake", "busy"},        {"load", "util"},         {"mem", "ram"},
      {"cpu", "proc"},          {"bed", "platform"},      {"mcu", "controller"},
      {"pos", "offset"},        {"seq", "count"},         {"rto", "timeout"},
      {"rtt", "lag"},           {"pwm", "duty"},          {"sd", "card"},
  };
  return table;
}

bool rename_key(std::string& key) {
  for (const auto& [word, syn] : synonyms()) {
    const std::size_t at = key.find(word);
    if (at != std::string::npos) {
      key = key.substr(0, at) + syn + key.substr(at + word.size());
      return true;
    }
  }
  return false;
}

int fraction_digits(const std::string& value) {
  const std::size_t dot = value.find('.');
  if (dot == std::string::npos) return 0;
  return static_cast<int>(value.size() - dot - 1);
}

// Jitter the numeric text by up to +-jitter relative, preserving its
// fractional precision. Returns false when the text cannot change at this
// precision (e.g. "0.0000").
bool jitter_value(std::string& value, double jitter, Rng& rng) {
  char* end = nullptr;
  const double v = std::strtod(value.c_str(), &end);
  if (end == value.c_str() || *end != '\0' || !std::isfinite(v)) return false;
  const int digits = fraction_digits(value);
  const double u = rng.uniform(-1.0, 1.0);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v * (1.0 + jitter * u));
  if (value == buf) return false;
  value = buf;
  return true;
}

// Last-resort forced change: bump the final digit character.
void bump_last_digit(std::string& value) {
  for (std::size_t i = value.size(); i-- > 0;) {
    char& c = value[i];
    if (c >= '0' && c <= '9') {
      c = c == '9' ? '8' : static_cast<char>(c + 1);
      return;
    }
  }
  value += "1";
}

}  // namespace

std::string corrupt(const std::string& sentence, std::uint64_t seed,
                    const CorruptionPolicy& policy) {
  if (sentence.empty()) throw ArgError("corrupt: sentence must be non-empty");
  auto parts = split_parts(sentence);
  struct KV {
    std::string key, value;
    bool has_eq;
  };
  std::vector<KV> kv;
  kv.reserve(parts.size());
  for (const auto& p : parts) {
    const std::size_t eq = p.find('=');
    if (eq == std::string::npos)
      kv.push_back({p, "", false});
    else
      kv.push_back({p.substr(0, eq), p.substr(eq + 1), true});
  }

  Rng rng = Rng(seed).fork("corrupt");
  int changes = 0;
  for (auto& e : kv) {
    if (policy.key_rate > 0 && rng.uniform() < policy.key_rate) {
      std::string renamed = e.key;
      if (rename_key(renamed) && renamed != e.key) {
        e.key = renamed;
        ++changes;
      }
    }
    if (e.has_eq && policy.value_rate > 0 &&
        rng.uniform() < policy.value_rate) {
      if (jitter_value(e.value, policy.value_jitter, rng)) ++changes;
    }
  }

  // Minimum-one rule: force a seeded synonym swap, falling back to a value
  // jitter, falling back to a digit bump.
  Rng forced = Rng(seed).fork("forced-change");
  for (int guard = 0; changes < policy.min_changes && guard < 3; ++guard) {
    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < kv.size(); ++i) {
      std::string probe = kv[i].key;
      if (rename_key(probe) && probe != kv[i].key) eligible.push_back(i);
    }
    if (guard == 0 && !eligible.empty()) {
      auto& e = kv[eligible[static_cast<std::size_t>(
          forced.below(eligible.size()))]];
      rename_key(e.key);
      ++changes;
    } else if (guard <= 1) {
      std::vector<std::size_t> vals;
      for (std::size_t i = 0; i < kv.size(); ++i)
        if (kv[i].has_eq) vals.push_back(i);
      if (vals.empty()) {
        if (kv.empty()) break;
        bump_last_digit(kv[0].key);
        ++changes;
      } else {
        auto& e =
            kv[vals[static_cast<std::size_t>(forced.below(vals.size()))]];
        if (jitter_value(e.value, std::max(policy.value_jitter, 0.05), forced))
          ++changes;
        else {
          bump_last_digit(e.value);
          ++changes;
        }
      }
    }
  }

  std::string out;
  for (std::size_t i = 0; i < kv.size(); ++i) {
    if (i) out += " | ";
    out += kv[i].key;
    if (kv[i].has_eq) {
      out += '=';
      out += kv[i].value;
    }
  }
  return out;
}

double contrastive_loss(const Vec& z, const Vec& zp) {
  if (z.size() != zp.size())
    throw ArgError("contrastive_loss: dimension mismatch");
  const double nz = std::sqrt(dot(z, z));
  const double np = std::sqrt(dot(zp, zp));
  if (nz == 0.0 && np == 0.0)
    throw NumericError("contrastive_loss: cosine undefined for two zero "
                       "vectors");
  if (nz == 0.0 || np == 0.0) return 1.0;  // orthogonal by convention
  double c = dot(z, zp) / (nz * np);
  c = std::clamp(c, -1.0, 1.0);
  return 1.0 - c;
}

void HeadGrads::reset() {
  w1.assign(std::size_t(kHiddenDim) * kEncDim, 0.0);
  b1.assign(kHiddenDim, 0.0);
  w2.assign(std::size_t(kProjDim) * kHiddenDim, 0.0);
  b2.assign(kProjDim, 0.0);
}

namespace {

struct Forward {
  Vec a1;  // pre-activation, kHiddenDim
  Vec r1;  // ReLU(a1)
  Vec z;   // kProjDim
};

Forward forward(const ProjectionHead& head, const Vec& h) {
  Forward f;
  f.a1.resize(kHiddenDim);
  f.r1.resize(kHiddenDim);
  for (int i = 0; i < kHiddenDim; ++i) {
    const double* row = head.w1.data() + std::size_t(i) * kEncDim;
    double a = head.b1[std::size_t(i)];
    for (int j = 0; j < kEncDim; ++j) a += row[j] * h[std::size_t(j)];
    f.a1[std::size_t(i)] = a;
    f.r1[std::size_t(i)] = a > 0.0 ? a : 0.0;
  }
  f.z.resize(kProjDim);
  for (int i = 0; i < kProjDim; ++i) {
    const double* row = head.w2.data() + std::size_t(i) * kHiddenDim;
    double a = head.b2[std::size_t(i)];
    for (int j = 0; j < kHiddenDim; ++j) a += row[j] * f.r1[std::size_t(j)];
    f.z[std::size_t(i)] = a;
  }
  return f;
}

void backward_branch(const ProjectionHead& head, const Vec& h,
                     const Forward& f, const Vec& dz, HeadGrads& out) {
  Vec dr1(kHiddenDim, 0.0);
  for (int i = 0; i < kProjDim; ++i) {
    const double g = dz[std::size_t(i)];
    if (g == 0.0) continue;
    double* w2g = out.w2.data() + std::size_t(i) * kHiddenDim;
    const double* w2r = head.w2.data() + std::size_t(i) * kHiddenDim;
    for (int j = 0; j < kHiddenDim; ++j) {
      w2g[j] += g * f.r1[std::size_t(j)];
      dr1[std::size_t(j)] += g * w2r[j];
    }
    out.b2[std::size_t(i)] += g;
  }
  for (int i = 0; i < kHiddenDim; ++i) {
    if (f.a1[std::size_t(i)] <= 0.0) continue;  // ReLU gate
    const double g = dr1[std::size_t(i)];
    if (g == 0.0) continue;
    double* w1g = out.w1.data() + std::size_t(i) * kEncDim;
    for (int j = 0; j < kEncDim; ++j) w1g[j] += g * h[std::size_t(j)];
    out.b1[std::size_t(i)] += g;
  }
}

}  // namespace

double pair_loss_accumulate(const ProjectionHead& head, const Vec& h,
                            const Vec& hp, HeadGrads& out, Vec* z_out) {
  Forward fa = forward(head, h);
  Forward fb = forward(head, hp);
  if (z_out) *z_out = fa.z;
  const double nz = std::sqrt(dot(fa.z, fa.z));
  const double np = std::sqrt(dot(fb.z, fb.z));
  if (nz == 0.0 && np == 0.0)
    throw NumericError("pair loss: cosine undefined for two zero vectors");
  if (nz == 0.0 || np == 0.0) return 1.0;  // flat region, zero gradient

  const double zz = dot(fa.z, fb.z);
  const double c = zz / (nz * np);

  // d(1 - cos)/dz = cos * z / |z|^2 - z' / (|z| |z'|), symmetric for z'.
  Vec dza(kProjDim), dzb(kProjDim);
  for (int i = 0; i < kProjDim; ++i) {
    dza[std::size_t(i)] = c * fa.z[std::size_t(i)] / (nz * nz) -
                          fb.z[std::size_t(i)] / (nz * np);
    dzb[std::size_t(i)] = c * fb.z[std::size_t(i)] / (np * np) -
                          fa.z[std::size_t(i)] / (nz * np);
  }
  backward_branch(head, h, fa, dza, out);
  backward_branch(head, hp, fb, dzb, out);
  return 1.0 - c;
}

void TrainConfig::validate() const {
  if (!std::isfinite(learning_rate) || learning_rate < 0.0)
    throw ArgError("TrainConfig: learning_rate must be finite and >= 0");
  if (batch_size < 1) throw ArgError("TrainConfig: batch_size must be >= 1");
  if (epochs < 1) throw ArgError("TrainConfig: epochs must be >= 1");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1))
    throw ArgError("TrainConfig: betas must lie in [0, 1)");
  if (!(eps > 0)) throw ArgError("TrainConfig: eps must be > 0");
}

std::string TrainConfig::echo() const {
  std::ostringstream os;
  os << "lr=" << learning_rate << " batch=" << batch_size
     << " epochs=" << epochs << " beta1=" << beta1 << " beta2=" << beta2
     << " eps=" << eps << " seed=" << seed
     << " key_rate=" << corruption.key_rate
     << " value_rate=" << corruption.value_rate
     << " value_jitter=" << corruption.value_jitter
     << " min_changes=" << corruption.min_changes;
  return os.str();
}

namespace {

struct Adam {
  Vec m, v;
  void init(std::size_t n) {
    m.assign(n, 0.0);
    v.assign(n, 0.0);
  }
  void step(Vec& theta, const Vec& g, const TrainConfig& cfg, double bc1,
            double bc2) {
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double mh = m[i] / bc1;
      const double vh = v[i] / bc2;
      theta[i] -= cfg.learning_rate * mh / (std::sqrt(vh) + cfg.eps);
    }
  }
};

double mean_pairwise_cosine(const std::vector<Vec>& zs) {
  if (zs.size() < 2) return 0.0;
  std::vector<double> norms(zs.size());
  for (std::size_t i = 0; i < zs.size(); ++i)
    norms[i] = std::sqrt(dot(zs[i], zs[i]));
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < zs.size(); ++i)
    for (std::size_t j = i + 1; j < zs.size(); ++j) {
      if (norms[i] == 0.0 || norms[j] == 0.0) continue;
      sum += dot(zs[i], zs[j]) / (norms[i] * norms[j]);
      ++count;
    }
  return count ? sum / static_cast<double>(count) : 0.0;
}

double mean_dim_variance(const std::vector<Vec>& zs) {
  if (zs.empty()) return 0.0;
  const std::size_t d = zs[0].size();
  double total = 0.0;
  for (std::size_t c = 0; c < d; ++c) {
    double mu = 0.0;
    for (const auto& z : zs) mu += z[c];
    mu /= static_cast<double>(zs.size());
    double var = 0.0;
    for (const auto& z : zs) var += (z[c] - mu) * (z[c] - mu);
    total += var / static_cast<double>(zs.size());
  }
  return total / static_cast<double>(d);
}

}  // namespace

TrainReport train_projection(ProjectionHead& head,
                             const std::vector<std::string>& sentences,
                             const SentenceEncoder& encoder,
                             const TrainConfig& cfg) {
  cfg.validate();
  head.validate();
  if (sentences.empty())
    throw ArgError("train_projection: no training sentences");

  // Corruption is a function of (config seed, sentence index), independent
  // of epoch, so both encodings are frozen and precomputable.
  const std::size_t n = sentences.size();
  std::vector<Vec> clean(n), corrupted(n);
  Rng corr_root = Rng(cfg.seed).fork("corruption");
  for (std::size_t i = 0; i < n; ++i) {
    clean[i] = encoder.encode(sentences[i]);
    const std::uint64_t si = corr_root.fork(static_cast<std::uint64_t>(i))
                                 .next_u64();
    corrupted[i] = encoder.encode(corrupt(sentences[i], si, cfg.corruption));
  }

  TrainReport report;
  Adam aw1, ab1, aw2, ab2;
  aw1.init(head.w1.size());
  ab1.init(head.b1.size());
  aw2.init(head.w2.size());
  ab2.init(head.b2.size());
  HeadGrads grads;
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  Rng shuffle_root = Rng(cfg.seed).fork("shuffle");
  long t = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng sh = shuffle_root.fork(static_cast<std::uint64_t>(epoch));
    sh.shuffle(order);
    double epoch_sum = 0.0;
    std::size_t epoch_batches = 0;
    for (std::size_t at = 0; at < n; at += std::size_t(cfg.batch_size)) {
      const std::size_t bend = std::min(n, at + std::size_t(cfg.batch_size));
      const std::size_t bsz = bend - at;
      grads.reset();
      double batch_sum = 0.0;
      std::vector<Vec> batch_z;
      batch_z.reserve(bsz);
      for (std::size_t k = at; k < bend; ++k) {
        const std::size_t i = order[k];
        Vec z;
        batch_sum +=
            pair_loss_accumulate(head, clean[i], corrupted[i], grads, &z);
        batch_z.push_back(std::move(z));
      }
      const double scale = 1.0 / static_cast<double>(bsz);
      for (double& g : grads.w1) g *= scale;
      for (double& g : grads.b1) g *= scale;
      for (double& g : grads.w2) g *= scale;
      for (double& g : grads.b2) g *= scale;
      const double batch_loss = batch_sum * scale;

      if (!std::isfinite(batch_loss)) {
        double wn = std::sqrt(dot(head.w1, head.w1) + dot(head.w2, head.w2));
        throw NumericError(
            "train_projection: non-finite loss at epoch " +
            std::to_string(epoch) + " batch " +
            std::to_string(epoch_batches) + " (weight norm " +
            std::to_string(wn) + ")");
      }
      report.batch_loss.push_back(batch_loss);
      report.batch_variance.push_back(mean_dim_variance(batch_z));
      if (bsz >= 2 && mean_pairwise_cosine(batch_z) > 0.999) {
        ++report.collapse_warnings;
        if (report.collapse_warnings == 1)
          report.warnings.push_back(
              "embedding collapse suspected: mean pairwise batch cosine "
              "> 0.999 at epoch " +
              std::to_string(epoch));
      }

      ++t;
      const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
      const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
      aw1.step(head.w1, grads.w1, cfg, bc1, bc2);
      ab1.step(head.b1, grads.b1, cfg, bc1, bc2);
      aw2.step(head.w2, grads.w2, cfg, bc1, bc2);
      ab2.step(head.b2, grads.b2, cfg, bc1, bc2);

      epoch_sum += batch_loss;
      ++epoch_batches;
    }
    head.validate();  // parameters finite after every training step
    report.epoch_loss.push_back(epoch_sum /
                                static_cast<double>(epoch_batches));
  }
  return report;
}

}  // namespace fdmlab::embed
