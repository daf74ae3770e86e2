#include "fdmlab/detect.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "fdmlab/errors.hpp"
#include "fdmlab/rng.hpp"
#include "fdmlab/tensorio.hpp"
#include "json.hpp"

namespace fdmlab::detect {

namespace {

void require_finite(const std::vector<Vec>& rows, const char* what) {
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (double x : rows[i])
      if (!std::isfinite(x))
        throw NumericError(std::string(what) + ": non-finite value in row " +
                           std::to_string(i));
}

double dist2(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

// out = W x + b, W row-major rows x cols
void affine(const Vec& w, const Vec& b, const Vec& x, std::size_t rows,
            std::size_t cols, Vec& out) {
  out.resize(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    const double* row = w.data() + i * cols;
    double a = b.empty() ? 0.0 : b[i];
    for (std::size_t j = 0; j < cols; ++j) a += row[j] * x[j];
    out[i] = a;
  }
}

}  // namespace

double percentile(std::vector<double> values, double p) {
  if (values.empty()) throw ArgError("percentile: no values");
  if (!(p >= 0.0 && p <= 100.0))
    throw ArgError("percentile: p must lie in [0, 100]");
  for (double x : values)
    if (!std::isfinite(x)) throw NumericError("percentile: non-finite value");
  std::sort(values.begin(), values.end());
  const double rank =
      static_cast<double>(values.size() - 1) * p / 100.0;
  const auto lo = static_cast<std::size_t>(std::floor(rank));
  const auto hi = static_cast<std::size_t>(std::ceil(rank));
  const double frac = rank - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

// ---------------------------------------------------------------- clustering

void CentroidModel::validate() const {
  if (centroids.empty()) throw ArgError("CentroidModel: no centroids");
  for (const Vec& c : centroids) {
    if (c.size() != dim)
      throw ArgError("CentroidModel: centroid dimension mismatch");
    for (double x : c)
      if (!std::isfinite(x))
        throw NumericError("CentroidModel: non-finite centroid");
  }
}

std::string CentroidModel::serialize() const {
  validate();
  tensorio::TensorFile f;
  f.kind = "centroid-model";
  f.meta["seed"] = std::to_string(seed);
  f.meta["iterations"] = std::to_string(iterations);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", inertia);
  f.meta["inertia"] = buf;
  Vec flat;
  flat.reserve(centroids.size() * dim);
  for (const Vec& c : centroids) flat.insert(flat.end(), c.begin(), c.end());
  f.tensors = {{"centroids", {centroids.size(), dim}, std::move(flat)}};
  return tensorio::serialize_tensors(f);
}

CentroidModel CentroidModel::deserialize(const std::string& bytes) {
  tensorio::TensorFile f = tensorio::parse_tensors(bytes);
  if (f.kind != "centroid-model")
    throw DataError("CentroidModel: tensor file kind is '" + f.kind + "'");
  const tensorio::Tensor& t = tensorio::find_tensor(f, "centroids");
  if (t.shape.size() != 2)
    throw DataError("CentroidModel: centroids tensor must be 2-d");
  CentroidModel m;
  m.dim = t.shape[1];
  m.centroids.resize(t.shape[0]);
  for (std::size_t c = 0; c < t.shape[0]; ++c)
    m.centroids[c].assign(t.data.begin() + static_cast<long>(c * m.dim),
                          t.data.begin() + static_cast<long>((c + 1) * m.dim));
  if (f.meta.count("seed")) m.seed = std::stoull(f.meta.at("seed"));
  if (f.meta.count("iterations")) m.iterations = std::stoi(f.meta.at("iterations"));
  if (f.meta.count("inertia")) m.inertia = std::stod(f.meta.at("inertia"));
  m.validate();
  return m;
}

CentroidModel fit_kmeans(const std::vector<Vec>& embeddings, std::size_t k,
                         std::uint64_t seed) {
  const std::size_t n = embeddings.size();
  if (k < 1) throw ArgError("fit_kmeans: k must be >= 1");
  if (n < k)
    throw ArgError("fit_kmeans: need at least k points, got " +
                   std::to_string(n) + " for k=" + std::to_string(k));
  const std::size_t d = embeddings[0].size();
  if (d == 0) throw ArgError("fit_kmeans: zero-dimensional embeddings");
  for (const Vec& e : embeddings)
    if (e.size() != d) throw ArgError("fit_kmeans: ragged embeddings");
  require_finite(embeddings, "fit_kmeans");

  // k-means++ seeding: first centroid uniform, then proportional to the
  // squared distance from the chosen set.
  Rng rng = Rng(seed).fork("kmeans++");
  CentroidModel m;
  m.dim = d;
  m.seed = seed;
  m.centroids.push_back(embeddings[static_cast<std::size_t>(rng.below(n))]);
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = dist2(embeddings[i], m.centroids[0]);
  while (m.centroids.size() < k) {
    double total = 0.0;
    for (double x : d2) total += x;
    std::size_t pick = 0;
    if (total > 0.0) {
      const double r = rng.uniform() * total;
      double cum = 0.0;
      pick = n - 1;  // guard against r landing on total after rounding
      for (std::size_t i = 0; i < n; ++i) {
        cum += d2[i];
        if (cum > r) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<std::size_t>(rng.below(n));  // all duplicates
    }
    m.centroids.push_back(embeddings[pick]);
    for (std::size_t i = 0; i < n; ++i)
      d2[i] = std::min(d2[i], dist2(embeddings[i], m.centroids.back()));
  }

  std::vector<std::size_t> assign(n, 0);
  std::vector<Vec> sums(k, Vec(d, 0.0));
  std::vector<std::size_t> counts(k, 0);
  const auto assignment_pass = [&](bool record) {
    double inertia = 0.0;
    for (Vec& s : sums) std::fill(s.begin(), s.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double bd = dist2(embeddings[i], m.centroids[0]);
      for (std::size_t c = 1; c < k; ++c) {
        const double dc = dist2(embeddings[i], m.centroids[c]);
        if (dc < bd) {  // ties keep the lowest index
          bd = dc;
          best = c;
        }
      }
      assign[i] = best;
      inertia += bd;
      if (record) {
        ++counts[best];
        for (std::size_t j = 0; j < d; ++j) sums[best][j] += embeddings[i][j];
      }
    }
    return inertia;
  };

  for (int iter = 0; iter < 300; ++iter) {
    m.inertia_history.push_back(assignment_pass(true));
    m.iterations = iter + 1;
    double move2 = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;  // empty cluster keeps its centroid
      Vec next(d);
      for (std::size_t j = 0; j < d; ++j)
        next[j] = sums[c][j] / static_cast<double>(counts[c]);
      move2 = std::max(move2, dist2(next, m.centroids[c]));
      m.centroids[c] = std::move(next);
    }
    if (std::sqrt(move2) < 1e-6) break;
  }
  m.inertia = assignment_pass(false);
  m.inertia_history.push_back(m.inertia);
  m.validate();
  return m;
}

double cluster_score(const CentroidModel& model, const Vec& z) {
  model.validate();
  if (z.size() != model.dim)
    throw ArgError("cluster_score: embedding dimension mismatch");
  double best = dist2(z, model.centroids[0]);
  for (std::size_t c = 1; c < model.k(); ++c)
    best = std::min(best, dist2(z, model.centroids[c]));
  return std::sqrt(best);
}

std::size_t nearest_centroid(const CentroidModel& model, const Vec& z) {
  model.validate();
  if (z.size() != model.dim)
    throw ArgError("nearest_centroid: embedding dimension mismatch");
  std::size_t best = 0;
  double bd = dist2(z, model.centroids[0]);
  for (std::size_t c = 1; c < model.k(); ++c) {
    const double dc = dist2(z, model.centroids[c]);
    if (dc < bd) {
      bd = dc;
      best = c;
    }
  }
  return best;
}

// ----------------------------------------------------------------------- PCA

namespace {

// Cyclic Jacobi eigendecomposition of a symmetric matrix. `a` is destroyed;
// columns of `v` come back as eigenvectors. Rotations keep `v` orthonormal
// to machine precision independent of how tightly the sweep converged.
void jacobi_eigen(std::vector<double>& a, std::size_t d,
                  std::vector<double>& v, std::vector<double>& eig) {
  v.assign(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) v[i * d + i] = 1.0;
  double frob2 = 0.0;
  for (double x : a) frob2 += x * x;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off2 = 0.0;
    for (std::size_t p = 0; p < d; ++p)
      for (std::size_t q = p + 1; q < d; ++q) off2 += a[p * d + q] * a[p * d + q];
    if (off2 <= 1e-26 * std::max(frob2, 1e-300)) break;
    for (std::size_t p = 0; p + 1 < d; ++p) {
      for (std::size_t q = p + 1; q < d; ++q) {
        const double apq = a[p * d + q];
        if (apq == 0.0) continue;
        const double theta = (a[q * d + q] - a[p * d + p]) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t i = 0; i < d; ++i) {
          const double aip = a[i * d + p], aiq = a[i * d + q];
          a[i * d + p] = c * aip - s * aiq;
          a[i * d + q] = s * aip + c * aiq;
        }
        for (std::size_t i = 0; i < d; ++i) {
          const double api = a[p * d + i], aqi = a[q * d + i];
          a[p * d + i] = c * api - s * aqi;
          a[q * d + i] = s * api + c * aqi;
        }
        for (std::size_t i = 0; i < d; ++i) {
          const double vip = v[i * d + p], viq = v[i * d + q];
          v[i * d + p] = c * vip - s * viq;
          v[i * d + q] = s * vip + c * viq;
        }
      }
    }
  }
  eig.resize(d);
  for (std::size_t i = 0; i < d; ++i) eig[i] = a[i * d + i];
}

}  // namespace

PcaResult pca_project(const std::vector<Vec>& embeddings, int dims) {
  if (dims != 2 && dims != 3) throw ArgError("pca_project: dims must be 2 or 3");
  const std::size_t n = embeddings.size();
  if (n < 2) throw DataError("pca_project: need at least 2 points");
  const std::size_t d = embeddings[0].size();
  if (d < static_cast<std::size_t>(dims))
    throw ArgError("pca_project: dimension below requested components");
  for (const Vec& e : embeddings)
    if (e.size() != d) throw ArgError("pca_project: ragged embeddings");
  require_finite(embeddings, "pca_project");

  PcaResult r;
  r.mean.assign(d, 0.0);
  for (const Vec& e : embeddings)
    for (std::size_t j = 0; j < d; ++j) r.mean[j] += e[j];
  for (double& x : r.mean) x /= static_cast<double>(n);

  // Population covariance, matching the variance convention used upstream.
  std::vector<double> cov(d * d, 0.0);
  for (const Vec& e : embeddings)
    for (std::size_t i = 0; i < d; ++i) {
      const double di = e[i] - r.mean[i];
      for (std::size_t j = i; j < d; ++j)
        cov[i * d + j] += di * (e[j] - r.mean[j]);
    }
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i; j < d; ++j) {
      cov[i * d + j] /= static_cast<double>(n);
      cov[j * d + i] = cov[i * d + j];
    }

  std::vector<double> v, eig;
  jacobi_eigen(cov, d, v, eig);

  std::vector<std::size_t> order(d);
  for (std::size_t i = 0; i < d; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return eig[a] > eig[b]; });

  double total = 0.0;
  for (double l : eig) total += std::max(l, 0.0);
  if (!(total > 0.0)) throw DataError("pca_project: zero total variance");

  for (int c = 0; c < dims; ++c) {
    const std::size_t col = order[static_cast<std::size_t>(c)];
    Vec comp(d);
    for (std::size_t i = 0; i < d; ++i) comp[i] = v[i * d + col];
    // Sign convention: the largest-magnitude entry (first on ties) points up.
    std::size_t arg = 0;
    for (std::size_t i = 1; i < d; ++i)
      if (std::abs(comp[i]) > std::abs(comp[arg])) arg = i;
    if (comp[arg] < 0.0)
      for (double& x : comp) x = -x;
    r.components.push_back(std::move(comp));
    r.explained.push_back(std::max(eig[col], 0.0) / total);
  }

  r.coords.assign(n, Vec(static_cast<std::size_t>(dims), 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (int c = 0; c < dims; ++c) {
      double s = 0.0;
      const Vec& comp = r.components[static_cast<std::size_t>(c)];
      for (std::size_t j = 0; j < d; ++j)
        s += (embeddings[i][j] - r.mean[j]) * comp[j];
      r.coords[i][static_cast<std::size_t>(c)] = s;
    }
  return r;
}

// --------------------------------------------------------------- autoencoder

AttentionAutoencoder AttentionAutoencoder::init(std::uint64_t seed) {
  AttentionAutoencoder ae;
  Rng rng(seed);
  auto fill = [&rng](Vec& v, std::size_t n, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    v.resize(n);
    for (double& x : v) x = rng.uniform(-bound, bound);
  };
  fill(ae.w1, std::size_t(kAeHidden) * kAeIn, kAeIn);
  fill(ae.b1, kAeHidden, kAeIn);
  fill(ae.wq, std::size_t(kAeHidden) * kAeHidden, kAeHidden);
  fill(ae.wk, std::size_t(kAeHidden) * kAeHidden, kAeHidden);
  fill(ae.wv, std::size_t(kAeHidden) * kAeHidden, kAeHidden);
  fill(ae.w2, std::size_t(kAeLatent) * kAeHidden, kAeHidden);
  fill(ae.b2, kAeLatent, kAeHidden);
  fill(ae.w3, std::size_t(kAeHidden) * kAeLatent, kAeLatent);
  fill(ae.b3, kAeHidden, kAeLatent);
  fill(ae.w4, std::size_t(kAeIn) * kAeHidden, kAeHidden);
  fill(ae.b4, kAeIn, kAeHidden);
  return ae;
}

void AttentionAutoencoder::validate() const {
  const struct {
    const Vec* v;
    std::size_t n;
  } shapes[] = {
      {&w1, std::size_t(kAeHidden) * kAeIn},
      {&b1, std::size_t(kAeHidden)},
      {&wq, std::size_t(kAeHidden) * kAeHidden},
      {&wk, std::size_t(kAeHidden) * kAeHidden},
      {&wv, std::size_t(kAeHidden) * kAeHidden},
      {&w2, std::size_t(kAeLatent) * kAeHidden},
      {&b2, std::size_t(kAeLatent)},
      {&w3, std::size_t(kAeHidden) * kAeLatent},
      {&b3, std::size_t(kAeHidden)},
      {&w4, std::size_t(kAeIn) * kAeHidden},
      {&b4, std::size_t(kAeIn)},
  };
  for (const auto& s : shapes) {
    if (s.v->size() != s.n)
      throw ArgError("AttentionAutoencoder: wrong tensor shapes");
    for (double x : *s.v)
      if (!std::isfinite(x))
        throw NumericError("AttentionAutoencoder: non-finite parameter");
  }
}

std::string AttentionAutoencoder::serialize(
    const std::string& config_digest) const {
  validate();
  tensorio::TensorFile f;
  f.kind = "attention-autoencoder";
  f.meta["tokenized"] = tokenized ? "1" : "0";
  if (!config_digest.empty()) f.meta["config_digest"] = config_digest;
  const std::size_t H = kAeHidden, I = kAeIn, L = kAeLatent;
  f.tensors = {
      {"w1", {H, I}, w1}, {"b1", {H}, b1}, {"wq", {H, H}, wq},
      {"wk", {H, H}, wk}, {"wv", {H, H}, wv}, {"w2", {L, H}, w2},
      {"b2", {L}, b2},    {"w3", {H, L}, w3}, {"b3", {H}, b3},
      {"w4", {I, H}, w4}, {"b4", {I}, b4},
  };
  return tensorio::serialize_tensors(f);
}

AttentionAutoencoder AttentionAutoencoder::deserialize(
    const std::string& bytes) {
  tensorio::TensorFile f = tensorio::parse_tensors(bytes);
  if (f.kind != "attention-autoencoder")
    throw DataError("AttentionAutoencoder: tensor file kind is '" + f.kind +
                    "'");
  AttentionAutoencoder ae;
  ae.w1 = tensorio::find_tensor(f, "w1").data;
  ae.b1 = tensorio::find_tensor(f, "b1").data;
  ae.wq = tensorio::find_tensor(f, "wq").data;
  ae.wk = tensorio::find_tensor(f, "wk").data;
  ae.wv = tensorio::find_tensor(f, "wv").data;
  ae.w2 = tensorio::find_tensor(f, "w2").data;
  ae.b2 = tensorio::find_tensor(f, "b2").data;
  ae.w3 = tensorio::find_tensor(f, "w3").data;
  ae.b3 = tensorio::find_tensor(f, "b3").data;
  ae.w4 = tensorio::find_tensor(f, "w4").data;
  ae.b4 = tensorio::find_tensor(f, "b4").data;
  if (f.meta.count("tokenized")) ae.tokenized = f.meta.at("tokenized") == "1";
  ae.validate();
  return ae;
}

namespace {

struct AeForward {
  Vec a1, r1;   // 64
  Vec q, k, v;  // 64
  Vec attn;     // 64
  Vec smx;      // tokenized: 64x64 row-major softmax matrix
  Vec rv;       // ReLU(attn)
  Vec zenc;     // 8
  Vec a3, r3;   // 64
  Vec zhat;     // 128
};

void attention_forward(const AttentionAutoencoder& ae, const Vec& h,
                       AeForward& f) {
  affine(ae.wv, {}, h, kAeHidden, kAeHidden, f.v);
  if (!ae.tokenized) {
    // alpha = (Q . K) / sqrt(64) is a single scalar, so softmax(alpha) = 1
    // exactly and the output is V verbatim; Q and K never influence it.
    f.attn = f.v;
    return;
  }
  affine(ae.wq, {}, h, kAeHidden, kAeHidden, f.q);
  affine(ae.wk, {}, h, kAeHidden, kAeHidden, f.k);
  // Ablation: the 64 coordinates act as 64 one-dimensional tokens (d_k = 1);
  // rows of the mixing matrix are softmax(Q_i * K_j).
  f.smx.assign(std::size_t(kAeHidden) * kAeHidden, 0.0);
  f.attn.assign(kAeHidden, 0.0);
  for (int i = 0; i < kAeHidden; ++i) {
    double* row = f.smx.data() + std::size_t(i) * kAeHidden;
    double mx = -HUGE_VAL;
    for (int j = 0; j < kAeHidden; ++j) {
      row[j] = f.q[std::size_t(i)] * f.k[std::size_t(j)];
      mx = std::max(mx, row[j]);
    }
    double sum = 0.0;
    for (int j = 0; j < kAeHidden; ++j) {
      row[j] = std::exp(row[j] - mx);
      sum += row[j];
    }
    double out = 0.0;
    for (int j = 0; j < kAeHidden; ++j) {
      row[j] /= sum;
      out += row[j] * f.v[std::size_t(j)];
    }
    f.attn[std::size_t(i)] = out;
  }
}

AeForward ae_forward_full(const AttentionAutoencoder& ae, const Vec& z) {
  AeForward f;
  affine(ae.w1, ae.b1, z, kAeHidden, kAeIn, f.a1);
  f.r1.resize(kAeHidden);
  for (int i = 0; i < kAeHidden; ++i)
    f.r1[std::size_t(i)] = f.a1[std::size_t(i)] > 0.0 ? f.a1[std::size_t(i)] : 0.0;
  attention_forward(ae, f.r1, f);
  f.rv.resize(kAeHidden);
  for (int i = 0; i < kAeHidden; ++i)
    f.rv[std::size_t(i)] = f.attn[std::size_t(i)] > 0.0 ? f.attn[std::size_t(i)] : 0.0;
  affine(ae.w2, ae.b2, f.rv, kAeLatent, kAeHidden, f.zenc);
  affine(ae.w3, ae.b3, f.zenc, kAeHidden, kAeLatent, f.a3);
  f.r3.resize(kAeHidden);
  for (int i = 0; i < kAeHidden; ++i)
    f.r3[std::size_t(i)] = f.a3[std::size_t(i)] > 0.0 ? f.a3[std::size_t(i)] : 0.0;
  affine(ae.w4, ae.b4, f.r3, kAeIn, kAeHidden, f.zhat);
  return f;
}

}  // namespace

Vec self_attention(const AttentionAutoencoder& ae, const Vec& h) {
  ae.validate();
  if (h.size() != std::size_t(kAeHidden))
    throw ArgError("self_attention: input must be 64-d");
  AeForward f;
  attention_forward(ae, h, f);
  return f.attn;
}

Vec ae_forward(const AttentionAutoencoder& ae, const Vec& z) {
  ae.validate();
  if (z.size() != std::size_t(kAeIn))
    throw ArgError("ae_forward: input must be 128-d");
  return ae_forward_full(ae, z).zhat;
}

double reconstruction_error(const AttentionAutoencoder& ae, const Vec& z) {
  ae.validate();
  if (z.size() != std::size_t(kAeIn))
    throw ArgError("reconstruction_error: input must be 128-d");
  const AeForward f = ae_forward_full(ae, z);
  double s = 0.0;
  for (int i = 0; i < kAeIn; ++i) {
    const double d = f.zhat[std::size_t(i)] - z[std::size_t(i)];
    s += d * d;
  }
  return s / kAeIn;
}

void AeGrads::reset() {
  w1.assign(std::size_t(kAeHidden) * kAeIn, 0.0);
  b1.assign(kAeHidden, 0.0);
  wq.assign(std::size_t(kAeHidden) * kAeHidden, 0.0);
  wk.assign(std::size_t(kAeHidden) * kAeHidden, 0.0);
  wv.assign(std::size_t(kAeHidden) * kAeHidden, 0.0);
  w2.assign(std::size_t(kAeLatent) * kAeHidden, 0.0);
  b2.assign(kAeLatent, 0.0);
  w3.assign(std::size_t(kAeHidden) * kAeLatent, 0.0);
  b3.assign(kAeHidden, 0.0);
  w4.assign(std::size_t(kAeIn) * kAeHidden, 0.0);
  b4.assign(kAeIn, 0.0);
}

double ae_loss_accumulate(const AttentionAutoencoder& ae, const Vec& z,
                          AeGrads& out) {
  const AeForward f = ae_forward_full(ae, z);

  double loss = 0.0;
  Vec dzhat(kAeIn);
  for (int i = 0; i < kAeIn; ++i) {
    const double d = f.zhat[std::size_t(i)] - z[std::size_t(i)];
    loss += d * d;
    dzhat[std::size_t(i)] = 2.0 * d / kAeIn;
  }
  loss /= kAeIn;

  // decoder output layer
  Vec dr3(kAeHidden, 0.0);
  for (int i = 0; i < kAeIn; ++i) {
    const double g = dzhat[std::size_t(i)];
    double* wg = out.w4.data() + std::size_t(i) * kAeHidden;
    const double* wr = ae.w4.data() + std::size_t(i) * kAeHidden;
    for (int j = 0; j < kAeHidden; ++j) {
      wg[j] += g * f.r3[std::size_t(j)];
      dr3[std::size_t(j)] += g * wr[j];
    }
    out.b4[std::size_t(i)] += g;
  }
  // decoder hidden layer
  Vec dzenc(kAeLatent, 0.0);
  for (int i = 0; i < kAeHidden; ++i) {
    if (f.a3[std::size_t(i)] <= 0.0) continue;
    const double g = dr3[std::size_t(i)];
    double* wg = out.w3.data() + std::size_t(i) * kAeLatent;
    const double* wr = ae.w3.data() + std::size_t(i) * kAeLatent;
    for (int j = 0; j < kAeLatent; ++j) {
      wg[j] += g * f.zenc[std::size_t(j)];
      dzenc[std::size_t(j)] += g * wr[j];
    }
    out.b3[std::size_t(i)] += g;
  }
  // encoder projection
  Vec drv(kAeHidden, 0.0);
  for (int i = 0; i < kAeLatent; ++i) {
    const double g = dzenc[std::size_t(i)];
    double* wg = out.w2.data() + std::size_t(i) * kAeHidden;
    const double* wr = ae.w2.data() + std::size_t(i) * kAeHidden;
    for (int j = 0; j < kAeHidden; ++j) {
      wg[j] += g * f.rv[std::size_t(j)];
      drv[std::size_t(j)] += g * wr[j];
    }
    out.b2[std::size_t(i)] += g;
  }
  Vec dattn(kAeHidden, 0.0);
  for (int i = 0; i < kAeHidden; ++i)
    if (f.attn[std::size_t(i)] > 0.0) dattn[std::size_t(i)] = drv[std::size_t(i)];

  // attention block
  Vec dr1(kAeHidden, 0.0);
  if (!ae.tokenized) {
    // output == V, so the only flow is through W_V; dW_Q = dW_K = 0 exactly.
    for (int i = 0; i < kAeHidden; ++i) {
      const double g = dattn[std::size_t(i)];
      if (g == 0.0) continue;
      double* wg = out.wv.data() + std::size_t(i) * kAeHidden;
      const double* wr = ae.wv.data() + std::size_t(i) * kAeHidden;
      for (int j = 0; j < kAeHidden; ++j) {
        wg[j] += g * f.r1[std::size_t(j)];
        dr1[std::size_t(j)] += g * wr[j];
      }
    }
  } else {
    Vec dv(kAeHidden, 0.0), dq(kAeHidden, 0.0), dk(kAeHidden, 0.0);
    for (int i = 0; i < kAeHidden; ++i) {
      const double g = dattn[std::size_t(i)];
      const double* arow = f.smx.data() + std::size_t(i) * kAeHidden;
      // dV_j += g * A_ij; row-softmax Jacobian for the scores.
      double dot_da = 0.0;
      for (int j = 0; j < kAeHidden; ++j) {
        dv[std::size_t(j)] += g * arow[j];
        dot_da += g * f.v[std::size_t(j)] * arow[j];
      }
      for (int j = 0; j < kAeHidden; ++j) {
        const double ds = arow[j] * (g * f.v[std::size_t(j)] - dot_da);
        dq[std::size_t(i)] += ds * f.k[std::size_t(j)];
        dk[std::size_t(j)] += ds * f.q[std::size_t(i)];
      }
    }
    for (int i = 0; i < kAeHidden; ++i) {
      double* qg = out.wq.data() + std::size_t(i) * kAeHidden;
      double* kg = out.wk.data() + std::size_t(i) * kAeHidden;
      double* vg = out.wv.data() + std::size_t(i) * kAeHidden;
      const double* qr = ae.wq.data() + std::size_t(i) * kAeHidden;
      const double* kr = ae.wk.data() + std::size_t(i) * kAeHidden;
      const double* vr = ae.wv.data() + std::size_t(i) * kAeHidden;
      for (int j = 0; j < kAeHidden; ++j) {
        qg[j] += dq[std::size_t(i)] * f.r1[std::size_t(j)];
        kg[j] += dk[std::size_t(i)] * f.r1[std::size_t(j)];
        vg[j] += dv[std::size_t(i)] * f.r1[std::size_t(j)];
        dr1[std::size_t(j)] += dq[std::size_t(i)] * qr[j] +
                               dk[std::size_t(i)] * kr[j] +
                               dv[std::size_t(i)] * vr[j];
      }
    }
  }

  // input layer
  for (int i = 0; i < kAeHidden; ++i) {
    if (f.a1[std::size_t(i)] <= 0.0) continue;
    const double g = dr1[std::size_t(i)];
    if (g == 0.0) continue;
    double* wg = out.w1.data() + std::size_t(i) * kAeIn;
    for (int j = 0; j < kAeIn; ++j) wg[j] += g * z[std::size_t(j)];
    out.b1[std::size_t(i)] += g;
  }
  return loss;
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
     << " eps=" << eps << " seed=" << seed;
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
      theta[i] -= cfg.learning_rate * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg.eps);
    }
  }
};

}  // namespace

TrainReport train_autoencoder(AttentionAutoencoder& ae,
                              const std::vector<Vec>& embeddings,
                              const TrainConfig& cfg) {
  cfg.validate();
  ae.validate();
  const std::size_t n = embeddings.size();
  if (n == 0) throw ArgError("train_autoencoder: no training embeddings");
  for (const Vec& e : embeddings)
    if (e.size() != std::size_t(kAeIn))
      throw ArgError("train_autoencoder: embeddings must be 128-d");
  require_finite(embeddings, "train_autoencoder");

  TrainReport report;
  Adam ow1, ob1, owq, owk, owv, ow2, ob2, ow3, ob3, ow4, ob4;
  ow1.init(ae.w1.size());
  ob1.init(ae.b1.size());
  owq.init(ae.wq.size());
  owk.init(ae.wk.size());
  owv.init(ae.wv.size());
  ow2.init(ae.w2.size());
  ob2.init(ae.b2.size());
  ow3.init(ae.w3.size());
  ob3.init(ae.b3.size());
  ow4.init(ae.w4.size());
  ob4.init(ae.b4.size());
  AeGrads grads;
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
      for (std::size_t i = at; i < bend; ++i)
        batch_sum += ae_loss_accumulate(ae, embeddings[order[i]], grads);
      const double scale = 1.0 / static_cast<double>(bsz);
      for (Vec* g : {&grads.w1, &grads.b1, &grads.wq, &grads.wk, &grads.wv,
                     &grads.w2, &grads.b2, &grads.w3, &grads.b3, &grads.w4,
                     &grads.b4})
        for (double& x : *g) x *= scale;
      const double batch_loss = batch_sum * scale;
      if (!std::isfinite(batch_loss))
        throw NumericError("train_autoencoder: non-finite loss at epoch " +
                           std::to_string(epoch) + " batch " +
                           std::to_string(epoch_batches));
      report.batch_loss.push_back(batch_loss);

      ++t;
      const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
      const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
      ow1.step(ae.w1, grads.w1, cfg, bc1, bc2);
      ob1.step(ae.b1, grads.b1, cfg, bc1, bc2);
      owq.step(ae.wq, grads.wq, cfg, bc1, bc2);
      owk.step(ae.wk, grads.wk, cfg, bc1, bc2);
      owv.step(ae.wv, grads.wv, cfg, bc1, bc2);
      ow2.step(ae.w2, grads.w2, cfg, bc1, bc2);
      ob2.step(ae.b2, grads.b2, cfg, bc1, bc2);
      ow3.step(ae.w3, grads.w3, cfg, bc1, bc2);
      ob3.step(ae.b3, grads.b3, cfg, bc1, bc2);
      ow4.step(ae.w4, grads.w4, cfg, bc1, bc2);
      ob4.step(ae.b4, grads.b4, cfg, bc1, bc2);

      epoch_sum += batch_loss;
      ++epoch_batches;
    }
    ae.validate();
    report.epoch_loss.push_back(epoch_sum / static_cast<double>(epoch_batches));
  }
  return report;
}

// ---------------------------------------------------------------- thresholds

std::string ThresholdModel::to_json() const {
  nlohmann::json j{
      {"schema_version", 1}, {"kind", "threshold-model"},
      {"tau", tau},          {"percentile", percentile_used},
      {"count", count},      {"mean", mean},
      {"p50", p50},          {"p95", p95},
      {"p99", p99},
  };
  return j.dump(2);
}

ThresholdModel ThresholdModel::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("ThresholdModel: invalid JSON: ") + e.what());
  }
  ThresholdModel m;
  try {
    m.tau = j.at("tau").get<double>();
    m.percentile_used = j.at("percentile").get<double>();
    m.count = j.at("count").get<std::size_t>();
    m.mean = j.at("mean").get<double>();
    m.p50 = j.at("p50").get<double>();
    m.p95 = j.at("p95").get<double>();
    m.p99 = j.at("p99").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("ThresholdModel: missing field: ") + e.what());
  }
  return m;
}

ThresholdModel calibrate_threshold(const std::vector<double>& benign_errors,
                                   double pct) {
  if (benign_errors.size() < 20)
    throw DataError("calibrate_threshold: need at least 20 benign errors, got " +
                    std::to_string(benign_errors.size()));
  if (!(pct >= 0.0 && pct <= 100.0))
    throw ArgError("calibrate_threshold: percentile must lie in [0, 100]");
  ThresholdModel m;
  m.percentile_used = pct;
  m.count = benign_errors.size();
  m.tau = percentile(benign_errors, pct);
  double s = 0.0;
  for (double e : benign_errors) s += e;
  m.mean = s / static_cast<double>(benign_errors.size());
  m.p50 = percentile(benign_errors, 50.0);
  m.p95 = percentile(benign_errors, 95.0);
  m.p99 = percentile(benign_errors, 99.0);
  return m;
}

bool classify(double score, double tau) { return score > tau; }

std::vector<int> classify_batch(const std::vector<double>& scores, double tau) {
  std::vector<int> out(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i)
    out[i] = classify(scores[i], tau) ? 1 : 0;
  return out;
}

}  // namespace fdmlab::detect
