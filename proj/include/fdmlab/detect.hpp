#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace fdmlab::detect {

using Vec = std::vector<double>;

inline constexpr int kAeIn = 128;      // embedding dimension
inline constexpr int kAeHidden = 64;   // attention width
inline constexpr int kAeLatent = 8;

// NumPy-style linear interpolation between order statistics:
// rank = (N-1) * p / 100, value lerped between the two flanking samples.
// The convention matters for threshold reproducibility, so it lives here and
// everything downstream calls it.
double percentile(std::vector<double> values, double p);

// ---------------------------------------------------------------- clustering

struct CentroidModel {
  std::size_t dim = 0;
  std::vector<Vec> centroids;          // k x dim
  std::uint64_t seed = 0;
  double inertia = 0.0;                // final sum of squared distances
  int iterations = 0;                  // Lloyd iterations run
  std::vector<double> inertia_history; // per-iteration, non-increasing

  std::size_t k() const { return centroids.size(); }
  void validate() const;
  std::string serialize() const;
  static CentroidModel deserialize(const std::string& bytes);
};

// Seeded k-means++ initialization followed by Lloyd iterations until the
// largest centroid movement drops below 1e-6 or 300 iterations pass. An
// empty cluster keeps its previous centroid.
CentroidModel fit_kmeans(const std::vector<Vec>& embeddings, std::size_t k,
                         std::uint64_t seed);

// min_c ||z - c||_2
double cluster_score(const CentroidModel& model, const Vec& z);
std::size_t nearest_centroid(const CentroidModel& model, const Vec& z);

// ----------------------------------------------------------------------- PCA

struct PcaResult {
  Vec mean;                         // d
  std::vector<Vec> components;      // dims x d, orthonormal rows
  std::vector<double> explained;    // variance fractions, non-increasing
  std::vector<Vec> coords;          // N x dims
};

// Mean-centered covariance eigendecomposition (cyclic Jacobi); dims must be
// 2 or 3. Sign convention: each component's largest-magnitude entry is made
// positive (first such index on ties).
PcaResult pca_project(const std::vector<Vec>& embeddings, int dims);

// --------------------------------------------------------------- autoencoder

struct AttentionAutoencoder {
  Vec w1, b1;      // 64x128, 64
  Vec wq, wk, wv;  // 64x64 each
  Vec w2, b2;      // 8x64, 8
  Vec w3, b3;      // 64x8, 64
  Vec w4, b4;      // 128x64, 128
  // Opt-in ablation: treat the 64-vector as 64 one-dimensional tokens so the
  // attention weights form a full 64x64 softmax mixing matrix (d_k = 1). The
  // default follows the written equations, where the single scalar logit
  // makes softmax(alpha) = 1 and the attention output collapse to W_V h.
  bool tokenized = false;

  static AttentionAutoencoder init(std::uint64_t seed);
  void validate() const;
  std::string serialize(const std::string& config_digest = "") const;
  static AttentionAutoencoder deserialize(const std::string& bytes);
};

// Single-head self-attention on one 64-vector, degenerate or tokenized per
// the model flag.
Vec self_attention(const AttentionAutoencoder& ae, const Vec& h);

// ReLU layer -> self-attention -> 8-d latent -> mirrored decoder.
Vec ae_forward(const AttentionAutoencoder& ae, const Vec& z);

// ||z_hat - z||^2 / 128
double reconstruction_error(const AttentionAutoencoder& ae, const Vec& z);

struct TrainConfig {
  double learning_rate = 1e-4;  // reuses the projection trainer's discipline
  int batch_size = 64;
  int epochs = 25;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 0;

  void validate() const;
  std::string echo() const;
};

struct TrainReport {
  std::vector<double> epoch_loss;
  std::vector<double> batch_loss;
  std::vector<std::string> warnings;
};

TrainReport train_autoencoder(AttentionAutoencoder& ae,
                              const std::vector<Vec>& embeddings,
                              const TrainConfig& cfg);

// Gradients of the per-sample reconstruction loss, accumulated; exposed so
// the finite-difference checks exercise the exact code training uses.
struct AeGrads {
  Vec w1, b1, wq, wk, wv, w2, b2, w3, b3, w4, b4;
  void reset();
};
double ae_loss_accumulate(const AttentionAutoencoder& ae, const Vec& z,
                          AeGrads& out);

// ---------------------------------------------------------------- thresholds

struct ThresholdModel {
  double tau = 0.0;
  double percentile_used = 95.0;
  std::size_t count = 0;
  double mean = 0.0;
  double p50 = 0.0;
  double p95 = 0.0;
  double p99 = 0.0;

  std::string to_json() const;
  static ThresholdModel from_json(const std::string& text);
};

// tau = linear-interpolated percentile of the benign calibration errors.
// The paper-style operating point is whatever p95 of the calibration set
// yields for the encoder in use; it is never a hard-coded constant.
ThresholdModel calibrate_threshold(const std::vector<double>& benign_errors,
                                   double pct = 95.0);

// attack iff score > tau, strictly.
bool classify(double score, double tau);
std::vector<int> classify_batch(const std::vector<double>& scores, double tau);

}  // namespace fdmlab::detect
