#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace fdmlab::embed {

inline constexpr int kEncDim = 384;
inline constexpr int kHiddenDim = 256;
inline constexpr int kProjDim = 128;

using Vec = std::vector<double>;

// Frozen sentence encoders: no trainable state, deterministic per input.
class SentenceEncoder {
 public:
  virtual ~SentenceEncoder() = default;
  virtual Vec encode(const std::string& sentence) const = 0;  // 384-d
};

// Dependency-free stand-in for a pretrained text encoder: each token (split
// on " | " and "=") hashes to 8 signed positions of a 384-d vector; the sum
// is L2-normalized.
class HashedTokenEncoder final : public SentenceEncoder {
 public:
  explicit HashedTokenEncoder(std::uint64_t seed = 0x66646d6c61623834ULL);
  Vec encode(const std::string& sentence) const override;

 private:
  std::uint64_t seed_;
};

// Precomputed 384-d embeddings keyed by sentence digest, e.g. exported from
// an actual pretrained model.
class ExternalVectorSource final : public SentenceEncoder {
 public:
  static ExternalVectorSource from_jsonl(const std::string& text);
  Vec encode(const std::string& sentence) const override;
  std::size_t size() const { return by_digest_.size(); }

 private:
  std::unordered_map<std::string, Vec> by_digest_;
};

struct ProjectionHead {
  Vec w1;  // kHiddenDim x kEncDim, row-major
  Vec b1;  // kHiddenDim
  Vec w2;  // kProjDim x kHiddenDim, row-major
  Vec b2;  // kProjDim

  static ProjectionHead init(std::uint64_t seed);
  void validate() const;  // shapes and finiteness
  std::string serialize(const std::string& config_digest = "") const;
  static ProjectionHead deserialize(const std::string& bytes);
};

// z = W2 * max(0, W1 h + b1) + b2
Vec project(const ProjectionHead& head, const Vec& h);

struct CorruptionPolicy {
  double key_rate = 0.0;     // per-key synonym-rename probability
  double value_rate = 0.1;   // per-value jitter probability
  double value_jitter = 0.05;
  int min_changes = 1;       // forced change when the draws touch nothing
};

std::string corrupt(const std::string& sentence, std::uint64_t seed,
                    const CorruptionPolicy& policy = {});

// 1 - cos(z, z'). Both-zero input is an undefined-cosine error.
double contrastive_loss(const Vec& z, const Vec& zp);

struct HeadGrads {
  Vec w1, b1, w2, b2;
  void reset();
};

// Loss for one (clean, corrupted) pair and its analytic gradients,
// accumulated into `out`. The same routine drives training, so the finite
// difference checks cover the production path. When `z_out` is non-null it
// receives the clean branch's projection (reused by the collapse monitor).
double pair_loss_accumulate(const ProjectionHead& head, const Vec& h,
                            const Vec& hp, HeadGrads& out, Vec* z_out = nullptr);

struct TrainConfig {
  double learning_rate = 1e-4;
  int batch_size = 64;
  int epochs = 25;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 0;
  CorruptionPolicy corruption;

  void validate() const;
  std::string echo() const;
};

struct TrainReport {
  std::vector<double> epoch_loss;      // mean over the epoch's batches
  std::vector<double> batch_loss;      // every batch, in order
  std::vector<double> batch_variance;  // mean per-dim embedding variance
  int collapse_warnings = 0;
  std::vector<std::string> warnings;
};

TrainReport train_projection(ProjectionHead& head,
                             const std::vector<std::string>& sentences,
                             const SentenceEncoder& encoder,
                             const TrainConfig& cfg);

}  // namespace fdmlab::embed
