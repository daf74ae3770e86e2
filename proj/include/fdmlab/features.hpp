#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fdmlab/telemetry.hpp"

namespace fdmlab::features {

struct FeatureMatrix {
  std::vector<std::string> names;         // unique, schema order
  std::vector<std::vector<double>> rows;  // N rows × d columns

  std::size_t n_rows() const { return rows.size(); }
  std::size_t n_cols() const { return names.size(); }
  void validate() const;  // rectangular, unique names, finite entries
  FeatureMatrix select(const std::vector<bool>& mask) const;

  static FeatureMatrix from_records(
      const std::vector<telemetry::LogRecord>& recs);
  static FeatureMatrix from_csv(const std::string& csv);
  static FeatureMatrix from_jsonl(const std::string& jsonl);
};

// Population statistics, one entry per column.
std::vector<double> column_means(const FeatureMatrix& m);
std::vector<double> column_variances(const FeatureMatrix& m);

// Keep columns whose population variance is >= threshold.  N < 2 rows is an
// insufficient-data error.
std::vector<bool> variance_filter(const FeatureMatrix& m,
                                  double threshold = 0.01);

// Greedy scan in schema order: drop any column whose |Pearson rho| with an
// already-kept column exceeds the threshold.  Requires variance-filtered
// input (every column with nonzero variance).
std::vector<bool> correlation_prune(const FeatureMatrix& m,
                                    double threshold = 0.95);

struct SentenceRecord {
  std::string text;            // "key=value | key=value | ..."
  std::size_t source_row = 0;
  int label = 0;  // side-channel ground truth; never fed to training
};

SentenceRecord serialize_record(const std::vector<double>& row,
                                const std::vector<std::string>& schema,
                                int precision = 4);
std::vector<SentenceRecord> serialize_matrix(const FeatureMatrix& m,
                                             int precision = 4,
                                             int label = 0);

// Fitted on benign training data only; applied unchanged everywhere else.
struct FeatureSelection {
  std::vector<std::string> input_schema;
  std::vector<bool> mask;  // over input_schema
  std::vector<std::string> surviving;
  double variance_threshold = 0.01;
  double correlation_threshold = 0.95;

  std::string manifest_json() const;
};

FeatureSelection fit_selection(const FeatureMatrix& benign_train,
                               double variance_threshold = 0.01,
                               double correlation_threshold = 0.95);
FeatureMatrix apply_selection(const FeatureMatrix& m,
                              const FeatureSelection& sel);

std::string sentences_text(const std::vector<SentenceRecord>& sentences);
std::string labels_text(const std::vector<SentenceRecord>& sentences);

}  // namespace fdmlab::features
