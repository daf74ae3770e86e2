#include "fdmlab/features.hpp"

#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "fdmlab/errors.hpp"
#include "json.hpp"

namespace fdmlab::features {

namespace {
using ojson = nlohmann::ordered_json;
}

void FeatureMatrix::validate() const {
  std::set<std::string> seen;
  for (const auto& n : names)
    if (!seen.insert(n).second)
      throw ArgError("FeatureMatrix: duplicate column name: " + n);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != names.size())
      throw ArgError("FeatureMatrix: row " + std::to_string(r) + " has " +
                     std::to_string(rows[r].size()) + " values, expected " +
                     std::to_string(names.size()));
    for (double v : rows[r])
      if (!std::isfinite(v))
        throw NumericError("FeatureMatrix: non-finite entry in row " +
                           std::to_string(r));
  }
}

FeatureMatrix FeatureMatrix::select(const std::vector<bool>& mask) const {
  if (mask.size() != names.size())
    throw ArgError("select: mask length does not match column count");
  FeatureMatrix out;
  for (std::size_t c = 0; c < names.size(); ++c)
    if (mask[c]) out.names.push_back(names[c]);
  out.rows.reserve(rows.size());
  for (const auto& row : rows) {
    std::vector<double> r;
    r.reserve(out.names.size());
    for (std::size_t c = 0; c < mask.size(); ++c)
      if (mask[c]) r.push_back(row[c]);
    out.rows.push_back(std::move(r));
  }
  return out;
}

FeatureMatrix FeatureMatrix::from_records(
    const std::vector<telemetry::LogRecord>& recs) {
  FeatureMatrix m;
  m.names = telemetry::channel_names();
  m.rows.reserve(recs.size());
  for (const auto& r : recs) m.rows.push_back(telemetry::record_values(r));
  return m;
}

FeatureMatrix FeatureMatrix::from_csv(const std::string& csv) {
  FeatureMatrix m;
  std::istringstream in(csv);
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string cell;
    if (!have_header) {
      while (std::getline(ls, cell, ',')) m.names.push_back(cell);
      if (m.names.empty()) throw DataError("from_csv: empty header row");
      have_header = true;
      continue;
    }
    std::vector<double> row;
    while (std::getline(ls, cell, ',')) {
      try {
        std::size_t pos = 0;
        row.push_back(std::stod(cell, &pos));
        if (pos != cell.size())
          throw DataError("from_csv: trailing junk in cell '" + cell + "'");
      } catch (const std::invalid_argument&) {
        throw DataError("from_csv: non-numeric cell '" + cell + "'");
      } catch (const std::out_of_range&) {
        throw DataError("from_csv: out-of-range cell '" + cell + "'");
      }
    }
    if (row.size() != m.names.size())
      throw DataError("from_csv: row width " + std::to_string(row.size()) +
                      " does not match header width " +
                      std::to_string(m.names.size()));
    m.rows.push_back(std::move(row));
  }
  if (!have_header) throw DataError("from_csv: no header row");
  m.validate();
  return m;
}

FeatureMatrix FeatureMatrix::from_jsonl(const std::string& jsonl) {
  FeatureMatrix m;
  std::istringstream in(jsonl);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ojson j;
    try {
      j = ojson::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(std::string("from_jsonl: invalid JSON line: ") +
                      e.what());
    }
    if (j.contains("channels")) continue;  // manifest line
    if (m.names.empty())
      for (auto it = j.begin(); it != j.end(); ++it)
        m.names.push_back(it.key());
    std::vector<double> row;
    row.reserve(m.names.size());
    for (const auto& n : m.names) {
      if (!j.contains(n) || !j[n].is_number())
        throw DataError("from_jsonl: record missing numeric field '" + n +
                        "'");
      row.push_back(j[n].get<double>());
    }
    if (j.size() != m.names.size())
      throw DataError("from_jsonl: record fields do not match first record");
    m.rows.push_back(std::move(row));
  }
  m.validate();
  return m;
}

std::vector<double> column_means(const FeatureMatrix& m) {
  const std::size_t n = m.n_rows(), d = m.n_cols();
  std::vector<double> mu(d, 0.0);
  if (n == 0) return mu;
  for (const auto& row : m.rows)
    for (std::size_t c = 0; c < d; ++c) mu[c] += row[c];
  for (auto& v : mu) v /= static_cast<double>(n);
  return mu;
}

std::vector<double> column_variances(const FeatureMatrix& m) {
  const std::size_t n = m.n_rows(), d = m.n_cols();
  std::vector<double> var(d, 0.0);
  if (n == 0) return var;
  const auto mu = column_means(m);
  for (const auto& row : m.rows)
    for (std::size_t c = 0; c < d; ++c) {
      const double dv = row[c] - mu[c];
      var[c] += dv * dv;
    }
  for (auto& v : var) v /= static_cast<double>(n);  // population variance
  return var;
}

std::vector<bool> variance_filter(const FeatureMatrix& m, double threshold) {
  m.validate();
  if (!std::isfinite(threshold) || threshold < 0)
    throw ArgError("variance_filter: threshold must be finite and >= 0");
  if (m.n_rows() < 2)
    throw DataError("variance_filter: need at least 2 rows to estimate "
                    "variance");
  const auto var = column_variances(m);
  std::vector<bool> mask(m.n_cols());
  for (std::size_t c = 0; c < m.n_cols(); ++c) mask[c] = var[c] >= threshold;
  return mask;
}

std::vector<bool> correlation_prune(const FeatureMatrix& m, double threshold) {
  m.validate();
  if (!std::isfinite(threshold) || threshold <= 0)
    throw ArgError("correlation_prune: threshold must be finite and > 0");
  if (m.n_rows() < 2)
    throw DataError("correlation_prune: need at least 2 rows");
  const std::size_t n = m.n_rows(), d = m.n_cols();
  const auto mu = column_means(m);
  const auto var = column_variances(m);
  for (std::size_t c = 0; c < d; ++c)
    if (var[c] <= 0.0)
      throw ArgError("correlation_prune: column '" + m.names[c] +
                     "' has zero variance; variance-filter first");

  // Covariance against each already-kept column, greedy in schema order so
  // the earlier (higher-priority) column of a correlated pair survives.
  std::vector<bool> mask(d, false);
  std::vector<std::size_t> kept;
  for (std::size_t c = 0; c < d; ++c) {
    bool ok = true;
    for (std::size_t k : kept) {
      double cov = 0.0;
      for (std::size_t r = 0; r < n; ++r)
        cov += (m.rows[r][c] - mu[c]) * (m.rows[r][k] - mu[k]);
      cov /= static_cast<double>(n);
      const double rho = cov / std::sqrt(var[c] * var[k]);
      if (std::abs(rho) > threshold) {
        ok = false;
        break;
      }
    }
    mask[c] = ok;
    if (ok) kept.push_back(c);
  }
  return mask;
}

SentenceRecord serialize_record(const std::vector<double>& row,
                                const std::vector<std::string>& schema,
                                int precision) {
  if (row.size() != schema.size())
    throw ArgError("serialize_record: row length " +
                   std::to_string(row.size()) + " != schema length " +
                   std::to_string(schema.size()));
  if (precision < 0 || precision > 17)
    throw ArgError("serialize_record: precision out of range");
  SentenceRecord s;
  char buf[64];
  for (std::size_t c = 0; c < schema.size(); ++c) {
    if (!std::isfinite(row[c]))
      throw NumericError("serialize_record: non-finite value for '" +
                         schema[c] + "'");
    if (c) s.text += " | ";
    s.text += schema[c];
    s.text += '=';
    std::snprintf(buf, sizeof buf, "%.*f", precision, row[c]);
    s.text += buf;
  }
  return s;
}

std::vector<SentenceRecord> serialize_matrix(const FeatureMatrix& m,
                                             int precision, int label) {
  std::vector<SentenceRecord> out;
  out.reserve(m.n_rows());
  for (std::size_t r = 0; r < m.n_rows(); ++r) {
    SentenceRecord s = serialize_record(m.rows[r], m.names, precision);
    s.source_row = r;
    s.label = label;
    out.push_back(std::move(s));
  }
  return out;
}

std::string FeatureSelection::manifest_json() const {
  ojson j;
  j["schema_version"] = 1;
  j["kind"] = "feature-selection";
  j["variance_threshold"] = variance_threshold;
  j["correlation_threshold"] = correlation_threshold;
  j["input_schema"] = input_schema;
  j["surviving"] = surviving;
  return j.dump(2);
}

FeatureSelection fit_selection(const FeatureMatrix& benign_train,
                               double variance_threshold,
                               double correlation_threshold) {
  FeatureSelection sel;
  sel.variance_threshold = variance_threshold;
  sel.correlation_threshold = correlation_threshold;
  sel.input_schema = benign_train.names;

  const auto vmask = variance_filter(benign_train, variance_threshold);
  FeatureMatrix reduced = benign_train.select(vmask);
  const auto cmask = correlation_prune(reduced, correlation_threshold);

  sel.mask.assign(benign_train.n_cols(), false);
  std::size_t rc = 0;
  for (std::size_t c = 0; c < benign_train.n_cols(); ++c) {
    if (!vmask[c]) continue;
    if (cmask[rc]) {
      sel.mask[c] = true;
      sel.surviving.push_back(benign_train.names[c]);
    }
    ++rc;
  }
  return sel;
}

FeatureMatrix apply_selection(const FeatureMatrix& m,
                              const FeatureSelection& sel) {
  if (m.names != sel.input_schema)
    throw ArgError("apply_selection: matrix schema does not match the "
                   "schema the selection was fitted on");
  return m.select(sel.mask);
}

std::string sentences_text(const std::vector<SentenceRecord>& sentences) {
  std::string out;
  for (const auto& s : sentences) {
    out += s.text;
    out += '\n';
  }
  return out;
}

std::string labels_text(const std::vector<SentenceRecord>& sentences) {
  std::string out;
  for (const auto& s : sentences) {
    out += std::to_string(s.label);
    out += '\n';
  }
  return out;
}

}  // namespace fdmlab::features
