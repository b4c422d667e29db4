#include "dct/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

namespace dct {

void Dataset::validate() const {
  const std::size_t n = x.rows();
  if (y.size() != n || w.size() != n) {
    throw DataError("dataset: y and w must have one entry per row of x");
  }
  if (tau_true && tau_true->size() != n) {
    throw DataError("dataset: tau_true must have one entry per row of x");
  }
  if (feature_names.size() != x.cols()) {
    throw DataError("dataset: feature_names must have one entry per column of x");
  }
  std::set<std::string> seen;
  for (const auto& name : feature_names) {
    if (!seen.insert(name).second) throw DataError("dataset: duplicate feature name '" + name + "'");
  }
  for (double v : x.data()) {
    if (!std::isfinite(v)) throw DataError("dataset: covariates contain a non-finite value");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(y[i])) throw DataError("dataset: outcome is non-finite at row " + std::to_string(i));
    if (w[i] != 0 && w[i] != 1) throw DataError("dataset: treatment must be 0 or 1 (row " + std::to_string(i) + ")");
    if (tau_true && !std::isfinite((*tau_true)[i])) {
      throw DataError("dataset: tau_true is non-finite at row " + std::to_string(i));
    }
  }
}

void Dataset::require_both_arms() const {
  const std::size_t treated = treated_count();
  if (treated == 0 || treated == rows()) {
    throw DataError("dataset: both treatment arms must be non-empty (treated " +
                    std::to_string(treated) + " of " + std::to_string(rows()) + ")");
  }
}

std::vector<double> Dataset::w_as_double() const { return {w.begin(), w.end()}; }

std::size_t Dataset::treated_count() const {
  return static_cast<std::size_t>(std::count(w.begin(), w.end(), 1));
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Dataset out;
  out.x = x.select_rows(rows);
  out.feature_names = feature_names;
  out.y.reserve(rows.size());
  out.w.reserve(rows.size());
  for (std::size_t r : rows) {
    out.y.push_back(y.at(r));
    out.w.push_back(w.at(r));
  }
  if (tau_true) {
    std::vector<double> t;
    t.reserve(rows.size());
    for (std::size_t r : rows) t.push_back(tau_true->at(r));
    out.tau_true = std::move(t);
  }
  return out;
}

std::uint64_t Dataset::fingerprint() const {
  const double shape[2] = {static_cast<double>(x.rows()), static_cast<double>(x.cols())};
  return hash_doubles(x.data(), hash_doubles(shape));
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::vector<std::vector<std::string>> read_records(std::istream& in) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  char c;
  auto end_field = [&] {
    record.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    if (!(record.size() == 1 && record[0].empty())) records.push_back(std::move(record));
    record.clear();
  };
  while (in.get(c)) {
    if (in_quotes) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field.push_back('"');
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        if (!field_started) in_quotes = true;
        else field.push_back(c);
        field_started = true;
        break;
      case ',':
        end_field();
        break;
      case '\r':
        break;
      case '\n':
        end_record();
        break;
      default:
        field.push_back(c);
        field_started = true;
    }
  }
  if (in_quotes) throw DataError("csv: unterminated quoted field");
  if (field_started || !field.empty() || !record.empty()) end_record();
  return records;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

bool is_missing(const std::string& cell) {
  static const std::set<std::string> tokens = {"", "NA", "N/A", "NaN", "nan", "NULL", "null"};
  return tokens.contains(cell);
}

std::optional<double> parse_double(const std::string& s) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || !std::isfinite(v)) return std::nullopt;
  return v;
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path, const ColumnMapping& mapping) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("csv: cannot open '" + path.string() + "'");
  auto records = read_records(in);
  if (records.empty()) throw DataError("csv: '" + path.string() + "' has no header row");

  std::vector<std::string> header;
  for (const auto& h : records.front()) header.push_back(trim(h));
  std::map<std::string, std::size_t> column_of;
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (!column_of.emplace(header[j], j).second) {
      throw DataError("csv: duplicate column '" + header[j] + "'");
    }
  }
  const std::size_t n = records.size() - 1;
  for (std::size_t i = 1; i < records.size(); ++i) {
    if (records[i].size() != header.size()) {
      throw DataError("csv: row " + std::to_string(i) + " has " + std::to_string(records[i].size()) +
                      " fields, header has " + std::to_string(header.size()));
    }
  }

  auto require = [&](const std::string& name) {
    auto it = column_of.find(name);
    if (it == column_of.end()) throw DataError("csv: missing mapped column '" + name + "'");
    return it->second;
  };
  auto cell = [&](std::size_t row, std::size_t col) -> std::string {
    std::string v = trim(records[row + 1][col]);
    if (is_missing(v)) {
      throw DataError("csv: missing value at row " + std::to_string(row + 1) + ", column '" +
                      header[col] + "'");
    }
    return v;
  };
  auto numeric_column = [&](std::size_t col) {
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::string v = cell(i, col);
      auto parsed = parse_double(v);
      if (!parsed) {
        throw DataError("csv: non-numeric value '" + v + "' at row " + std::to_string(i + 1) +
                        ", column '" + header[col] + "'");
      }
      out[i] = *parsed;
    }
    return out;
  };

  Dataset d;
  std::set<std::string> reserved;
  const std::size_t y_col = require(mapping.outcome);
  const std::size_t w_col = require(mapping.treatment);
  reserved.insert(mapping.outcome);
  reserved.insert(mapping.treatment);
  d.y = numeric_column(y_col);

  d.w.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::string v = cell(i, w_col);
    auto parsed = parse_double(v);
    if (!parsed || (*parsed != 0.0 && *parsed != 1.0)) {
      throw DataError("csv: treatment column '" + mapping.treatment + "' has value '" + v +
                      "' at row " + std::to_string(i + 1) + "; expected 0 or 1");
    }
    d.w[i] = static_cast<int>(*parsed);
  }

  if (mapping.tau) {
    d.tau_true = numeric_column(require(*mapping.tau));
    reserved.insert(*mapping.tau);
  } else if (mapping.potential_outcomes) {
    const auto mu1 = numeric_column(require(mapping.potential_outcomes->first));
    const auto mu0 = numeric_column(require(mapping.potential_outcomes->second));
    std::vector<double> tau(n);
    for (std::size_t i = 0; i < n; ++i) tau[i] = mu1[i] - mu0[i];
    d.tau_true = std::move(tau);
    reserved.insert(mapping.potential_outcomes->first);
    reserved.insert(mapping.potential_outcomes->second);
  } else if (column_of.contains(kTauColumn) &&
             std::find(mapping.drop.begin(), mapping.drop.end(), kTauColumn) == mapping.drop.end() &&
             std::find(mapping.covariates.begin(), mapping.covariates.end(), kTauColumn) == mapping.covariates.end()) {
    // Files written by write_csv carry their truth column; never treat it as a covariate.
    d.tau_true = numeric_column(column_of.at(kTauColumn));
    reserved.insert(kTauColumn);
  }
  for (const auto& name : mapping.drop) reserved.insert(name);

  std::vector<std::string> covariates = mapping.covariates;
  if (covariates.empty()) {
    for (const auto& name : header) {
      if (!reserved.contains(name)) covariates.push_back(name);
    }
    std::sort(covariates.begin(), covariates.end());
  }

  std::vector<std::vector<double>> columns;
  for (const auto& name : covariates) {
    const std::size_t col = require(name);
    std::vector<std::string> cells(n);
    bool numeric = true;
    for (std::size_t i = 0; i < n; ++i) {
      cells[i] = cell(i, col);
      if (numeric && !parse_double(cells[i])) numeric = false;
    }
    if (numeric) {
      columns.push_back(numeric_column(col));
      d.feature_names.push_back(name);
      continue;
    }
    // One dummy per level, levels in sorted order.
    std::set<std::string> levels(cells.begin(), cells.end());
    for (const auto& level : levels) {
      std::vector<double> dummy(n);
      for (std::size_t i = 0; i < n; ++i) dummy[i] = cells[i] == level ? 1.0 : 0.0;
      columns.push_back(std::move(dummy));
      d.feature_names.push_back(name + "_" + level);
    }
  }

  d.x = Matrix(n, 0).append_columns(columns);
  d.validate();
  return d;
}

namespace {
std::string quote_if_needed(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::string format17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
}  // namespace

void write_csv(const Dataset& d, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("csv: cannot write '" + path.string() + "'");
  out << "y,w";
  if (d.tau_true) out << ',' << kTauColumn;
  for (const auto& name : d.feature_names) out << ',' << quote_if_needed(name);
  out << '\n';
  for (std::size_t i = 0; i < d.rows(); ++i) {
    out << format17(d.y[i]) << ',' << d.w[i];
    if (d.tau_true) out << ',' << format17((*d.tau_true)[i]);
    for (std::size_t j = 0; j < d.cols(); ++j) out << ',' << format17(d.x(i, j));
    out << '\n';
  }
  if (!out) throw DataError("csv: write failed for '" + path.string() + "'");
}

// ---------------------------------------------------------------------------
// Splitting and noise injection

SampleSplit split_honest(std::size_t n, SplitFractions fractions, std::uint64_t seed,
                         std::size_t min_size) {
  const double total = fractions.fit + fractions.est + fractions.test;
  if (!(fractions.fit > 0.0) || !(fractions.est > 0.0) || fractions.test < 0.0 ||
      std::abs(total - 1.0) > 1e-9) {
    throw std::invalid_argument("split_honest: fractions must be positive (test may be 0) and sum to 1");
  }
  const auto n_fit = static_cast<std::size_t>(std::llround(fractions.fit * static_cast<double>(n)));
  std::size_t n_est = fractions.test == 0.0
                          ? n - std::min(n, n_fit)
                          : static_cast<std::size_t>(std::llround(fractions.est * static_cast<double>(n)));
  if (n_fit + n_est > n) n_est = n - n_fit;
  if (n_fit < min_size || n_est < min_size) {
    throw std::invalid_argument("split_honest: fit/est sizes " + std::to_string(n_fit) + "/" +
                                std::to_string(n_est) + " below minimum " + std::to_string(min_size));
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  SampleSplit split;
  split.seed = seed;
  split.fit_indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_fit));
  split.est_indices.assign(order.begin() + static_cast<std::ptrdiff_t>(n_fit),
                           order.begin() + static_cast<std::ptrdiff_t>(n_fit + n_est));
  split.test_indices.assign(order.begin() + static_cast<std::ptrdiff_t>(n_fit + n_est), order.end());
  return split;
}

Dataset inject_noise(const Dataset& d, const NoiseSpec& spec) {
  if (d.rows() == 0 || d.cols() == 0) throw std::invalid_argument("inject_noise: empty dataset");
  if (!(spec.rho > 0.0 && spec.rho < 1.0)) throw std::invalid_argument("inject_noise: rho must lie in (0, 1)");
  if (spec.n_noise == 0 && spec.n_corr == 0) {
    throw std::invalid_argument("inject_noise: n_noise and n_corr are both zero");
  }
  if (spec.n_corr > spec.max_corr_multiple * d.cols()) {
    throw std::invalid_argument("inject_noise: n_corr exceeds the configured multiple of p");
  }

  const std::size_t n = d.rows();
  Rng rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<double>> extra;
  Dataset out = d;

  for (std::size_t k = 0; k < spec.n_noise; ++k) {
    std::vector<double> col(n);
    for (auto& v : col) v = normal(rng);
    extra.push_back(std::move(col));
    out.feature_names.push_back("noise_" + std::to_string(k + 1));
  }
  const double tail = std::sqrt(1.0 - spec.rho * spec.rho);
  for (std::size_t k = 0; k < spec.n_corr; ++k) {
    const std::size_t source = uniform_index(rng, d.cols());
    const auto z = d.x.column(source);
    const double m = mean(z);
    const double sd = std::sqrt(variance(z));
    std::vector<double> col(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double standardized = sd > 0.0 ? (z[i] - m) / sd : 0.0;
      col[i] = spec.rho * standardized + tail * normal(rng);
    }
    extra.push_back(std::move(col));
    out.feature_names.push_back("corr_" + std::to_string(k + 1) + "_of_" + d.feature_names[source]);
  }
  out.x = d.x.append_columns(extra);
  out.validate();
  return out;
}

}  // namespace dct
