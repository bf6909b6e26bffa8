// Copyright 2026 The frappe-kit Authors
// SPDX-License-Identifier: Apache-2.0

#include "frappe/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "frappe/error.hpp"
#include "frappe/rng.hpp"

namespace frappe {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  std::string out(s.substr(b, e - b));
  if (out.size() >= 2 && out.front() == '"' && out.back() == '"') out = out.substr(1, out.size() - 2);
  return out;
}

std::vector<std::string> split_fields(std::string_view line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == ',') {
      fields.push_back(trim(line.substr(start, i - start)));
      start = i + 1;
    }
  }
  return fields;
}

std::optional<double> parse_number(const std::string& cell) {
  if (cell.empty()) return std::nullopt;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  if (*first == '+') ++first;
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || !std::isfinite(value)) return std::nullopt;
  return value;
}

std::string format_number(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

bool is_nonnegative_integer(double v) { return v >= 0.0 && std::floor(v) == v; }

}  // namespace

const char* to_string(TaskKind kind) noexcept {
  return kind == TaskKind::binary_classification ? "binary_classification" : "regression";
}

const char* to_string(SensitiveKind kind) noexcept {
  return kind == SensitiveKind::categorical ? "categorical" : "continuous";
}

TaskKind parse_task_kind(const std::string& name) {
  if (name == "binary_classification") return TaskKind::binary_classification;
  if (name == "regression") return TaskKind::regression;
  fail(ErrorKind::Config, "unknown task kind '" + name + "' (binary_classification | regression)");
}

SensitiveKind parse_sensitive_kind(const std::string& name) {
  if (name == "categorical") return SensitiveKind::categorical;
  if (name == "continuous") return SensitiveKind::continuous;
  fail(ErrorKind::Config, "unknown sensitive kind '" + name + "' (categorical | continuous)");
}

std::vector<std::size_t> DatasetTable::annotated_rows() const {
  std::vector<std::size_t> rows_out;
  for (std::size_t i = 0; i < sensitive.size(); ++i)
    if (sensitive[i]) rows_out.push_back(i);
  return rows_out;
}

std::size_t DatasetTable::annotated_count() const {
  return static_cast<std::size_t>(
      std::count_if(sensitive.begin(), sensitive.end(), [](const auto& v) { return v.has_value(); }));
}

DatasetTable DatasetTable::take(std::span<const std::size_t> idx) const {
  DatasetTable out;
  const auto n = static_cast<Eigen::Index>(idx.size());
  out.features.resize(n, features.cols());
  out.label.resize(n);
  out.sensitive.resize(idx.size());
  if (base_score) out.base_score = Eigen::VectorXd(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto src = static_cast<Eigen::Index>(idx[static_cast<std::size_t>(r)]);
    out.features.row(r) = features.row(src);
    out.label(r) = label(src);
    out.sensitive[static_cast<std::size_t>(r)] = sensitive[static_cast<std::size_t>(src)];
    if (base_score) (*out.base_score)(r) = (*base_score)(src);
  }
  out.task_kind = task_kind;
  out.sensitive_kind = sensitive_kind;
  out.feature_names = feature_names;
  out.label_name = label_name;
  out.sensitive_name = sensitive_name;
  return out;
}

void DatasetTable::validate() const {
  const std::size_t n = rows();
  if (n == 0) fail(ErrorKind::EmptyDataset, "dataset has no rows");
  if (cols() == 0) fail(ErrorKind::Schema, "dataset has no feature columns");
  if (static_cast<std::size_t>(label.size()) != n || sensitive.size() != n ||
      (base_score && static_cast<std::size_t>(base_score->size()) != n))
    fail(ErrorKind::Schema, "dataset columns have different lengths");
  if (feature_names.size() != cols()) fail(ErrorKind::Schema, "feature_names length != d");
  if (task_kind == TaskKind::binary_classification) {
    for (std::size_t i = 0; i < n; ++i) {
      const double y = label(static_cast<Eigen::Index>(i));
      if (y != 0.0 && y != 1.0)
        fail(ErrorKind::Parse, "row " + std::to_string(i + 1) + ": binary label must be 0 or 1");
    }
  }
  if (sensitive_kind == SensitiveKind::categorical) {
    for (std::size_t i = 0; i < n; ++i)
      if (sensitive[i] && !is_nonnegative_integer(*sensitive[i]))
        fail(ErrorKind::Parse,
             "row " + std::to_string(i + 1) + ": categorical sensitive value must be a nonnegative integer");
  }
}

CsvSchema CsvSchema::for_table(const DatasetTable& table) {
  CsvSchema schema;
  schema.features = table.feature_names;
  schema.label = table.label_name;
  schema.sensitive = table.sensitive_name;
  if (table.base_score) schema.base_score = "base_score";
  schema.task_kind = table.task_kind;
  schema.sensitive_kind = table.sensitive_kind;
  return schema;
}

DatasetTable parse_csv(const std::string& text, const CsvSchema& schema,
                       const std::string& source_name) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::EmptyDataset, source_name + ": missing header row");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF &&
      static_cast<unsigned char>(line[1]) == 0xBB && static_cast<unsigned char>(line[2]) == 0xBF)
    line = line.substr(3);
  const auto header = split_fields(line);
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < header.size(); ++i) index.emplace(header[i], i);

  auto column = [&](const std::string& name) {
    auto it = index.find(name);
    if (it == index.end())
      fail(ErrorKind::Schema, source_name + ": column '" + name + "' named in schema is missing");
    return it->second;
  };
  if (schema.features.empty()) fail(ErrorKind::Schema, source_name + ": schema lists no features");
  if (schema.label.empty()) fail(ErrorKind::Schema, source_name + ": schema names no label column");
  std::vector<std::size_t> feature_cols;
  for (const auto& f : schema.features) feature_cols.push_back(column(f));
  const std::size_t label_col = column(schema.label);
  std::optional<std::size_t> sens_col;
  if (schema.sensitive) sens_col = column(*schema.sensitive);
  std::optional<std::size_t> base_col;
  if (schema.base_score) base_col = column(*schema.base_score);

  std::vector<std::vector<double>> feats;
  std::vector<double> labels;
  std::vector<std::optional<double>> sens;
  std::vector<double> base;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++row;
    const auto cells = split_fields(line);
    if (cells.size() != header.size())
      fail(ErrorKind::Parse, source_name + ": row " + std::to_string(row) + " has " +
                                 std::to_string(cells.size()) + " cells, header has " +
                                 std::to_string(header.size()));
    auto number = [&](std::size_t col) {
      auto v = parse_number(cells[col]);
      if (!v)
        fail(ErrorKind::Parse, source_name + ": row " + std::to_string(row) + ", column '" +
                                   header[col] + "': non-numeric value '" + cells[col] + "'");
      return *v;
    };
    std::vector<double> x;
    x.reserve(feature_cols.size());
    for (auto c : feature_cols) x.push_back(number(c));
    feats.push_back(std::move(x));
    const double y = number(label_col);
    if (schema.task_kind == TaskKind::binary_classification && y != 0.0 && y != 1.0)
      fail(ErrorKind::Parse, source_name + ": row " + std::to_string(row) + ", column '" +
                                 header[label_col] + "': binary label must be 0 or 1, got '" +
                                 cells[label_col] + "'");
    labels.push_back(y);
    if (sens_col && !cells[*sens_col].empty()) {
      const double a = number(*sens_col);
      if (schema.sensitive_kind == SensitiveKind::categorical && !is_nonnegative_integer(a))
        fail(ErrorKind::Parse, source_name + ": row " + std::to_string(row) + ", column '" +
                                   header[*sens_col] + "': categorical value must be a nonnegative integer");
      sens.emplace_back(a);
    } else {
      sens.emplace_back(std::nullopt);
    }
    if (base_col) base.push_back(number(*base_col));
  }
  if (row == 0) fail(ErrorKind::EmptyDataset, source_name + ": no data rows");

  DatasetTable table;
  const auto n = static_cast<Eigen::Index>(row);
  const auto d = static_cast<Eigen::Index>(feature_cols.size());
  table.features.resize(n, d);
  table.label.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j)
      table.features(i, j) = feats[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    table.label(i) = labels[static_cast<std::size_t>(i)];
  }
  table.sensitive = std::move(sens);
  if (base_col) table.base_score = Eigen::Map<Eigen::VectorXd>(base.data(), n);
  table.task_kind = schema.task_kind;
  table.sensitive_kind = schema.sensitive_kind;
  table.feature_names = schema.features;
  table.label_name = schema.label;
  if (schema.sensitive) table.sensitive_name = *schema.sensitive;
  table.validate();
  return table;
}

DatasetTable load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_csv(buf.str(), schema, path.string());
}

std::string to_csv(const DatasetTable& table) {
  std::string out;
  for (const auto& name : table.feature_names) out += name + ",";
  out += table.label_name + "," + table.sensitive_name;
  if (table.base_score) out += ",base_score";
  out += "\n";
  for (std::size_t i = 0; i < table.rows(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    for (Eigen::Index j = 0; j < table.features.cols(); ++j) out += format_number(table.features(r, j)) + ",";
    out += format_number(table.label(r)) + ",";
    if (table.sensitive[i]) out += format_number(*table.sensitive[i]);
    if (table.base_score) out += "," + format_number((*table.base_score)(r));
    out += "\n";
  }
  return out;
}

void write_csv(const DatasetTable& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write '" + path.string() + "'");
  out << to_csv(table);
  if (!out) fail(ErrorKind::Io, "write failed for '" + path.string() + "'");
}

void SplitSpec::validate() const {
  if (!(train > 0.0 && validation > 0.0 && test > 0.0))
    fail(ErrorKind::Config, "split fractions must be positive");
  if (std::abs(train + validation + test - 1.0) > 1e-9)
    fail(ErrorKind::Config, "split fractions must sum to 1");
}

Splits split(const DatasetTable& data, const SplitSpec& spec) {
  spec.validate();
  const std::size_t n = data.rows();
  const auto n_val = static_cast<std::size_t>(std::llround(spec.validation * static_cast<double>(n)));
  const auto n_test = static_cast<std::size_t>(std::llround(spec.test * static_cast<double>(n)));
  if (n < 3 || n_val == 0 || n_test == 0 || n_val + n_test >= n)
    fail(ErrorKind::SplitTooSmall, "cannot split " + std::to_string(n) +
                                       " rows into three nonempty parts");
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(spec.seed);
  rng.shuffle(std::span<std::size_t>(order));
  const std::size_t n_train = n - n_val - n_test;
  std::span<const std::size_t> all(order);
  return Splits{data.take(all.subspan(0, n_train)), data.take(all.subspan(n_train, n_val)),
                data.take(all.subspan(n_train + n_val, n_test))};
}

DatasetTable subsample_sensitive(const DatasetTable& data, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0))
    fail(ErrorKind::InvalidFraction, "sensitive fraction must be in (0, 1]");
  auto annotated = data.annotated_rows();
  if (annotated.empty()) fail(ErrorKind::EmptyGroup, "no annotated rows to subsample");
  const auto keep = static_cast<std::size_t>(
      std::ceil(fraction * static_cast<double>(annotated.size()) - 1e-9));
  DatasetTable out = data;
  if (keep >= annotated.size()) return out;
  Rng rng(seed);
  // Partial Fisher-Yates: the first `keep` slots are a uniform subset.
  for (std::size_t i = 0; i < keep; ++i) {
    const std::size_t j = i + rng.below(annotated.size() - i);
    std::swap(annotated[i], annotated[j]);
  }
  for (std::size_t i = keep; i < annotated.size(); ++i) out.sensitive[annotated[i]].reset();
  return out;
}

Standardizer Standardizer::fit(const DatasetTable& train) {
  if (train.rows() < 2) fail(ErrorKind::SplitTooSmall, "standardization needs at least 2 rows");
  Standardizer s;
  const auto& x = train.features;
  s.mean = x.colwise().mean().transpose();
  s.scale.resize(x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double var = (x.col(j).array() - s.mean(j)).square().mean();
    const double sd = std::sqrt(var);
    s.scale(j) = sd > 1e-12 * std::max(1.0, std::abs(s.mean(j))) ? sd : 1.0;
  }
  return s;
}

Eigen::MatrixXd Standardizer::apply(const Eigen::MatrixXd& features) const {
  if (features.cols() != mean.size())
    fail(ErrorKind::Dim, "standardizer expects " + std::to_string(mean.size()) + " columns");
  return ((features.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array())
      .matrix();
}

DatasetTable Standardizer::apply(const DatasetTable& table) const {
  DatasetTable out = table;
  out.features = apply(table.features);
  return out;
}

StandardizeResult standardize(const DatasetTable& train, std::span<const DatasetTable> others) {
  StandardizeResult result;
  result.record = Standardizer::fit(train);
  result.train = result.record.apply(train);
  for (const auto& t : others) result.others.push_back(result.record.apply(t));
  return result;
}

void SynthSpec::validate() const {
  if (n < 2) fail(ErrorKind::Config, "synth.n must be at least 2");
  if (d < 1) fail(ErrorKind::Config, "synth.d must be at least 1");
  if (!(group_prob > 0.0 && group_prob < 1.0)) fail(ErrorKind::Config, "synth.group_prob must be in (0, 1)");
  if (!(noise_scale > 0.0)) fail(ErrorKind::Config, "synth.noise_scale must be positive");
  if (!group_mean_shift.empty() && group_mean_shift.size() != d)
    fail(ErrorKind::Config, "synth.group_mean_shift must have length d");
  if (!label_weights.empty() && label_weights.size() != d)
    fail(ErrorKind::Config, "synth.label_weights must have length d");
}

DatasetTable synth_two_group(const SynthSpec& spec) {
  spec.validate();
  const auto n = static_cast<Eigen::Index>(spec.n);
  const auto d = static_cast<Eigen::Index>(spec.d);
  Eigen::VectorXd shift = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd w = Eigen::VectorXd::Ones(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    if (!spec.group_mean_shift.empty()) shift(j) = spec.group_mean_shift[static_cast<std::size_t>(j)];
    if (!spec.label_weights.empty()) w(j) = spec.label_weights[static_cast<std::size_t>(j)];
  }
  DatasetTable t;
  t.features.resize(n, d);
  t.label.resize(n);
  t.sensitive.resize(spec.n);
  Rng rng(spec.seed);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double a = rng.bernoulli(spec.group_prob) ? 1.0 : 0.0;
    double logit = spec.label_bias + spec.group_label_shift * a;
    for (Eigen::Index j = 0; j < d; ++j) {
      const double x = a * shift(j) + spec.noise_scale * rng.normal();
      t.features(i, j) = x;
      logit += w(j) * x;
    }
    const double p = 1.0 / (1.0 + std::exp(-logit));
    t.label(i) = rng.bernoulli(p) ? 1.0 : 0.0;
    t.sensitive[static_cast<std::size_t>(i)] = a;
  }
  for (Eigen::Index j = 0; j < d; ++j) t.feature_names.push_back("x" + std::to_string(j));
  return t;
}

}  // namespace frappe
