#include "perfnet/dataset.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <string>

#include "perfnet/metrics.hpp"
#include "perfnet/rng.hpp"

namespace perfnet {

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(cell);
      cell.clear();
    } else if (c != '\r') {
      cell.push_back(c);
    }
  }
  cells.push_back(cell);
  return cells;
}

bool parse_number(const std::string& cell, double& out) {
  const char* begin = cell.c_str();
  while (*begin == ' ' || *begin == '\t') ++begin;
  if (*begin == '\0') return false;
  char* end = nullptr;
  errno = 0;
  out = std::strtod(begin, &end);
  while (*end == ' ' || *end == '\t') ++end;
  return *end == '\0' && errno != ERANGE && std::isfinite(out);
}

LabeledData select_columns(LabeledData data, std::size_t columns) {
  if (columns == 0 || columns == data.dim()) return data;
  if (columns > data.dim()) {
    throw Error(Errc::dataset, "requested " + std::to_string(columns) +
                                   " feature columns, file has " +
                                   std::to_string(data.dim()));
  }
  AgentMatrix kept = data.features.leftCols(static_cast<Eigen::Index>(columns));
  data.features = std::move(kept);
  return data;
}

std::shared_ptr<const LabeledData> gather(const LabeledData& table,
                                          const std::vector<std::size_t>& rows) {
  auto out = std::make_shared<LabeledData>();
  out->features.resize(static_cast<Eigen::Index>(rows.size()), table.features.cols());
  out->labels.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto r = static_cast<Eigen::Index>(rows[k]);
    out->features.row(static_cast<Eigen::Index>(k)) = table.features.row(r);
    out->labels[static_cast<Eigen::Index>(k)] = table.labels[r];
  }
  return out;
}

}  // namespace

LabeledData parse_dataset(std::istream& in, const LoadOptions& options) {
  std::vector<std::vector<double>> rows;
  std::vector<double> labels;
  std::size_t width = 0;
  std::size_t lineno = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv(line);
    std::vector<double> values(cells.size());
    bool numeric = true;
    for (std::size_t k = 0; k < cells.size(); ++k) {
      if (!parse_number(cells[k], values[k])) {
        numeric = false;
        break;
      }
    }
    if (!numeric) {
      if (rows.empty() && width == 0) {
        width = cells.size();  // header
        continue;
      }
      throw Error(Errc::dataset, "line " + std::to_string(lineno) + ": non-numeric cell");
    }
    if (width == 0) width = cells.size();
    if (cells.size() != width) {
      throw Error(Errc::dataset, "line " + std::to_string(lineno) + ": expected " +
                                     std::to_string(width) + " columns, found " +
                                     std::to_string(cells.size()));
    }
    if (width < 2) {
      throw Error(Errc::dataset, "line " + std::to_string(lineno) +
                                     ": need at least one feature and a label");
    }
    const double y = values.back();
    if (y != 0.0 && y != 1.0) {
      throw Error(Errc::validation, "line " + std::to_string(lineno) +
                                        ": label must be 0 or 1");
    }
    values.pop_back();
    rows.push_back(std::move(values));
    labels.push_back(y);
  }
  if (rows.empty()) throw Error(Errc::dataset, "dataset has no rows");
  LabeledData data;
  const auto d = static_cast<Eigen::Index>(rows.front().size());
  data.features.resize(static_cast<Eigen::Index>(rows.size()), d);
  data.labels.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto ri = static_cast<Eigen::Index>(r);
    for (Eigen::Index c = 0; c < d; ++c) data.features(ri, c) = rows[r][static_cast<std::size_t>(c)];
    data.labels[ri] = labels[r];
  }
  return select_columns(std::move(data), options.columns);
}

LabeledData load_dataset(const std::filesystem::path& path, const LoadOptions& options) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::dataset, "cannot open dataset " + path.string());
  return parse_dataset(in, options);
}

void write_dataset_csv(std::ostream& out, const LabeledData& data) {
  for (std::size_t c = 0; c < data.dim(); ++c) out << 'f' << c << ',';
  out << "label\n";
  for (Eigen::Index r = 0; r < data.features.rows(); ++r) {
    for (Eigen::Index c = 0; c < data.features.cols(); ++c) {
      out << format_double(data.features(r, c)) << ',';
    }
    out << (data.labels[r] != 0.0 ? 1 : 0) << '\n';
  }
}

DatasetBundle partition_agents(const LabeledData& table, std::size_t n,
                               std::size_t per_agent, std::size_t test_count,
                               std::uint64_t seed) {
  if (n == 0 || per_agent == 0) {
    throw Error(Errc::invalid_size, "partition needs n >= 1 and per_agent >= 1");
  }
  const std::size_t required = n * per_agent + test_count;
  if (required > table.rows()) {
    throw Error(Errc::invalid_size, "partition needs " + std::to_string(required) +
                                        " rows, dataset has " +
                                        std::to_string(table.rows()));
  }
  std::vector<std::size_t> order(table.rows());
  std::iota(order.begin(), order.end(), std::size_t{0});
  CounterStream rng(seed, stream_id(StreamPurpose::partition, 0), 0);
  for (std::size_t k = order.size(); k > 1; --k) {
    std::swap(order[k - 1], order[rng.below(k)]);
  }
  DatasetBundle bundle;
  std::size_t next = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(next),
                                  order.begin() + static_cast<std::ptrdiff_t>(next + per_agent));
    next += per_agent;
    bundle.shards.push_back(gather(table, rows));
    bundle.shard_rows.push_back(std::move(rows));
  }
  bundle.test_rows.assign(order.begin() + static_cast<std::ptrdiff_t>(next),
                          order.begin() + static_cast<std::ptrdiff_t>(next + test_count));
  bundle.test = gather(table, bundle.test_rows);
  return bundle;
}

DatasetBundle standardize(const DatasetBundle& bundle) {
  if (bundle.shards.empty()) return bundle;
  const auto d = bundle.shards.front()->features.cols();
  Vector mean = Vector::Zero(d);
  Vector sq = Vector::Zero(d);
  double count = 0.0;
  for (const auto& shard : bundle.shards) {
    mean += shard->features.colwise().sum().transpose();
    count += static_cast<double>(shard->rows());
  }
  mean /= count;
  for (const auto& shard : bundle.shards) {
    sq += (shard->features.rowwise() - mean.transpose()).colwise().squaredNorm().transpose();
  }
  Vector scale(d);
  for (Eigen::Index c = 0; c < d; ++c) {
    const double sd = std::sqrt(sq[c] / count);
    scale[c] = sd > 0.0 ? 1.0 / sd : 1.0;
  }
  auto transform = [&](const std::shared_ptr<const LabeledData>& in) {
    auto out = std::make_shared<LabeledData>(*in);
    out->features = ((out->features.rowwise() - mean.transpose()).array().rowwise() *
                     scale.transpose().array())
                        .matrix();
    return std::shared_ptr<const LabeledData>(std::move(out));
  };
  DatasetBundle out = bundle;
  for (auto& shard : out.shards) shard = transform(shard);
  if (out.test) out.test = transform(out.test);
  return out;
}

LabeledData synthetic_spam_corpus(std::size_t rows, std::size_t dim,
                                  double positive_rate, std::uint64_t seed) {
  if (rows == 0 || dim == 0) throw Error(Errc::invalid_size, "empty corpus requested");
  if (!(positive_rate > 0.0 && positive_rate < 1.0)) {
    throw Error(Errc::contract, "positive rate must lie in (0, 1)");
  }
  // Column model: a word appears with a class-dependent probability and,
  // when present, with a log-normal frequency.
  struct Column {
    double presence[2];
    double log_scale[2];
  };
  std::vector<Column> cols(dim);
  CounterStream params(seed, stream_id(StreamPurpose::synthetic, 0), 0);
  for (auto& c : cols) {
    const double base = 0.05 + 0.4 * params.uniform();
    const bool informative = params.uniform() < 0.6;
    const double shift = informative ? (params.uniform() < 0.5 ? -1.0 : 1.0) *
                                           (0.1 + 0.25 * params.uniform())
                                     : 0.0;
    c.presence[0] = base;
    c.presence[1] = std::clamp(base + shift, 0.01, 0.95);
    c.log_scale[0] = -1.0 + params.normal() * 0.5;
    c.log_scale[1] = c.log_scale[0] + (informative ? 0.5 * params.normal() : 0.0);
  }
  LabeledData data;
  data.features.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(dim));
  data.labels.resize(static_cast<Eigen::Index>(rows));
  for (std::size_t r = 0; r < rows; ++r) {
    CounterStream rng(seed, stream_id(StreamPurpose::synthetic, 1), r);
    const int y = rng.uniform() < positive_rate ? 1 : 0;
    const auto ri = static_cast<Eigen::Index>(r);
    data.labels[ri] = y;
    for (std::size_t c = 0; c < dim; ++c) {
      const double present = rng.uniform();
      const double magnitude = std::exp(cols[c].log_scale[y] + 0.7 * rng.normal());
      data.features(ri, static_cast<Eigen::Index>(c)) =
          present < cols[c].presence[y] ? magnitude : 0.0;
    }
  }
  return data;
}

}  // namespace perfnet
