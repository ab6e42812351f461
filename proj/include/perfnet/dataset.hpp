#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <vector>

#include "perfnet/environment.hpp"

namespace perfnet {

struct LoadOptions {
  /// Keep the first `columns` feature columns; 0 keeps all.
  std::size_t columns = 0;
};

/// CSV with features followed by a 0/1 label in the last column. A header
/// row is recognised by a non-numeric first-row cell and skipped. Malformed
/// rows raise Errc::dataset with the line number; labels other than 0/1
/// raise Errc::validation.
LabeledData load_dataset(const std::filesystem::path& path, const LoadOptions& options = {});
LabeledData parse_dataset(std::istream& in, const LoadOptions& options = {});

void write_dataset_csv(std::ostream& out, const LabeledData& data);

struct DatasetBundle {
  std::vector<std::shared_ptr<const LabeledData>> shards;
  std::shared_ptr<const LabeledData> test;
  std::vector<std::vector<std::size_t>> shard_rows;  // indices into the source table
  std::vector<std::size_t> test_rows;
};

/// Deterministic shuffled split into n shards of `per_agent` rows plus a
/// test shard. Errc::invalid_size when n * per_agent + test_count > rows.
DatasetBundle partition_agents(const LabeledData& table, std::size_t n,
                               std::size_t per_agent, std::size_t test_count,
                               std::uint64_t seed);

/// Per-column z-score with statistics from the agent shards only, applied to
/// shards and test split. Constant columns are centred but not scaled.
DatasetBundle standardize(const DatasetBundle& bundle);

/// Stand-in for a word-frequency spam corpus: nonnegative, right-skewed
/// features whose class-conditional rates differ on a subset of columns.
LabeledData synthetic_spam_corpus(std::size_t rows, std::size_t dim,
                                  double positive_rate, std::uint64_t seed);

}  // namespace perfnet
