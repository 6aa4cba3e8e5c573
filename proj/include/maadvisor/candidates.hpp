#pragma once

#include <optional>
#include <string>
#include <vector>

#include "maadvisor/core.hpp"
#include "maadvisor/oracle.hpp"

namespace maadvisor {

/// Compact view of a column's value distribution: "min…max, k buckets".
struct DistributionDigest {
  std::optional<Scalar> min_value;
  std::optional<Scalar> max_value;
  std::size_t buckets = 0;

  static DistributionDigest of(const ColumnMeta& column);
};

std::string format_digest(const DistributionDigest& digest);

/// Per-query information about one indexable column.
struct QueryColumnInfo {
  std::string query_id;
  std::string table;
  std::string column;
  OperatorSet operators;
  double est_cardinality = 0.0;
  DistributionDigest distribution;
  double est_storage_mb = 0.0;
  double utility = 0.0;
};

/// One merged candidate per distinct indexable column.
struct ColumnCandidate {
  std::string name;  // "Table.Column"
  std::string table;
  std::string column;
  OperatorSet operators;
  double est_cardinality = 0.0;
  DistributionDigest distribution;
  double est_storage_mb = 0.0;
  double est_utility = 0.0;

  [[nodiscard]] Index as_index() const { return Index{table, {column}}; }
};

/// (cost(q, config) - cost(q, config + index)) / storage(index). May be negative.
double compute_index_utility(const Query& query, const Index& index,
                             const IndexConfiguration& config, const CostOracle& oracle);

/// One info per (query, distinct column used by the query), utilities against
/// the empty configuration. Columns of empty tables are skipped.
std::vector<QueryColumnInfo> build_query_infos(const Workload& workload, const CostOracle& oracle);

/// Merges infos into one candidate per column; utilities are summed in
/// info order, operators unioned. Output follows first appearance.
std::vector<ColumnCandidate> merge_candidates(const std::vector<QueryColumnInfo>& infos);

struct RefreshOptions {
  /// Appending a candidate to an existing same-table index is considered up
  /// to this width.
  std::size_t max_composite_width = 3;
};

/// Recomputes utilities relative to `config`.
///
/// A candidate that leads an index in `config` gets 0. Otherwise its utility
/// is the best of (a) adding it as a single-column index and (b) appending it
/// to an existing index on the same table, measured as the summed per-query
/// cost reduction divided by the candidate's own storage. With an empty
/// configuration this reproduces merge_candidates exactly.
std::vector<ColumnCandidate> refresh_candidates(const std::vector<ColumnCandidate>& candidates,
                                                const IndexConfiguration& config,
                                                const Workload& workload,
                                                const CostOracle& oracle,
                                                const RefreshOptions& options = {});

/// Line-per-candidate text block, sorted by descending utility then name,
/// followed by budget totals and the current index keys. Deterministic.
std::string render_candidates(const std::vector<ColumnCandidate>& candidates, const Budget& budget,
                              const IndexConfiguration& config);

/// Candidates ordered as render_candidates prints them.
std::vector<ColumnCandidate> sorted_by_utility(std::vector<ColumnCandidate> candidates);

}  // namespace maadvisor
