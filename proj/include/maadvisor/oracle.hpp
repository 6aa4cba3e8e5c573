#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "maadvisor/core.hpp"

namespace maadvisor {

class OracleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kBytesPerMegabyte = 1048576.0;

/// What-if interface: optimizer-style cost and storage estimates for
/// hypothetical index configurations. Implementations must return identical
/// values for identical inputs and oracle state.
class CostOracle {
 public:
  virtual ~CostOracle() = default;

  virtual double estimate_query_cost(const Query& query, const IndexConfiguration& config) const = 0;
  virtual double estimate_workload_cost(const Workload& workload,
                                        const IndexConfiguration& config) const;
  virtual double estimate_index_storage(const Index& index) const = 0;
  double estimate_configuration_storage(const IndexConfiguration& config) const;

  /// Distinct-value estimate the optimizer currently believes for a column.
  virtual double estimated_cardinality(std::string_view table, std::string_view column) const = 0;

  /// Returns an oracle whose column statistics are replaced by `cardinalities`
  /// (keyed "table.column"), or nullptr when the backend cannot do that.
  virtual std::unique_ptr<CostOracle> with_cardinalities(
      const std::map<std::string, double>& cardinalities) const;

  virtual const DatabaseSchema& schema() const = 0;
};

struct SyntheticOracleConfig {
  /// Indexed by OperatorClass.
  double operator_weights[kOperatorClassCount] = {0.9, 0.6, 0.7, 0.3};
  double composite_bonus = 0.9;
  double cost_floor_fraction = 0.01;
  double per_index_row_overhead_bytes = 8.0;
  /// Per applicable index, as a fraction of base cost, charged only by true_cost.
  double true_overhead_fraction = 0.02;

  [[nodiscard]] double weight(OperatorClass op) const {
    return operator_weights[static_cast<int>(op)];
  }
  void validate() const;
};

struct PerturbationSpec {
  std::uint64_t seed = 0;
  double fraction_columns = 0.0;
  double error_factor = 1.0;

  void validate() const;
};

/// Deterministic analytic what-if model.
///
/// A query's cost is base_cost times one factor per referenced table. An index
/// applies to a table when its leading column is used by the query; its factor
/// is the product over the longest matched column prefix of
/// (1 - w_op) + w_op / cardinality, times composite_bonus for prefixes of two
/// or more columns. The table takes the best (smallest) applicable factor and
/// the result is floored at cost_floor_fraction * base_cost.
class SyntheticOracle final : public CostOracle {
 public:
  explicit SyntheticOracle(std::shared_ptr<const DatabaseSchema> schema,
                           SyntheticOracleConfig config = {});

  double estimate_query_cost(const Query& query, const IndexConfiguration& config) const override;
  double estimate_index_storage(const Index& index) const override;
  double estimated_cardinality(std::string_view table, std::string_view column) const override;
  std::unique_ptr<CostOracle> with_cardinalities(
      const std::map<std::string, double>& cardinalities) const override;
  const DatabaseSchema& schema() const override { return *schema_; }

  /// Ground truth: unperturbed estimate plus true_overhead_fraction * base_cost
  /// for every index applicable to each query.
  double true_query_cost(const Query& query, const IndexConfiguration& config) const;
  double true_cardinality(std::string_view table, std::string_view column) const;
  double true_cost(const Workload& workload, const IndexConfiguration& config) const;

  /// Copy whose *estimates* use a seeded subset of columns with cardinality
  /// scaled by error_factor (alternately multiplied and divided). True costs
  /// keep the original statistics.
  SyntheticOracle perturbed(const PerturbationSpec& spec) const;

  /// "table.column" names whose estimates differ from the schema statistics.
  std::vector<std::string> perturbed_columns() const;

  const SyntheticOracleConfig& config() const { return config_; }
  const std::shared_ptr<const DatabaseSchema>& schema_ptr() const { return schema_; }

 private:
  struct ColumnStats {
    double cardinality = 1.0;  // estimate used by estimate_* calls
    double true_cardinality = 1.0;
    double width_bytes = 1.0;
  };
  struct TableStats {
    double rows = 0.0;
    std::unordered_map<std::string, ColumnStats> columns;
  };

  const ColumnStats& column_stats(std::string_view table, std::string_view column) const;
  double query_cost(const Query& query, const IndexConfiguration& config, bool truth) const;

  std::shared_ptr<const DatabaseSchema> schema_;
  SyntheticOracleConfig config_;
  std::unordered_map<std::string, TableStats> tables_;
};

/// Read-only view that answers estimate_query_cost with the ground truth of a
/// synthetic oracle (overhead included). Holds a reference to `source`.
class GroundTruthOracle final : public CostOracle {
 public:
  explicit GroundTruthOracle(const SyntheticOracle& source) : source_(source) {}

  double estimate_query_cost(const Query& query, const IndexConfiguration& config) const override {
    return source_.true_query_cost(query, config);
  }
  double estimate_index_storage(const Index& index) const override {
    return source_.estimate_index_storage(index);
  }
  double estimated_cardinality(std::string_view table, std::string_view column) const override;
  const DatabaseSchema& schema() const override { return source_.schema(); }

 private:
  const SyntheticOracle& source_;
};

/// Convenience wrapper: ground-truth workload cost under the default model.
double true_cost(const Workload& workload, const IndexConfiguration& config,
                 const DatabaseSchema& schema);

/// Returns a perturbed copy; the argument is untouched.
SyntheticOracle perturb_statistics(const SyntheticOracle& oracle, const PerturbationSpec& spec);

/// Session against a DBMS that supports hypothetical indexes (HypoPG style).
/// Handles are opaque to the adapter.
class HypotheticalIndexSession {
 public:
  virtual ~HypotheticalIndexSession() = default;
  virtual std::int64_t create_hypothetical_index(const Index& index) = 0;
  virtual void drop_hypothetical_index(std::int64_t handle) = 0;
  virtual double hypothetical_index_size_bytes(std::int64_t handle) = 0;
  /// Optimizer total cost of the statement under the currently created
  /// hypothetical indexes.
  virtual double explain_cost(const std::string& sql) = 0;
  virtual double column_distinct_estimate(const std::string& table, const std::string& column) = 0;
};

/// CostOracle over a live session. Calls are serialized so concurrent callers
/// see consistent estimates for a given configuration.
class LiveOracle final : public CostOracle {
 public:
  LiveOracle(std::shared_ptr<const DatabaseSchema> schema,
             std::unique_ptr<HypotheticalIndexSession> session);

  double estimate_query_cost(const Query& query, const IndexConfiguration& config) const override;
  double estimate_index_storage(const Index& index) const override;
  double estimated_cardinality(std::string_view table, std::string_view column) const override;
  const DatabaseSchema& schema() const override { return *schema_; }

 private:
  std::shared_ptr<const DatabaseSchema> schema_;
  std::unique_ptr<HypotheticalIndexSession> session_;
  mutable std::mutex mutex_;
};

/// Opens a live session for the connection string in MAADVISOR_DB_URL.
/// Throws OracleError when no driver is available in this build.
std::unique_ptr<HypotheticalIndexSession> open_live_session(const std::string& url);

}  // namespace maadvisor
