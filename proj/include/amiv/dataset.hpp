#ifndef AMIV_DATASET_HPP
#define AMIV_DATASET_HPP

// Latin hypercube corpora labeled by the cosine pricer.

#include <amiv/cos_engine.hpp>
#include <amiv/region.hpp>

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace amiv {

struct ParamRange {
  std::string name;
  double low = 0.0;
  double high = 1.0;
};

struct ParamBox {
  std::vector<ParamRange> dims;

  /// Throws std::invalid_argument unless low < high in every dimension.
  void validate() const;
  int index(const std::string& name) const;
  const ParamRange& operator[](const std::string& name) const { return dims.at(index(name)); }

  /// Put training box of the inverse map, spot fixed at 1.
  static ParamBox implied_vol();
  /// Call and put training box of the pricing network, spot fixed at 1.
  static ParamBox forward();
};

/// n x dims matrix. Each column places exactly one point in each of the n
/// equal-width strata of its range.
Eigen::MatrixXd lhs_sample(const ParamBox& box, Eigen::Index n, std::uint64_t seed);

enum class Split : std::uint8_t { Train, Validation, Test };

std::string_view to_string(Split s);
Split parse_split(std::string_view text);

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Dataset {
  std::vector<std::string> columns;
  RowMatrix table;
  std::vector<Split> splits;
  std::uint64_t seed = 0;
  /// Provenance written to the sidecar file, in insertion order.
  std::vector<std::pair<std::string, std::string>> meta;

  Eigen::Index rows() const { return table.rows(); }
  int column(const std::string& name) const;
  Eigen::Index count(Split s) const;
  /// Named columns of the rows tagged `s`, one sample per column of the result.
  Eigen::MatrixXd select(const std::vector<std::string>& names, Split s) const;
  std::string meta_value(const std::string& key) const;
};

/// Column layouts of the two corpora.
const std::vector<std::string>& iv_columns();
const std::vector<std::string>& iv_inputs();
const std::vector<std::string>& forward_columns();
const std::vector<std::string>& forward_inputs();
const std::vector<std::string>& forward_targets();

struct GenerationStats {
  Eigen::Index requested = 0;
  Eigen::Index emitted = 0;
  Eigen::Index dropped_stopping = 0;
  Eigen::Index dropped_range = 0;
  Eigen::Index dropped_error = 0;
};

/// N = 256 already resolves every price in both boxes to about 1e-10.
CosConfig corpus_cos_config();

struct GenerationOptions {
  CosConfig cos = corpus_cos_config();
  RegionThresholds thresholds;
  /// Admissible log time values; samples outside are dropped.
  double log_tv_low = -11.51;
  double log_tv_high = -0.24;
  int threads = 1;
  std::function<void(Eigen::Index done, Eigen::Index total)> progress;
};

/// Rows (log_time_value, strike, rate, div_yield, tau) -> sigma for puts
/// with S0 = 1. Stopping-region and out-of-range samples are dropped.
Dataset generate_iv_dataset(const ParamBox& box, Eigen::Index n, std::uint64_t seed,
                            const GenerationOptions& opt = {}, GenerationStats* stats = nullptr);

/// Rows (strike, tau, rate, div_yield, sigma) -> (put_price, call_price) with
/// S0 = 1; the call is priced as its symmetric put.
Dataset generate_forward_dataset(const ParamBox& box, Eigen::Index n, std::uint64_t seed,
                                 const GenerationOptions& opt = {}, GenerationStats* stats = nullptr);

/// Tags a seeded random permutation 80/10/10 as train/validation/test.
void split(Dataset& d, std::uint64_t seed);

/// CSV with a trailing split column, plus `path.meta` holding key=value lines.
void write_dataset(const Dataset& d, const std::string& path);
Dataset read_dataset(const std::string& path);

}  // namespace amiv

#endif  // AMIV_DATASET_HPP
