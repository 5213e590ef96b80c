#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "varnn/model.hpp"

namespace varnn {

/// Thrown for unreadable/ill-formed input data; messages carry file/row info.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Aligned covariate matrix and scalar target series. Rows are assumed
/// chronological. Missing cells hold 0.0 and are flagged in the masks until
/// fill_missing runs.
struct TimeSeriesDataset {
  std::string name;
  std::vector<std::string> feature_names;
  std::string target_name;
  Mat X;  // T x d
  Vec y;  // T
  std::vector<std::uint8_t> x_missing;  // T*d row-major; empty when nothing is missing
  std::vector<std::uint8_t> y_missing;  // T; empty when nothing is missing
  std::vector<std::string> warnings;
  std::map<std::string, std::string> meta;

  std::size_t length() const { return y.len(); }
  std::size_t dim() const { return X.cols; }
  bool has_missing() const { return !x_missing.empty() || !y_missing.empty(); }
};

struct CsvSpec {
  std::string path;
  std::string target_column;
  std::vector<std::string> feature_columns;  // empty = every other numeric column
  std::string timestamp_column;              // optional; parsed only for a monotonicity check
};

/// Reads a headered CSV. Cells equal to "", "NA" or "NaN" (case-insensitive)
/// are recorded as missing; any other unparseable cell is an error naming the
/// file line.
TimeSeriesDataset load_csv(const CsvSpec& spec);

/// Per-column min/max of the training segment; x' = (x - min) / (max - min).
/// Constant columns map to 0.
struct ScalerState {
  std::vector<double> x_min, x_max;
  double y_min = 0.0, y_max = 1.0;

  double transform_x(std::size_t col, double v) const;
  double inverse_x(std::size_t col, double v) const;
  double transform_y(double v) const;
  double inverse_y(double v) const;
};

/// Fit on rows [0, train_end) only, skipping masked cells.
ScalerState fit_scaler(const TimeSeriesDataset& data, std::size_t train_end);

/// Scales every row in place; masked cells are left untouched.
void transform_in_place(TimeSeriesDataset& data, const ScalerState& scaler);

enum class FillStrategy { ForwardFillThenZero };

/// Each missing cell takes the last observed value of its column; leading
/// gaps take 0 (the scaled-space floor). Clears the masks, so applying it
/// twice is the same as once. An all-missing column becomes zeros and leaves
/// a warning on the dataset.
void fill_missing(TimeSeriesDataset& data,
                  FillStrategy strategy = FillStrategy::ForwardFillThenZero);

struct SplitSpec {
  double train_fraction = 0.8;  // chronological head of the series
  double val_fraction = 0.2;    // carved from the tail of the training segment
};

struct SplitBoundaries {
  std::size_t train_end;  // rows [0, train_end) train
  std::size_t val_end;    // rows [train_end, val_end) validation, rest test
};

SplitBoundaries split_boundaries(std::size_t total_rows, const SplitSpec& split);

struct SplitWindows {
  std::vector<WindowInstance> train, validation, test;
};

/// Windows of one segment: final index t runs from begin+w-1 to end-1, moving
/// by `stride`. A non-empty segment shorter than w is an error.
std::vector<WindowInstance> make_windows_segment(const TimeSeriesDataset& data,
                                                 std::size_t begin, std::size_t end,
                                                 std::size_t w, std::size_t stride);

/// Windows per split segment; no window crosses a split boundary.
SplitWindows make_windows(const TimeSeriesDataset& data, std::size_t w,
                          std::size_t stride, const SplitSpec& split);

/// FNV-1a over the raw bytes of every window, for protocol-identity checks.
std::uint64_t hash_windows(const std::vector<WindowInstance>& windows);

/// Cache file for a window set; the key names (dataset hash, w, stride, split).
void save_windows_binary(const std::vector<WindowInstance>& windows,
                         const std::string& path);
std::vector<WindowInstance> load_windows_binary(const std::string& path);
std::string window_cache_key(std::uint64_t dataset_hash, std::size_t w,
                             std::size_t stride, const SplitSpec& split);
std::uint64_t hash_dataset(const TimeSeriesDataset& data);

/// One stretch of the regime schedule: y draws its coefficients from `beta`
/// and its noise scale from `sigma` while t is in [t_begin, t_end).
struct RegimeSegment {
  std::size_t t_begin = 0;
  std::size_t t_end = 0;
  Vec beta;
  double sigma = 0.0;
};

/// x_t ~ U[0,1]^d i.i.d.;  y_t = beta(t) . x_t + ar_coeff * y_{t-1} + eps_t,
/// eps_t ~ N(0, sigma(t)), with beta and sigma piecewise per segment and an
/// optional linear drift added to every beta coefficient.
struct SyntheticSpec {
  std::size_t length = 0;
  std::size_t d = 1;
  std::vector<RegimeSegment> regimes;  // must tile [0, length)
  double ar_coeff = 0.0;
  double drift_rate = 0.0;
  std::uint64_t seed = 0;
  std::string name = "synthetic";

  void validate() const;
};

TimeSeriesDataset generate_synthetic(const SyntheticSpec& spec);

/// Scale (train statistics only), fill, window: the standard preparation the
/// experiment harness applies to every dataset.
struct PreparedData {
  TimeSeriesDataset scaled;
  ScalerState scaler;
  SplitBoundaries bounds;
  SplitWindows windows;
};

PreparedData prepare(TimeSeriesDataset data, const SplitSpec& split, std::size_t w,
                     std::size_t stride);

}  // namespace varnn
