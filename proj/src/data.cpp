#include "varnn/data.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

namespace varnn {

namespace {

constexpr std::uint64_t kFnvOffset = 0xCBF29CE484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001B3ULL;

void fnv_bytes(std::uint64_t& h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
}

void fnv_u64(std::uint64_t& h, std::uint64_t v) { fnv_bytes(&h, &v, sizeof(v)); }
void fnv_f64(std::uint64_t& h, double v) { fnv_bytes(&h, &v, sizeof(v)); }

std::string trim_cell(std::string s) {
  // surrounding whitespace, trailing CR, and one layer of double quotes
  auto issp = [](unsigned char c) { return std::isspace(c) != 0; };
  while (!s.empty() && issp(static_cast<unsigned char>(s.back()))) s.pop_back();
  std::size_t b = 0;
  while (b < s.size() && issp(static_cast<unsigned char>(s[b]))) ++b;
  s.erase(0, b);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') {
    s = s.substr(1, s.size() - 2);
  }
  return s;
}

bool is_missing_marker(const std::string& cell) {
  if (cell.empty()) return true;
  std::string low(cell);
  std::transform(low.begin(), low.end(), low.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return low == "na" || low == "nan";
}

bool parse_double(const std::string& cell, double& out) {
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(trim_cell(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  cells.push_back(trim_cell(cur));
  return cells;
}

}  // namespace

TimeSeriesDataset load_csv(const CsvSpec& spec) {
  std::ifstream in(spec.path);
  if (!in) throw DataError("cannot open CSV: " + spec.path);

  std::string line;
  if (!std::getline(in, line)) throw DataError("CSV has no header: " + spec.path);
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) {
    line.erase(0, 3);  // UTF-8 BOM
  }
  const std::vector<std::string> header = split_line(line);

  auto column_index = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
      throw DataError("column '" + name + "' not found in " + spec.path);
    }
    return static_cast<std::size_t>(it - header.begin());
  };

  const std::size_t target_idx = column_index(spec.target_column);
  std::size_t timestamp_idx = std::numeric_limits<std::size_t>::max();
  if (!spec.timestamp_column.empty()) timestamp_idx = column_index(spec.timestamp_column);

  std::vector<std::size_t> feature_idx;
  TimeSeriesDataset data;
  if (spec.feature_columns.empty()) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (i == target_idx || i == timestamp_idx) continue;
      feature_idx.push_back(i);
      data.feature_names.push_back(header[i]);
    }
  } else {
    for (const auto& name : spec.feature_columns) {
      feature_idx.push_back(column_index(name));
      data.feature_names.push_back(name);
    }
  }
  const std::size_t d = feature_idx.size();
  if (d == 0) throw DataError("no feature columns selected from " + spec.path);

  data.name = spec.path;
  data.target_name = spec.target_column;

  std::vector<double> xdata;
  std::vector<double> ydata;
  std::vector<std::uint8_t> xmask, ymask;
  bool any_missing = false;
  bool timestamps_monotone = true;
  std::string prev_timestamp;
  double prev_timestamp_num = -std::numeric_limits<double>::infinity();
  bool timestamps_numeric = true;

  std::size_t file_line = 1;
  while (std::getline(in, line)) {
    ++file_line;
    if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
    const std::vector<std::string> cells = split_line(line);
    if (cells.size() != header.size()) {
      throw DataError(spec.path + ":" + std::to_string(file_line) + ": expected " +
                      std::to_string(header.size()) + " cells, got " +
                      std::to_string(cells.size()));
    }
    auto read_cell = [&](std::size_t idx, double& out) -> bool {
      const std::string& cell = cells[idx];
      if (is_missing_marker(cell)) return false;
      if (!parse_double(cell, out)) {
        throw DataError(spec.path + ":" + std::to_string(file_line) + ": cannot parse '" +
                        cell + "' in column '" + header[idx] + "'");
      }
      return true;
    };

    for (std::size_t j = 0; j < d; ++j) {
      double v = 0.0;
      const bool present = read_cell(feature_idx[j], v);
      xdata.push_back(present ? v : 0.0);
      xmask.push_back(present ? 0 : 1);
      any_missing = any_missing || !present;
    }
    {
      double v = 0.0;
      const bool present = read_cell(target_idx, v);
      ydata.push_back(present ? v : 0.0);
      ymask.push_back(present ? 0 : 1);
      any_missing = any_missing || !present;
    }
    if (timestamp_idx != std::numeric_limits<std::size_t>::max()) {
      const std::string& ts = cells[timestamp_idx];
      double ts_num = 0.0;
      if (timestamps_numeric && parse_double(ts, ts_num)) {
        if (ts_num < prev_timestamp_num) timestamps_monotone = false;
        prev_timestamp_num = ts_num;
      } else {
        timestamps_numeric = false;
        if (!prev_timestamp.empty() && ts < prev_timestamp) timestamps_monotone = false;
        prev_timestamp = ts;
      }
    }
  }

  const std::size_t rows = ydata.size();
  if (rows == 0) throw DataError("CSV has no data rows: " + spec.path);
  data.X.rows = rows;
  data.X.cols = d;
  data.X.data = std::move(xdata);
  data.y.data = std::move(ydata);
  if (any_missing) {
    data.x_missing = std::move(xmask);
    data.y_missing = std::move(ymask);
  }
  if (!timestamps_monotone) {
    data.warnings.push_back("timestamp column '" + spec.timestamp_column +
                            "' is not monotone; rows are used in file order");
  }
  return data;
}

double ScalerState::transform_x(std::size_t col, double v) const {
  const double range = x_max[col] - x_min[col];
  return range > 0.0 ? (v - x_min[col]) / range : 0.0;
}

double ScalerState::inverse_x(std::size_t col, double v) const {
  return x_min[col] + v * (x_max[col] - x_min[col]);
}

double ScalerState::transform_y(double v) const {
  const double range = y_max - y_min;
  return range > 0.0 ? (v - y_min) / range : 0.0;
}

double ScalerState::inverse_y(double v) const { return y_min + v * (y_max - y_min); }

ScalerState fit_scaler(const TimeSeriesDataset& data, std::size_t train_end) {
  if (train_end == 0 || train_end > data.length()) {
    throw DataError("fit_scaler: train_end " + std::to_string(train_end) +
                    " out of range for " + std::to_string(data.length()) + " rows");
  }
  const std::size_t d = data.dim();
  ScalerState s;
  s.x_min.assign(d, std::numeric_limits<double>::infinity());
  s.x_max.assign(d, -std::numeric_limits<double>::infinity());
  s.y_min = std::numeric_limits<double>::infinity();
  s.y_max = -std::numeric_limits<double>::infinity();

  for (std::size_t t = 0; t < train_end; ++t) {
    for (std::size_t j = 0; j < d; ++j) {
      if (!data.x_missing.empty() && data.x_missing[t * d + j]) continue;
      const double v = data.X.at(t, j);
      s.x_min[j] = std::min(s.x_min[j], v);
      s.x_max[j] = std::max(s.x_max[j], v);
    }
    if (!data.y_missing.empty() && data.y_missing[t]) continue;
    s.y_min = std::min(s.y_min, data.y[t]);
    s.y_max = std::max(s.y_max, data.y[t]);
  }
  // Columns with no observed training value behave like constants.
  for (std::size_t j = 0; j < d; ++j) {
    if (!(s.x_min[j] <= s.x_max[j])) s.x_min[j] = s.x_max[j] = 0.0;
  }
  if (!(s.y_min <= s.y_max)) s.y_min = s.y_max = 0.0;
  return s;
}

void transform_in_place(TimeSeriesDataset& data, const ScalerState& scaler) {
  if (scaler.x_min.size() != data.dim()) {
    throw DataError("transform: scaler has " + std::to_string(scaler.x_min.size()) +
                    " columns, dataset has " + std::to_string(data.dim()));
  }
  const std::size_t d = data.dim();
  for (std::size_t t = 0; t < data.length(); ++t) {
    for (std::size_t j = 0; j < d; ++j) {
      if (!data.x_missing.empty() && data.x_missing[t * d + j]) continue;
      data.X.at(t, j) = scaler.transform_x(j, data.X.at(t, j));
    }
    if (!data.y_missing.empty() && data.y_missing[t]) continue;
    data.y[t] = scaler.transform_y(data.y[t]);
  }
}

void fill_missing(TimeSeriesDataset& data, FillStrategy strategy) {
  (void)strategy;  // single strategy
  if (!data.has_missing()) return;
  const std::size_t d = data.dim();
  const std::size_t T = data.length();

  if (!data.x_missing.empty()) {
    for (std::size_t j = 0; j < d; ++j) {
      bool seen = false;
      bool any_observed = false;
      double last = 0.0;
      for (std::size_t t = 0; t < T; ++t) {
        if (data.x_missing[t * d + j]) {
          data.X.at(t, j) = seen ? last : 0.0;
        } else {
          last = data.X.at(t, j);
          seen = true;
          any_observed = true;
        }
      }
      if (!any_observed) {
        data.warnings.push_back("column '" + data.feature_names[j] +
                                "' has no observed values; filled with zeros");
      }
    }
  }
  if (!data.y_missing.empty()) {
    bool seen = false;
    bool any_observed = false;
    double last = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
      if (data.y_missing[t]) {
        data.y[t] = seen ? last : 0.0;
      } else {
        last = data.y[t];
        seen = true;
        any_observed = true;
      }
    }
    if (!any_observed) {
      data.warnings.push_back("target '" + data.target_name +
                              "' has no observed values; filled with zeros");
    }
  }
  data.x_missing.clear();
  data.y_missing.clear();
}

SplitBoundaries split_boundaries(std::size_t total_rows, const SplitSpec& split) {
  if (split.train_fraction <= 0.0 || split.train_fraction > 1.0 ||
      split.val_fraction < 0.0 || split.val_fraction >= 1.0) {
    throw DataError("split fractions out of range");
  }
  const auto train_total =
      static_cast<std::size_t>(std::floor(static_cast<double>(total_rows) * split.train_fraction));
  const auto n_val =
      static_cast<std::size_t>(std::floor(static_cast<double>(train_total) * split.val_fraction));
  SplitBoundaries b;
  b.train_end = train_total - n_val;
  b.val_end = train_total;
  return b;
}

std::vector<WindowInstance> make_windows_segment(const TimeSeriesDataset& data,
                                                 std::size_t begin, std::size_t end,
                                                 std::size_t w, std::size_t stride) {
  if (w < 2) throw DataError("make_windows: w must be >= 2");
  if (stride < 1) throw DataError("make_windows: stride must be >= 1");
  if (end > data.length() || begin > end) throw DataError("make_windows: bad segment");
  std::vector<WindowInstance> out;
  if (begin == end) return out;
  if (end - begin < w) {
    throw DataError("make_windows: segment [" + std::to_string(begin) + ", " +
                    std::to_string(end) + ") is shorter than w=" + std::to_string(w));
  }
  const std::size_t d = data.dim();
  for (std::size_t t = begin + w - 1; t < end; t += stride) {
    WindowInstance win;
    win.xs.reserve(w);
    for (std::size_t s = t + 1 - w; s <= t; ++s) {
      Vec x(d);
      for (std::size_t j = 0; j < d; ++j) x.data[j] = data.X.at(s, j);
      win.xs.push_back(std::move(x));
    }
    for (std::size_t s = t + 1 - w; s < t; ++s) win.ys_context.push_back(data.y[s]);
    win.y_target = data.y[t];
    out.push_back(std::move(win));
  }
  return out;
}

SplitWindows make_windows(const TimeSeriesDataset& data, std::size_t w,
                          std::size_t stride, const SplitSpec& split) {
  const SplitBoundaries b = split_boundaries(data.length(), split);
  SplitWindows sw;
  sw.train = make_windows_segment(data, 0, b.train_end, w, stride);
  sw.validation = make_windows_segment(data, b.train_end, b.val_end, w, stride);
  sw.test = make_windows_segment(data, b.val_end, data.length(), w, stride);
  return sw;
}

std::uint64_t hash_windows(const std::vector<WindowInstance>& windows) {
  std::uint64_t h = kFnvOffset;
  fnv_u64(h, windows.size());
  for (const auto& win : windows) {
    fnv_u64(h, win.w());
    for (const auto& x : win.xs) {
      fnv_u64(h, x.len());
      for (double v : x.data) fnv_f64(h, v);
    }
    for (double v : win.ys_context) fnv_f64(h, v);
    fnv_f64(h, win.y_target);
  }
  return h;
}

void save_windows_binary(const std::vector<WindowInstance>& windows,
                         const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path);
  const char magic[8] = {'V', 'R', 'N', 'N', 'W', 'I', 'N', '1'};
  out.write(magic, sizeof(magic));
  const std::uint64_t count = windows.size();
  out.write(reinterpret_cast<const char*>(&count), sizeof(count));
  for (const auto& win : windows) {
    const std::uint32_t w = static_cast<std::uint32_t>(win.w());
    const std::uint32_t d = static_cast<std::uint32_t>(win.xs.empty() ? 0 : win.xs[0].len());
    out.write(reinterpret_cast<const char*>(&w), sizeof(w));
    out.write(reinterpret_cast<const char*>(&d), sizeof(d));
    for (const auto& x : win.xs) {
      out.write(reinterpret_cast<const char*>(x.data.data()),
                static_cast<std::streamsize>(x.len() * sizeof(double)));
    }
    out.write(reinterpret_cast<const char*>(win.ys_context.data()),
              static_cast<std::streamsize>(win.ys_context.size() * sizeof(double)));
    out.write(reinterpret_cast<const char*>(&win.y_target), sizeof(double));
  }
  if (!out) throw DataError("write failed: " + path);
}

std::vector<WindowInstance> load_windows_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open window cache: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, "VRNNWIN1", 8) != 0) {
    throw DataError("not a window cache file: " + path);
  }
  std::uint64_t count = 0;
  in.read(reinterpret_cast<char*>(&count), sizeof(count));
  std::vector<WindowInstance> out;
  out.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    std::uint32_t w = 0, d = 0;
    in.read(reinterpret_cast<char*>(&w), sizeof(w));
    in.read(reinterpret_cast<char*>(&d), sizeof(d));
    if (!in) throw DataError("window cache truncated: " + path);
    WindowInstance win;
    for (std::uint32_t s = 0; s < w; ++s) {
      Vec x(d);
      in.read(reinterpret_cast<char*>(x.data.data()),
              static_cast<std::streamsize>(d * sizeof(double)));
      win.xs.push_back(std::move(x));
    }
    win.ys_context.resize(w > 0 ? w - 1 : 0);
    in.read(reinterpret_cast<char*>(win.ys_context.data()),
            static_cast<std::streamsize>(win.ys_context.size() * sizeof(double)));
    in.read(reinterpret_cast<char*>(&win.y_target), sizeof(double));
    if (!in) throw DataError("window cache truncated: " + path);
    out.push_back(std::move(win));
  }
  return out;
}

std::string window_cache_key(std::uint64_t dataset_hash, std::size_t w,
                             std::size_t stride, const SplitSpec& split) {
  std::ostringstream os;
  os << "ds" << std::hex << dataset_hash << std::dec << "_w" << w << "_s" << stride
     << "_tr" << split.train_fraction << "_va" << split.val_fraction;
  return os.str();
}

std::uint64_t hash_dataset(const TimeSeriesDataset& data) {
  std::uint64_t h = kFnvOffset;
  fnv_u64(h, data.length());
  fnv_u64(h, data.dim());
  for (double v : data.X.data) fnv_f64(h, v);
  for (double v : data.y.data) fnv_f64(h, v);
  fnv_bytes(&h, data.x_missing.data(), data.x_missing.size());
  fnv_bytes(&h, data.y_missing.data(), data.y_missing.size());
  return h;
}

void SyntheticSpec::validate() const {
  if (length == 0 || d == 0) throw DataError("SyntheticSpec: length and d must be >= 1");
  if (regimes.empty()) throw DataError("SyntheticSpec: needs at least one regime");
  std::size_t expect = 0;
  for (const auto& r : regimes) {
    if (r.t_begin != expect || r.t_end <= r.t_begin) {
      throw DataError("SyntheticSpec: regime segments must tile [0, length)");
    }
    if (r.beta.len() != d) {
      throw DataError("SyntheticSpec: regime beta has length " +
                      std::to_string(r.beta.len()) + ", expected " + std::to_string(d));
    }
    if (r.sigma < 0.0) throw DataError("SyntheticSpec: sigma must be >= 0");
    expect = r.t_end;
  }
  if (expect != length) {
    throw DataError("SyntheticSpec: regime segments must tile [0, length)");
  }
}

TimeSeriesDataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);

  TimeSeriesDataset data;
  data.name = spec.name;
  data.target_name = "y";
  for (std::size_t j = 0; j < spec.d; ++j) data.feature_names.push_back("x" + std::to_string(j));
  data.X = Mat(spec.length, spec.d);
  data.y = Vec(spec.length);

  std::size_t regime_idx = 0;
  double y_prev = 0.0;
  for (std::size_t t = 0; t < spec.length; ++t) {
    while (t >= spec.regimes[regime_idx].t_end) ++regime_idx;
    const RegimeSegment& seg = spec.regimes[regime_idx];

    double dot_bx = 0.0;
    for (std::size_t j = 0; j < spec.d; ++j) {
      const double x = rng.uniform01();
      data.X.at(t, j) = x;
      dot_bx += (seg.beta[j] + spec.drift_rate * static_cast<double>(t)) * x;
    }
    const double noise = rng.gaussian(0.0, seg.sigma);  // exactly 0 when sigma is 0
    const double y = dot_bx + spec.ar_coeff * y_prev + noise;
    data.y[t] = y;
    y_prev = y;
  }

  std::ostringstream bounds;
  bounds << 0;
  for (const auto& r : spec.regimes) bounds << "," << r.t_end;
  data.meta["regime_boundaries"] = bounds.str();
  data.meta["seed"] = std::to_string(spec.seed);
  data.meta["ar_coeff"] = std::to_string(spec.ar_coeff);
  data.meta["drift_rate"] = std::to_string(spec.drift_rate);
  return data;
}

PreparedData prepare(TimeSeriesDataset data, const SplitSpec& split, std::size_t w,
                     std::size_t stride) {
  PreparedData out;
  out.bounds = split_boundaries(data.length(), split);
  // Scaling statistics come from the full chronological training segment,
  // including the rows later carved off for validation.
  out.scaler = fit_scaler(data, out.bounds.val_end);
  transform_in_place(data, out.scaler);
  fill_missing(data);
  out.windows = make_windows(data, w, stride, split);
  out.scaled = std::move(data);
  return out;
}

}  // namespace varnn
