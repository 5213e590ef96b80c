#include "varnn/numkit.hpp"

#include <cmath>

namespace varnn {

namespace {

thread_local std::uint64_t* g_mac_sink = nullptr;

inline void count_macs(std::size_t n) {
  if (g_mac_sink != nullptr) {
    *g_mac_sink += static_cast<std::uint64_t>(n);
  }
}

bool finite_range(const std::vector<double>& xs) {
  for (double x : xs) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

}  // namespace

bool Vec::all_finite() const { return finite_range(data); }
bool Mat::all_finite() const { return finite_range(data); }

Mat Mat::identity(std::size_t n) {
  Mat m(n, n, 0.0);
  for (std::size_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
  return m;
}

Mat Mat::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  Mat m(rows.size(), rows.size() == 0 ? 0 : rows.begin()->size());
  std::size_t r = 0;
  for (const auto& row : rows) {
    if (row.size() != m.cols) {
      throw ShapeError("Mat::from_rows: ragged row " + std::to_string(r) +
                       " has " + std::to_string(row.size()) + " entries, expected " +
                       std::to_string(m.cols));
    }
    std::size_t c = 0;
    for (double x : row) m.at(r, c++) = x;
    ++r;
  }
  return m;
}

MacCounterScope::MacCounterScope() {
  if (g_mac_sink != nullptr) {
    throw std::logic_error("MacCounterScope: a counter is already active on this thread");
  }
  g_mac_sink = &count_;
}

MacCounterScope::~MacCounterScope() { g_mac_sink = nullptr; }

Vec matvec(const Mat& m, const Vec& v) {
  if (m.cols != v.len()) {
    throw ShapeError("matvec: matrix has " + std::to_string(m.cols) +
                     " cols but vector has length " + std::to_string(v.len()));
  }
  Vec out(m.rows);
  for (std::size_t r = 0; r < m.rows; ++r) {
    double acc = 0.0;
    const double* row = m.data.data() + r * m.cols;
    for (std::size_t c = 0; c < m.cols; ++c) acc += row[c] * v.data[c];
    out.data[r] = acc;
  }
  count_macs(m.rows * m.cols);
  if (!out.all_finite()) throw NumericError("matvec produced a non-finite value");
  return out;
}

Vec affine(const Mat& w, const Vec& v, const Vec& b) {
  if (b.len() != w.rows) {
    throw ShapeError("affine: bias has length " + std::to_string(b.len()) +
                     " but matrix has " + std::to_string(w.rows) + " rows");
  }
  Vec out = matvec(w, v);
  for (std::size_t i = 0; i < out.len(); ++i) out.data[i] += b.data[i];
  if (!out.all_finite()) throw NumericError("affine produced a non-finite value");
  return out;
}

Vec matvec_transposed(const Mat& m, const Vec& v) {
  if (m.rows != v.len()) {
    throw ShapeError("matvec_transposed: matrix has " + std::to_string(m.rows) +
                     " rows but vector has length " + std::to_string(v.len()));
  }
  Vec out(m.cols, 0.0);
  for (std::size_t r = 0; r < m.rows; ++r) {
    const double* row = m.data.data() + r * m.cols;
    const double vr = v.data[r];
    for (std::size_t c = 0; c < m.cols; ++c) out.data[c] += row[c] * vr;
  }
  if (!out.all_finite()) throw NumericError("matvec_transposed produced a non-finite value");
  return out;
}

double dot(const Vec& a, const Vec& b) {
  if (a.len() != b.len()) {
    throw ShapeError("dot: lengths " + std::to_string(a.len()) + " vs " +
                     std::to_string(b.len()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.len(); ++i) acc += a.data[i] * b.data[i];
  return acc;
}

void add_in_place(Vec& dst, const Vec& src) {
  if (dst.len() != src.len()) {
    throw ShapeError("add_in_place: lengths " + std::to_string(dst.len()) + " vs " +
                     std::to_string(src.len()));
  }
  for (std::size_t i = 0; i < dst.len(); ++i) dst.data[i] += src.data[i];
}

void add_scaled(Vec& dst, double s, const Vec& src) {
  if (dst.len() != src.len()) {
    throw ShapeError("add_scaled: lengths " + std::to_string(dst.len()) + " vs " +
                     std::to_string(src.len()));
  }
  for (std::size_t i = 0; i < dst.len(); ++i) dst.data[i] += s * src.data[i];
}

void add_outer(Mat& dst, const Vec& a, const Vec& b) {
  if (dst.rows != a.len() || dst.cols != b.len()) {
    throw ShapeError("add_outer: matrix is " + std::to_string(dst.rows) + "x" +
                     std::to_string(dst.cols) + " but vectors have lengths " +
                     std::to_string(a.len()) + " and " + std::to_string(b.len()));
  }
  for (std::size_t r = 0; r < dst.rows; ++r) {
    double* row = dst.data.data() + r * dst.cols;
    const double ar = a.data[r];
    for (std::size_t c = 0; c < dst.cols; ++c) row[c] += ar * b.data[c];
  }
}

Activation activation_from_string(std::string_view s) {
  if (s == "relu") return Activation::Relu;
  if (s == "tanh") return Activation::Tanh;
  if (s == "identity") return Activation::Identity;
  throw std::invalid_argument("unknown activation: " + std::string(s));
}

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::Relu: return "relu";
    case Activation::Tanh: return "tanh";
    case Activation::Identity: return "identity";
  }
  return "?";
}

Vec activation(Activation kind, const Vec& v) {
  Vec out(v.len());
  switch (kind) {
    case Activation::Relu:
      for (std::size_t i = 0; i < v.len(); ++i)
        out.data[i] = v.data[i] > 0.0 ? v.data[i] : 0.0;
      break;
    case Activation::Tanh:
      for (std::size_t i = 0; i < v.len(); ++i) out.data[i] = std::tanh(v.data[i]);
      break;
    case Activation::Identity:
      out.data = v.data;
      break;
  }
  return out;
}

double activation_derivative_from_output(Activation kind, double out) {
  switch (kind) {
    case Activation::Relu: return out > 0.0 ? 1.0 : 0.0;
    case Activation::Tanh: return 1.0 - out * out;
    case Activation::Identity: return 1.0;
  }
  return 0.0;
}

std::uint64_t Rng::next_u64() {
  state += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double Rng::uniform01() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

double Rng::gaussian(double mean, double stddev) {
  // u1 in (0, 1] so the log stays finite.
  const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  const double u2 = uniform01();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 6.283185307179586476925286766559 * u2;
  return mean + stddev * r * std::cos(theta);
}

std::uint64_t Rng::next_below(std::uint64_t n) { return next_u64() % n; }

Mat glorot_init(Rng& rng, std::size_t rows, std::size_t cols) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Mat m(rows, cols);
  for (std::size_t i = 0; i < m.data.size(); ++i) {
    m.data[i] = rng.uniform(-limit, limit);
  }
  return m;
}

}  // namespace varnn
