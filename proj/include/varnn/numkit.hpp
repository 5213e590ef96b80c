#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace varnn {

/// Thrown when operand shapes do not line up; the message names both sides.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown when a public operation would leave non-finite values behind.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dense vector of 64-bit reals.
struct Vec {
  std::vector<double> data;

  Vec() = default;
  explicit Vec(std::size_t n, double fill = 0.0) : data(n, fill) {}
  Vec(std::initializer_list<double> xs) : data(xs) {}

  std::size_t len() const { return data.size(); }
  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }
  bool all_finite() const;
};

/// Dense row-major matrix of 64-bit reals: data[r * cols + c] is entry (r, c).
/// Row-major order is part of the serialized format, so golden files stay portable.
struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Mat() = default;
  Mat(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }
  bool all_finite() const;

  static Mat identity(std::size_t n);
  static Mat from_rows(std::initializer_list<std::initializer_list<double>> rows);
};

/// Counts multiply-accumulates performed by matvec/affine on this thread while
/// the scope is alive. One scope may be active per thread at a time.
class MacCounterScope {
 public:
  MacCounterScope();
  ~MacCounterScope();
  MacCounterScope(const MacCounterScope&) = delete;
  MacCounterScope& operator=(const MacCounterScope&) = delete;

  std::uint64_t count() const { return count_; }

 private:
  std::uint64_t count_ = 0;
};

/// result[i] = sum_j m(i,j) * v[j], accumulated over ascending j.
/// The fixed accumulation order keeps traces bit-reproducible.
Vec matvec(const Mat& m, const Vec& v);

/// matvec(w, v), then + b elementwise, in that order.
Vec affine(const Mat& w, const Vec& v, const Vec& b);

/// result[j] = sum_i m(i,j) * v[i], i.e. transpose(m) * v, ascending i.
Vec matvec_transposed(const Mat& m, const Vec& v);

double dot(const Vec& a, const Vec& b);
void add_in_place(Vec& dst, const Vec& src);
void add_scaled(Vec& dst, double s, const Vec& src);
/// dst += a * transpose(b)
void add_outer(Mat& dst, const Vec& a, const Vec& b);

enum class Activation { Relu, Tanh, Identity };

Activation activation_from_string(std::string_view s);
std::string_view to_string(Activation a);

/// Elementwise relu / tanh / identity.
Vec activation(Activation kind, const Vec& v);

/// Derivative of the activation expressed through its output value:
/// relu -> out > 0 ? 1 : 0 (subgradient 0 at the kink), tanh -> 1 - out^2,
/// identity -> 1.
double activation_derivative_from_output(Activation kind, double out);

/// Deterministic splitmix64 generator. The state advances by
/// 0x9E3779B97F4A7C15 per draw and the output runs through the finalizer
///   z ^= z >> 30; z *= 0xBF58476D1CE4E5B9;
///   z ^= z >> 27; z *= 0x94D049BB133111EB;
///   z ^= z >> 31;
/// uniform01() takes the top 53 bits: (next >> 11) * 2^-53, in [0, 1).
/// Equal seeds produce equal streams on every platform.
struct Rng {
  std::uint64_t state;

  explicit Rng(std::uint64_t seed) : state(seed) {}

  std::uint64_t next_u64();
  double uniform01();
  double uniform(double lo, double hi);
  /// Box-Muller; consumes exactly two draws per call.
  double gaussian(double mean, double stddev);
  /// next_u64() % n. The modulo bias is < n / 2^64, irrelevant at our sizes.
  std::uint64_t next_below(std::uint64_t n);
};

/// Entries uniform in [-L, L] with L = sqrt(6 / (rows + cols)), drawn in
/// row-major order from the given stream.
Mat glorot_init(Rng& rng, std::size_t rows, std::size_t cols);

}  // namespace varnn
