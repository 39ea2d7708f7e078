#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace stddp {

using Vector = std::vector<double>;

// Row-major dense matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> flat() { return data_; }
  std::span<const double> flat() const { return data_; }

  void fill(double value);

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// y = W x. Throws ShapeMismatch when cols(W) != len(x).
Vector matvec(const Matrix& w, std::span<const double> x);

// y += W x, no allocation.
void matvec_accumulate(const Matrix& w, std::span<const double> x, std::span<double> y);

// y += Wᵀ x.
void matvec_transposed_accumulate(const Matrix& w, std::span<const double> x,
                                  std::span<double> y);

// W += scale · a bᵀ.
void add_outer(Matrix& w, std::span<const double> a, std::span<const double> b,
               double scale = 1.0);

// Max-shifted softmax; output sums to one.
Vector stable_softmax(std::span<const double> z);

double log_sum_exp(std::span<const double> z);

// The hyperbolic tangent activation, f(x) = (e^x - e^-x) / (e^x + e^-x).
inline double activation(double x) { return std::tanh(x); }

// Deterministic random stream. The engine is std::mt19937_64, whose output
// sequence is fixed by the C++ standard; the conversions to doubles, bounded
// integers and permutations below are implemented here rather than through
// <random> distributions, whose algorithms vary between standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed), seed_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform on [0, n), rejection sampling, n >= 1.
  std::uint64_t below(std::uint64_t n);

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  // Independent child stream derived from this stream's seed and `stream_id`
  // (splitmix64 mixing). Does not advance this stream.
  Rng child(std::uint64_t stream_id) const;

 private:
  std::mt19937_64 engine_;
  std::uint64_t seed_;
};

double glorot_limit(std::size_t fan_in, std::size_t fan_out);

// rows x cols matrix with entries i.i.d. uniform on [-L, L],
// L = sqrt(6 / (fan_in + fan_out)).
Matrix glorot_uniform(Rng& rng, std::size_t fan_in, std::size_t fan_out, std::size_t rows,
                      std::size_t cols);

}  // namespace stddp
