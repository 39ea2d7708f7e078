#include "stddp/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "stddp/error.hpp"

namespace stddp {

namespace {

std::string dims(std::size_t r, std::size_t c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

void Matrix::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

Vector matvec(const Matrix& w, std::span<const double> x) {
  Vector y(w.rows(), 0.0);
  matvec_accumulate(w, x, y);
  return y;
}

void matvec_accumulate(const Matrix& w, std::span<const double> x, std::span<double> y) {
  if (w.cols() != x.size() || w.rows() != y.size()) {
    throw ShapeMismatch("matvec " + dims(w.rows(), w.cols()) + " by " +
                        std::to_string(x.size()) + " into " + std::to_string(y.size()));
  }
  for (std::size_t r = 0; r < w.rows(); ++r) {
    auto row = w.row(r);
    double acc = 0.0;
    for (std::size_t c = 0; c < row.size(); ++c) acc += row[c] * x[c];
    y[r] += acc;
  }
}

void matvec_transposed_accumulate(const Matrix& w, std::span<const double> x,
                                  std::span<double> y) {
  if (w.rows() != x.size() || w.cols() != y.size()) {
    throw ShapeMismatch("transposed matvec " + dims(w.rows(), w.cols()) + " by " +
                        std::to_string(x.size()));
  }
  for (std::size_t r = 0; r < w.rows(); ++r) {
    const double xr = x[r];
    if (xr == 0.0) continue;
    auto row = w.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) y[c] += row[c] * xr;
  }
}

void add_outer(Matrix& w, std::span<const double> a, std::span<const double> b, double scale) {
  if (w.rows() != a.size() || w.cols() != b.size()) {
    throw ShapeMismatch("outer product " + std::to_string(a.size()) + "x" +
                        std::to_string(b.size()) + " into " + dims(w.rows(), w.cols()));
  }
  for (std::size_t r = 0; r < a.size(); ++r) {
    const double ar = scale * a[r];
    if (ar == 0.0) continue;
    auto row = w.row(r);
    for (std::size_t c = 0; c < b.size(); ++c) row[c] += ar * b[c];
  }
}

Vector stable_softmax(std::span<const double> z) {
  Vector out(z.size());
  if (z.empty()) return out;
  const double top = *std::max_element(z.begin(), z.end());
  double total = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    out[i] = std::exp(z[i] - top);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

double log_sum_exp(std::span<const double> z) {
  const double top = *std::max_element(z.begin(), z.end());
  double total = 0.0;
  for (double v : z) total += std::exp(v - top);
  return top + std::log(total);
}

double Rng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::below(std::uint64_t n) {
  // Discard the incomplete top bucket.
  const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % n);
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % n;
}

Rng Rng::child(std::uint64_t stream_id) const {
  return Rng(splitmix64(seed_ ^ splitmix64(stream_id + 1)));
}

double glorot_limit(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

Matrix glorot_uniform(Rng& rng, std::size_t fan_in, std::size_t fan_out, std::size_t rows,
                      std::size_t cols) {
  if (fan_in == 0 || fan_out == 0) throw ShapeMismatch("glorot fans must be positive");
  const double limit = glorot_limit(fan_in, fan_out);
  Matrix m(rows, cols);
  for (double& v : m.flat()) v = rng.uniform(-limit, limit);
  return m;
}

}  // namespace stddp
