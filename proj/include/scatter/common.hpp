#pragma once

#include <complex>
#include <cstdio>
#include <stdexcept>
#include <string>

namespace scatter {

using Complex = std::complex<double>;

inline constexpr double kPi = 3.141592653589793238462643383279502884;

/// Wavenumber convention: lengths are measured in wavelengths, so k = 2*pi.
inline constexpr double kWavenumber = 2.0 * kPi;

/// Born order sentinel: orders >= 1 are finite truncations, kFullOrder
/// selects the exact (resolvent) forward model.
inline constexpr int kFullOrder = 0;

class singular_operator_error : public std::runtime_error {
public:
  singular_operator_error(std::string what, std::size_t support_size, double rcond)
      : std::runtime_error(std::move(what)), support_size_(support_size), rcond_(rcond) {}
  std::size_t support_size() const { return support_size_; }
  double condition_estimate() const { return rcond_; }

private:
  std::size_t support_size_;
  double rcond_;
};

class divergence_error : public std::runtime_error {
public:
  divergence_error(std::string what, int iteration)
      : std::runtime_error(std::move(what)), iteration_(iteration) {}
  int iteration() const { return iteration_; }

private:
  int iteration_;
};

class undefined_coherence_error : public std::domain_error {
public:
  using std::domain_error::domain_error;
};

/// Formats a double with enough digits to round-trip exactly.
inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

}  // namespace scatter
