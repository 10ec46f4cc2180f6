#pragma once

#include <cmath>
#include <limits>
#include <span>

namespace prodest {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// Streaming max-shifted log-sum-exp. Accepts -inf terms (exact zeros).
class LogSumExp {
 public:
  void add(double log_term) noexcept {
    if (log_term == kNegInf) return;
    if (log_term <= max_) {
      sum_ += std::exp(log_term - max_);
    } else {
      sum_ = sum_ * std::exp(max_ - log_term) + 1.0;
      max_ = log_term;
    }
  }

  /// log of the accumulated sum; -inf when every term was -inf.
  double value() const noexcept {
    return max_ == kNegInf ? kNegInf : max_ + std::log(sum_);
  }

  double shift() const noexcept { return max_; }
  /// Accumulated sum in units of exp(shift()).
  double shifted_sum() const noexcept { return sum_; }

 private:
  double max_ = kNegInf;
  double sum_ = 0.0;
};

inline double log_sum_exp(std::span<const double> log_terms) noexcept {
  LogSumExp acc;
  for (double x : log_terms) acc.add(x);
  return acc.value();
}

}  // namespace prodest
