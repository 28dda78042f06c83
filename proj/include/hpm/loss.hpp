#pragma once

#include "hpm/hankel.hpp"

namespace hpm {

/// Nonnegative smooth loss f with Lipschitz gradient.
class SmoothLoss {
 public:
  virtual ~SmoothLoss() = default;
  virtual double value(const Vector& y) const = 0;
  virtual Vector gradient(const Vector& y) const = 0;
};

}  // namespace hpm
