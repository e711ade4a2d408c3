#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <string>

#include "blur/vecmath.hpp"

namespace blur {

struct ValueGrad {
  double value;
  ParamVector gradient;
};

class Objective {
 public:
  virtual ~Objective() = default;

  virtual std::size_t dim() const = 0;
  virtual double value(const ParamVector& theta) const = 0;
  virtual ParamVector gradient(const ParamVector& theta) const = 0;
  // Overridden where value and gradient share work.
  virtual ValueGrad evaluate(const ParamVector& theta) const {
    return {value(theta), gradient(theta)};
  }

 protected:
  void check_dim(const ParamVector& theta) const;
};

// Lower level `forget` (f), upper level `retain` (r).
struct BilevelProblem {
  BilevelProblem(std::shared_ptr<const Objective> forget, std::shared_ptr<const Objective> retain,
                 std::optional<double> known_lower_opt = std::nullopt, std::string name = {});

  std::size_t dim() const { return forget->dim(); }

  std::shared_ptr<const Objective> forget;
  std::shared_ptr<const Objective> retain;
  std::optional<double> known_lower_opt;
  std::string name;
};

}  // namespace blur
