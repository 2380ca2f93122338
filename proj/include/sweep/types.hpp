#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <vector>

namespace sweep {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using IndexSet = std::vector<int>;

inline constexpr double kActiveTol = 1e-9;   // default activity tolerance
inline constexpr double kRankTol = 1e-10;    // default rank tolerance

struct SweepError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw SweepError(msg);
}

inline bool contains_index(const IndexSet& s, int i) {
  for (int j : s)
    if (j == i) return true;
  return false;
}

}  // namespace sweep
