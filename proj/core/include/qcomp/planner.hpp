#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qcomp/model.hpp"

namespace qcomp {

inline constexpr double kDefaultStopThreshold = 0.001;
inline constexpr double kPlanTieTolerance = 1e-12;

struct PlanStep {
  Index assay = 0;
  std::string name;
  double marginal_goc = 0.0;
  // Gain of certainty on the target given everything observed so far,
  // including the assays observed before planning started.
  double accumulated_goc = 0.0;
};

// Variance reduction of `target` from observing `observed` (standardized units).
double target_goc(const Eigen::MatrixXd& sigma, Index target, std::span<const Index> observed);

// Greedy experiment order for `target`: each step adds the candidate with the
// largest gain, ties to the lowest index, until the best gain drops below
// stop_threshold or candidates run out.
std::vector<PlanStep> greedy_plan(const ModelParams& params, Index target,
                                  std::vector<Index> candidates,
                                  std::vector<Index> already_observed,
                                  double stop_threshold = kDefaultStopThreshold);

void write_plan_csv(std::ostream& out, const std::vector<PlanStep>& plan);
void print_plan_table(std::ostream& out, const std::vector<PlanStep>& plan,
                      const std::string& target_name);

}  // namespace qcomp
