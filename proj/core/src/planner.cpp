#include "qcomp/planner.hpp"

#include <algorithm>
#include <iomanip>
#include <ostream>
#include <set>

#include "csv.hpp"
#include "qcomp/error.hpp"
#include "qcomp/gaussian.hpp"

namespace qcomp {

double target_goc(const Eigen::MatrixXd& sigma, Index target, std::span<const Index> observed) {
  if (observed.empty()) return 0.0;
  const std::vector<Index> tgt{target};
  const Eigen::MatrixXd sigma_oo = gather_block(sigma, observed, observed);
  const Eigen::VectorXd cross = gather_block(sigma, observed, tgt).col(0);
  const BlockFactor factor(sigma_oo);
  return std::max(0.0, cross.dot(factor.solve(cross)));
}

std::vector<PlanStep> greedy_plan(const ModelParams& params, Index target,
                                  std::vector<Index> candidates,
                                  std::vector<Index> already_observed, double stop_threshold) {
  const Index p = params.dim();
  auto check_index = [p](Index i) {
    if (i < 0 || i >= p) throw InputError("assay index " + std::to_string(i) + " out of range");
  };
  check_index(target);
  if (!(stop_threshold >= 0.0)) throw InputError("stop threshold must be >= 0");
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  std::sort(already_observed.begin(), already_observed.end());
  already_observed.erase(std::unique(already_observed.begin(), already_observed.end()),
                         already_observed.end());
  for (Index c : candidates) check_index(c);
  for (Index o : already_observed) check_index(o);
  if (std::binary_search(already_observed.begin(), already_observed.end(), target)) {
    throw InputError("target assay '" + params.assay_names[static_cast<std::size_t>(target)] +
                     "' is already observed");
  }
  if (std::binary_search(candidates.begin(), candidates.end(), target)) {
    throw InputError("target assay cannot be a candidate");
  }
  for (Index c : candidates) {
    if (std::binary_search(already_observed.begin(), already_observed.end(), c)) {
      throw InputError("candidate assay '" + params.assay_names[static_cast<std::size_t>(c)] +
                       "' is already observed");
    }
  }

  const Eigen::MatrixXd sigma = params.sigma();
  std::vector<Index> observed = already_observed;
  double current = target_goc(sigma, target, observed);
  std::vector<PlanStep> plan;
  std::vector<Index> remaining = candidates;

  while (!remaining.empty()) {
    std::size_t best = 0;
    double best_gain = -1.0;
    double best_total = current;
    for (std::size_t c = 0; c < remaining.size(); ++c) {
      std::vector<Index> trial = observed;
      trial.insert(std::upper_bound(trial.begin(), trial.end(), remaining[c]), remaining[c]);
      const double total = target_goc(sigma, target, trial);
      const double gain = std::max(0.0, total - current);
      // remaining is sorted, so a strict improvement keeps ties on the lowest index.
      if (gain > best_gain + kPlanTieTolerance) {
        best = c;
        best_gain = gain;
        best_total = total;
      }
    }
    if (best_gain < stop_threshold) break;
    const Index chosen = remaining[best];
    observed.insert(std::upper_bound(observed.begin(), observed.end(), chosen), chosen);
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(best));
    current = std::max(current, best_total);
    plan.push_back({chosen, params.assay_names[static_cast<std::size_t>(chosen)], best_gain, current});
  }
  return plan;
}

void write_plan_csv(std::ostream& out, const std::vector<PlanStep>& plan) {
  out << "rank,assay,marginal_goc,accumulated_goc,cost\n";
  for (std::size_t i = 0; i < plan.size(); ++i) {
    out << (i + 1) << ',' << csv::escape(plan[i].name) << ','
        << csv::format_double(plan[i].marginal_goc) << ','
        << csv::format_double(plan[i].accumulated_goc) << ",\n";
  }
}

void print_plan_table(std::ostream& out, const std::vector<PlanStep>& plan,
                      const std::string& target_name) {
  std::size_t width = 5;
  for (const auto& s : plan) width = std::max(width, s.name.size());
  out << "Greedy measurement plan for target '" << target_name << "'\n";
  out << std::left << std::setw(6) << "rank" << std::setw(static_cast<int>(width) + 2) << "assay"
      << std::right << std::setw(14) << "marginal_goc" << std::setw(17) << "accumulated_goc" << '\n';
  const auto old_flags = out.flags();
  const auto old_precision = out.precision();
  out << std::fixed << std::setprecision(6);
  for (std::size_t i = 0; i < plan.size(); ++i) {
    out << std::left << std::setw(6) << (i + 1) << std::setw(static_cast<int>(width) + 2)
        << plan[i].name << std::right << std::setw(14) << plan[i].marginal_goc << std::setw(17)
        << plan[i].accumulated_goc << '\n';
  }
  if (plan.empty()) out << "(no candidate reaches the stop threshold)\n";
  out.flags(old_flags);
  out.precision(old_precision);
}

}  // namespace qcomp
