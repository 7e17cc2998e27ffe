#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace popcorn {

// Missing scalars are carried as NaN in memory and as null in JSONL.
inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();
inline bool is_missing(double x) { return std::isnan(x); }

struct Trajectory {
  std::vector<int> actions;                          // [T]
  std::vector<std::vector<double>> observations;     // [T][D]
  std::vector<double> rewards;                       // [T]
  std::vector<std::vector<double>> behavior_probs;   // [T][A], may be empty
  int id = 0;

  int length() const { return static_cast<int>(actions.size()); }
  bool has_behavior_probs() const { return !behavior_probs.empty(); }
};

struct Dataset {
  int A = 0, D = 0;
  double gamma = 0.9;
  std::vector<Trajectory> trajectories;

  int size() const { return static_cast<int>(trajectories.size()); }
  int max_length() const;
  // Count of non-missing observation scalars across the whole dataset.
  long observed_scalar_count() const;
};

// Throws std::invalid_argument on length mismatches, bad action indices, or
// behavior rows that are not simplex-valued within 1e-6.
void validate(const Dataset& d);

// JSONL trajectory format: a header record {A, D, gamma, format_version}
// followed by one record per trajectory.
void save_dataset_jsonl(const std::string& path, const Dataset& d);
Dataset load_dataset_jsonl(const std::string& path);

}  // namespace popcorn
