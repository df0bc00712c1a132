#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace topoplan {

// User-facing failures (bad files, bad arguments, infeasible queries).
// The CLI maps these to exit code 2.
struct UserError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct LoadError : UserError {
  using UserError::UserError;
};

struct BoundsError : UserError {
  using UserError::UserError;
};

struct VocabError : UserError {
  using UserError::UserError;
};

struct TaskSpecError : UserError {
  using UserError::UserError;
};

// A* could not connect start and goal. Carries how many cells the search
// settled before giving up.
struct NoPathError : UserError {
  NoPathError(const std::string& msg, std::size_t searched)
      : UserError(msg), searched_cells(searched) {}
  std::size_t searched_cells = 0;
};

// The topological DP found no feasible node sequence.
struct NoPlanError : UserError {
  NoPlanError(const std::string& msg, std::vector<int> places)
      : UserError(msg), unreachable_places(std::move(places)) {}
  std::vector<int> unreachable_places;
};

// Broken model/data invariants; programming or corrupted-state errors.
// The CLI maps these to exit code 3.
struct InvariantError : std::logic_error {
  using std::logic_error::logic_error;
};

}  // namespace topoplan
