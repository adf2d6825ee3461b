#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace egopose::acceptance {

/// Worst deviation of one library routine from its brute-force twin.
struct OracleRow {
  std::string name;
  int instances = 0;
  double max_deviation = 0.0;
  double tolerance = 0.0;

  bool passed() const { return max_deviation <= tolerance; }
};

std::vector<OracleRow> run_oracles(std::uint64_t seed);

}  // namespace egopose::acceptance
