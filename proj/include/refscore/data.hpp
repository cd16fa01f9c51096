#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace refscore {

/// Per-institution, per-column submitted-output counts. Named journals come
/// first, then the aggregate columns.
struct CountsMatrix {
  std::vector<std::string> institutions;
  std::vector<std::string> columns;
  std::vector<int> counts;  // row-major, institutions x columns

  [[nodiscard]] std::size_t rows() const noexcept { return institutions.size(); }
  [[nodiscard]] std::size_t cols() const noexcept { return columns.size(); }
  [[nodiscard]] int at(std::size_t i, std::size_t j) const { return counts.at(i * cols() + j); }
  int& at(std::size_t i, std::size_t j) { return counts.at(i * cols() + j); }
  [[nodiscard]] int row_total(std::size_t i) const;
  [[nodiscard]] int col_total(std::size_t j) const;
  [[nodiscard]] long long total() const;
  /// Throws DataError on a shape mismatch or a negative count.
  void check() const;
};

inline constexpr const char* kOtherJournals = "Other journals";
inline constexpr const char* kConferenceProceedings = "Conference proceedings";
inline constexpr const char* kOtherOutputs = "Other outputs";

struct InstitutionProfile {
  std::string institution;
  int total_outputs = 0;  // N_i
  int y4 = 0;             // outputs rated 4*
  int y34 = 0;            // outputs rated 3* or 4*
  double fte = 0.0;       // submitted full-time-equivalent staff
  double envir = 0.0;     // centred share of the environment profile rated 4*

  [[nodiscard]] int y3() const noexcept { return y34 - y4; }
};

enum class TargetLevel { four_star, three_plus };

[[nodiscard]] inline const char* to_string(TargetLevel t) noexcept {
  return t == TargetLevel::four_star ? "four_star" : "three_plus";
}

[[nodiscard]] inline int observed(const InstitutionProfile& p, TargetLevel t) noexcept {
  return t == TargetLevel::four_star ? p.y4 : p.y34;
}

/// Profiles must list the matrix's institutions in the same order, with matching totals.
void check_alignment(const CountsMatrix& counts, const std::vector<InstitutionProfile>& profiles);

}  // namespace refscore
