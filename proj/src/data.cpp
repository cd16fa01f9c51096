#include "refscore/data.hpp"

#include <fmt/format.h>

#include "refscore/error.hpp"

namespace refscore {

int CountsMatrix::row_total(std::size_t i) const {
  int s = 0;
  for (std::size_t j = 0; j < cols(); ++j) s += at(i, j);
  return s;
}

int CountsMatrix::col_total(std::size_t j) const {
  int s = 0;
  for (std::size_t i = 0; i < rows(); ++i) s += at(i, j);
  return s;
}

long long CountsMatrix::total() const {
  long long s = 0;
  for (int c : counts) s += c;
  return s;
}

void CountsMatrix::check() const {
  if (counts.size() != rows() * cols())
    throw DataError(fmt::format("counts matrix holds {} cells, expected {} x {}", counts.size(), rows(), cols()));
  for (int c : counts)
    if (c < 0) throw DataError("counts matrix contains a negative count");
}

void check_alignment(const CountsMatrix& counts, const std::vector<InstitutionProfile>& profiles) {
  counts.check();
  if (profiles.size() != counts.rows())
    throw DataError(fmt::format("{} profiles for {} institutions", profiles.size(), counts.rows()));
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    const auto& p = profiles[i];
    if (p.institution != counts.institutions[i])
      throw DataError(fmt::format("profile {} is '{}' but counts row {} is '{}'", i, p.institution, i,
                                  counts.institutions[i]));
    const int n = counts.row_total(i);
    if (p.total_outputs != n)
      throw DataError(fmt::format("'{}': profile total {} differs from counts row total {}", p.institution,
                                  p.total_outputs, n));
    if (!(0 <= p.y4 && p.y4 <= p.y34 && p.y34 <= n))
      throw DataError(fmt::format("'{}': need 0 <= y4 ({}) <= y34 ({}) <= N ({})", p.institution, p.y4, p.y34, n));
  }
}

}  // namespace refscore
