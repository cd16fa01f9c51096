#pragma once

#include <string>
#include <vector>

#include <fmt/format.h>

#include "refscore/data.hpp"

namespace refscore::testing {

/// Counts matrix from nested rows; institutions and columns get generic names.
inline CountsMatrix make_counts(const std::vector<std::vector<int>>& rows) {
  CountsMatrix c;
  for (std::size_t i = 0; i < rows.size(); ++i) c.institutions.push_back(fmt::format("inst{}", i + 1));
  for (std::size_t j = 0; j < rows.front().size(); ++j) c.columns.push_back(fmt::format("journal{}", j + 1));
  for (const auto& r : rows) c.counts.insert(c.counts.end(), r.begin(), r.end());
  return c;
}

inline std::vector<InstitutionProfile> make_profiles(const CountsMatrix& c, const std::vector<int>& y4,
                                                     const std::vector<int>& y34,
                                                     const std::vector<double>& envir = {}) {
  std::vector<InstitutionProfile> out;
  for (std::size_t i = 0; i < c.rows(); ++i) {
    InstitutionProfile p;
    p.institution = c.institutions[i];
    p.total_outputs = c.row_total(i);
    p.y4 = y4[i];
    p.y34 = y34[i];
    p.fte = 10.0;
    p.envir = envir.empty() ? 0.0 : envir[i];
    out.push_back(p);
  }
  return out;
}

}  // namespace refscore::testing
