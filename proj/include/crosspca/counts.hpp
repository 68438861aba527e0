// Copyright (c) 2026 crosspca contributors
#pragma once

#include <cstddef>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "crosspca/errors.hpp"

namespace crosspca {

// Observed counts for one study: n samples by p features, nonnegative integers.
struct CountMatrix {
  std::vector<std::string> samples;   // n identifiers
  std::vector<std::string> features;  // p identifiers
  std::vector<long long> counts;      // row-major n x p
  std::string study_label;

  std::size_t n() const { return samples.size(); }
  std::size_t p() const { return features.size(); }
  long long operator()(std::size_t i, std::size_t j) const { return counts[i * p() + j]; }
  long long& operator()(std::size_t i, std::size_t j) { return counts[i * p() + j]; }

  // Schema checks: shape consistency, unique identifiers, nonnegative values.
  void validate() const {
    if (counts.size() != n() * p())
      throw DataError("count matrix '" + study_label + "': shape mismatch");
    std::unordered_set<std::string> seen;
    for (const auto& s : samples)
      if (!seen.insert(s).second)
        throw DataError("count matrix '" + study_label + "': duplicate sample id '" + s + "'");
    seen.clear();
    for (const auto& f : features)
      if (!seen.insert(f).second)
        throw DataError("count matrix '" + study_label + "': duplicate feature id '" + f + "'");
    for (std::size_t i = 0; i < n(); ++i)
      for (std::size_t j = 0; j < p(); ++j)
        if ((*this)(i, j) < 0)
          throw DataError("count matrix '" + study_label + "': negative count at sample '" +
                          samples[i] + "', feature '" + features[j] + "'");
  }
};

// Feature-to-group assignment (e.g. strain to genus). The map must cover every
// feature it is applied to; unmapped features are an error, never dropped.
struct FeatureMap {
  std::unordered_map<std::string, std::string> entries;
};

}  // namespace crosspca
