#pragma once

#include <string>

#include "edgeml/common/clock.hpp"

namespace edgeml {

/// One time-stamped scalar measurement of a named series.
struct TimePoint {
  std::string series;
  TimestampNs timestamp_ns = 0;
  double value = 0.0;

  friend bool operator==(const TimePoint&, const TimePoint&) = default;
};

struct SeriesOf {
  const std::string& operator()(const TimePoint& p) const { return p.series; }
};

}  // namespace edgeml
