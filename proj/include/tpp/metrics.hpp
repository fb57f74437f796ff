#pragma once

#include <cstdint>
#include <span>

#include "tpp/data.hpp"

namespace tpp {

/// sqrt(mean squared error) over unmasked entries. An empty mask means all.
/// Throws NoEvents when nothing is unmasked.
double rmse_time(std::span<const double> pred, std::span<const double> truth,
                 std::span<const std::uint8_t> mask = {});

/// Fraction of unmasked positions where pred != truth. Throws NoEvents.
double error_rate_type(std::span<const int> pred, std::span<const int> truth,
                       std::span<const std::uint8_t> mask = {});

struct OTDParams {
  double delete_cost = 1.0;  // per unmatched event, in time units
};

/// Optimal-transport edit distance between marked sequences: same-type events
/// align at cost |t_a - t_b|, every unaligned event costs delete_cost.
/// The total is accumulated as (sum of aligned gaps in order) + C * deletions.
double otd(const EventSequence& a, const EventSequence& b, const OTDParams& p);

/// Exhaustive enumeration of monotone type-respecting alignments. Throws
/// TooLarge when either sequence has more than 6 events.
double otd_bruteforce(const EventSequence& a, const EventSequence& b, const OTDParams& p);

}  // namespace tpp
