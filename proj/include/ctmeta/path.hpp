#ifndef CTMETA_PATH_HPP
#define CTMETA_PATH_HPP

#include <vector>

#include "ctmeta/state_set.hpp"

namespace ctmeta {

enum class StopReason { HitTarget, Horizon, Absorbed };

struct PathSegment {
    int state;
    double duration;
};

/// One simulated trajectory, segment-compressed: the sequence of visited
/// states with their holding durations. `horizon` is the running left-fold of
/// the durations, so "sum of durations == horizon" holds bit-exactly.
struct PathSample {
    int start = 0;
    std::vector<PathSegment> segments;
    double horizon = 0.0;
    StopReason stop_reason = StopReason::Horizon;
    /// State whose hit ended the path (HitTarget), or the absorbing state.
    int final_state = -1;
    /// Set by extract_trace_path when a leading segment outside the support
    /// had to be dropped.
    bool leading_segment_dropped = false;
};

/// Time spent in `states`, accumulated in path order (left fold).
double occupation_time(const PathSample& path, const StateSet& states);

} // namespace ctmeta

#endif
