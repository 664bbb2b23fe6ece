#pragma once

// Umbrella header: redundancy measurement for deep models from per-layer
// activation dumps — unbiased CKA layer similarity, the MSRS redundancy
// score, redundancy-aware layer-pruning plans and NAS candidate ranking.

#include "redtest/errors.hpp"
#include "redtest/matrix.hpp"
#include "redtest/msrs.hpp"
#include "redtest/npy.hpp"
#include "redtest/parallel.hpp"
#include "redtest/prune.hpp"
#include "redtest/rank.hpp"
#include "redtest/report.hpp"
#include "redtest/rng.hpp"
#include "redtest/similarity.hpp"
#include "redtest/synth.hpp"
#include "redtest/trace.hpp"
