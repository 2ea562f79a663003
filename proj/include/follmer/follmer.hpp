#pragma once

#include "follmer/grids.hpp"
#include "follmer/measures.hpp"
#include "follmer/metrics.hpp"
#include "follmer/parallel.hpp"
#include "follmer/process.hpp"
#include "follmer/rng.hpp"
#include "follmer/samplers.hpp"
#include "follmer/scores.hpp"
#include "follmer/stats.hpp"
#include "follmer/types.hpp"
