#pragma once

#include "radreward/corpus.hpp"
#include "radreward/eval.hpp"
#include "radreward/io.hpp"
#include "radreward/labeler.hpp"
#include "radreward/metrics.hpp"
#include "radreward/policy.hpp"
#include "radreward/reward.hpp"
