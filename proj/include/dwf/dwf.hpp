#pragma once

#include "dwf/core/error.hpp"
#include "dwf/core/grad_check.hpp"
#include "dwf/core/matrix.hpp"
#include "dwf/core/rng.hpp"
#include "dwf/core/stats.hpp"
#include "dwf/data.hpp"
#include "dwf/experiments.hpp"
#include "dwf/factorization.hpp"
#include "dwf/init.hpp"
#include "dwf/io.hpp"
#include "dwf/lasso.hpp"
#include "dwf/mask.hpp"
#include "dwf/metrics.hpp"
#include "dwf/model.hpp"
#include "dwf/optimizer.hpp"
#include "dwf/pruning.hpp"
