#pragma once

// Umbrella header.

#include "pairsim/checkpoint.hpp"
#include "pairsim/corpus.hpp"
#include "pairsim/csv.hpp"
#include "pairsim/ensemble.hpp"
#include "pairsim/errors.hpp"
#include "pairsim/grad_check.hpp"
#include "pairsim/gradcheck_suite.hpp"
#include "pairsim/metrics.hpp"
#include "pairsim/model_config.hpp"
#include "pairsim/models.hpp"
#include "pairsim/ops.hpp"
#include "pairsim/params.hpp"
#include "pairsim/prng.hpp"
#include "pairsim/tensor.hpp"
#include "pairsim/trainer.hpp"
