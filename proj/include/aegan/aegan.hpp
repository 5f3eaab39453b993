#pragma once
// Umbrella header.

#include "aegan/adam.hpp"
#include "aegan/checkpoint.hpp"
#include "aegan/config.hpp"
#include "aegan/data.hpp"
#include "aegan/errors.hpp"
#include "aegan/metrics.hpp"
#include "aegan/networks.hpp"
#include "aegan/tensor.hpp"
#include "aegan/training.hpp"
