#pragma once

// Umbrella header for the whole simulator.

#include "fairfed/config.hpp"
#include "fairfed/data.hpp"
#include "fairfed/errors.hpp"
#include "fairfed/experiment.hpp"
#include "fairfed/fairness.hpp"
#include "fairfed/federation.hpp"
#include "fairfed/idx.hpp"
#include "fairfed/metrics.hpp"
#include "fairfed/model.hpp"
#include "fairfed/privacy.hpp"
#include "fairfed/rng.hpp"
