#pragma once

#include "alqr/baselines.hpp"
#include "alqr/cli.hpp"
#include "alqr/config.hpp"
#include "alqr/control_math.hpp"
#include "alqr/error.hpp"
#include "alqr/estimator.hpp"
#include "alqr/excitation.hpp"
#include "alqr/harness.hpp"
#include "alqr/io.hpp"
#include "alqr/mrac.hpp"
#include "alqr/plot.hpp"
#include "alqr/reference_model.hpp"
#include "alqr/rng.hpp"
#include "alqr/systems.hpp"
