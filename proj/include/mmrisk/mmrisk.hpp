#pragma once

#include "asymptotics.hpp"
#include "claim_law.hpp"
#include "core.hpp"
#include "model.hpp"
#include "model_io.hpp"
#include "numeric.hpp"
#include "parisian.hpp"
#include "rng.hpp"
#include "ruin.hpp"
#include "scale.hpp"
#include "simulate.hpp"
#include "spectral.hpp"
