#pragma once

#include "wscl/cl1.hpp"
#include "wscl/correlation.hpp"
#include "wscl/dataset.hpp"
#include "wscl/errors.hpp"
#include "wscl/glm_margins.hpp"
#include "wscl/godambe.hpp"
#include "wscl/io.hpp"
#include "wscl/mvn_integrals.hpp"
#include "wscl/normal.hpp"
#include "wscl/options.hpp"
#include "wscl/simulation.hpp"
#include "wscl/weighted_scores.hpp"
