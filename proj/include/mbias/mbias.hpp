#pragma once

#include "mbias/errors.hpp"
#include "mbias/numeric.hpp"
#include "mbias/model.hpp"
#include "mbias/likelihood.hpp"
#include "mbias/isotonic.hpp"
#include "mbias/reweight.hpp"
#include "mbias/nnls.hpp"
#include "mbias/solver.hpp"
#include "mbias/inference.hpp"
#include "mbias/simgen.hpp"
