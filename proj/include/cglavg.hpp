#pragma once

#include "cglavg/errors.hpp"
#include "cglavg/parallel.hpp"
#include "cglavg/torus.hpp"
#include "cglavg/noise.hpp"
#include "cglavg/coefficients.hpp"
#include "cglavg/measures.hpp"
#include "cglavg/integrator.hpp"
#include "cglavg/experiments.hpp"
#include "cglavg/config.hpp"
#include "cglavg/io.hpp"
#include "cglavg/cli.hpp"
