#pragma once

#include "lwot/discrete_measure.hpp"
#include "lwot/discrete_ot.hpp"
#include "lwot/error.hpp"
#include "lwot/io.hpp"
#include "lwot/layerwise.hpp"
#include "lwot/measures.hpp"
#include "lwot/ot1d.hpp"
#include "lwot/phenotypes.hpp"
#include "lwot/simplex.hpp"
#include "lwot/skeleton.hpp"
#include "lwot/util.hpp"
