#pragma once

#include "patchot/adam.hpp"
#include "patchot/exact_ot.hpp"
#include "patchot/image.hpp"
#include "patchot/inpaint.hpp"
#include "patchot/metric.hpp"
#include "patchot/parallel.hpp"
#include "patchot/patches.hpp"
#include "patchot/pyramid.hpp"
#include "patchot/semidual.hpp"
#include "patchot/synthesis.hpp"
