#pragma once

#include "nubound/bounds.hpp"
#include "nubound/capacity.hpp"
#include "nubound/error.hpp"
#include "nubound/estimate.hpp"
#include "nubound/harness.hpp"
#include "nubound/knnmi.hpp"
#include "nubound/models.hpp"
#include "nubound/rng.hpp"
#include "nubound/sample.hpp"
#include "nubound/special.hpp"
#include "nubound/spline.hpp"
#include "nubound/transforms.hpp"
