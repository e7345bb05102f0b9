#pragma once

#include "keycap/discrete_sdpi.hpp"
#include "keycap/errors.hpp"
#include "keycap/gauss_vector.hpp"
#include "keycap/io.hpp"
#include "keycap/scalar_gaussian.hpp"
#include "keycap/spectral.hpp"
#include "keycap/waterfill.hpp"
