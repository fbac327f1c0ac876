// Umbrella header.

#ifndef HIDAMATERN_HIDAMATERN_HPP
#define HIDAMATERN_HIDAMATERN_HPP

#include "hidamatern/approx.hpp"
#include "hidamatern/canonical_filter.hpp"
#include "hidamatern/exact_gp.hpp"
#include "hidamatern/hyperparameters.hpp"
#include "hidamatern/kalman.hpp"
#include "hidamatern/kernel.hpp"
#include "hidamatern/multioutput.hpp"
#include "hidamatern/nelder_mead.hpp"
#include "hidamatern/reference_kernels.hpp"
#include "hidamatern/state_space.hpp"

#endif  // HIDAMATERN_HIDAMATERN_HPP
