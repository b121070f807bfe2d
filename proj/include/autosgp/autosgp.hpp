#ifndef AUTOSGP_AUTOSGP_HPP
#define AUTOSGP_AUTOSGP_HPP

#include "autosgp/errors.hpp"
#include "autosgp/numerics.hpp"
#include "autosgp/kernels.hpp"
#include "autosgp/exact_gpr.hpp"
#include "autosgp/sgpr.hpp"
#include "autosgp/inducing.hpp"
#include "autosgp/optimizer.hpp"
#include "autosgp/baseline.hpp"
#include "autosgp/svgp.hpp"
#include "autosgp/harness/dataset.hpp"
#include "autosgp/harness/metrics.hpp"
#include "autosgp/harness/smoothing.hpp"
#include "autosgp/harness/report.hpp"

#endif  // AUTOSGP_AUTOSGP_HPP
