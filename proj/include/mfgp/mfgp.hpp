#pragma once

#include "mfgp/baselines.hpp"
#include "mfgp/densegp.hpp"
#include "mfgp/error.hpp"
#include "mfgp/inference.hpp"
#include "mfgp/kernels.hpp"
#include "mfgp/meanmodel.hpp"
#include "mfgp/mfstruct.hpp"
#include "mfgp/model.hpp"
#include "mfgp/optimize.hpp"
#include "mfgp/oracle.hpp"
#include "mfgp/rho.hpp"
#include "mfgp/simulate.hpp"
#include "mfgp/validation.hpp"
#include "mfgp/vecchia.hpp"
