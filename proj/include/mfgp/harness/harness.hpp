#pragma once

#include "mfgp/harness/config.hpp"
#include "mfgp/harness/csv.hpp"
#include "mfgp/harness/experiments.hpp"
#include "mfgp/harness/ingest.hpp"
#include "mfgp/harness/loso.hpp"
#include "mfgp/harness/metrics.hpp"
#include "mfgp/harness/pool.hpp"
