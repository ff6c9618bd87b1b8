#pragma once

#include "fairac/adam.hpp"
#include "fairac/autodiff.hpp"
#include "fairac/deepwalk.hpp"
#include "fairac/error.hpp"
#include "fairac/experiment.hpp"
#include "fairac/gcn.hpp"
#include "fairac/grad_check.hpp"
#include "fairac/graph.hpp"
#include "fairac/io.hpp"
#include "fairac/log.hpp"
#include "fairac/matrix.hpp"
#include "fairac/metrics.hpp"
#include "fairac/model.hpp"
#include "fairac/random.hpp"
#include "fairac/synthetic.hpp"
