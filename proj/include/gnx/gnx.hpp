#pragma once

#include "gnx/tensor.hpp"
#include "gnx/tape.hpp"
#include "gnx/backward.hpp"
#include "gnx/graph.hpp"
#include "gnx/rng.hpp"
#include "gnx/gn.hpp"
#include "gnx/explain.hpp"
#include "gnx/io.hpp"
#include "gnx/log.hpp"
#include "gnx/infection.hpp"
#include "gnx/chem.hpp"
#include "gnx/training.hpp"
#include "gnx/export.hpp"
#include "gnx/selftest.hpp"
