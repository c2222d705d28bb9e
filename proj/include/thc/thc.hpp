#pragma once

#include "thc/coulomb.hpp"
#include "thc/error.hpp"
#include "thc/factorization.hpp"
#include "thc/interpolative.hpp"
#include "thc/model.hpp"
#include "thc/parallel.hpp"
#include "thc/rng.hpp"
