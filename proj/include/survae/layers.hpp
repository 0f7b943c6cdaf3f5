#pragma once

#include "survae/layers/base.hpp"
#include "survae/layers/bijections.hpp"
#include "survae/layers/stochastic.hpp"
#include "survae/layers/surjections.hpp"
