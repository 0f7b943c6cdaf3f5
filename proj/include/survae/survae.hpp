#pragma once

// Umbrella header: the whole library.

#include "survae/ad.hpp"
#include "survae/arch.hpp"
#include "survae/catalog.hpp"
#include "survae/ckpt.hpp"
#include "survae/data.hpp"
#include "survae/dist.hpp"
#include "survae/flow.hpp"
#include "survae/gradcheck.hpp"
#include "survae/layers.hpp"
#include "survae/linalg.hpp"
#include "survae/nn.hpp"
#include "survae/oracle.hpp"
#include "survae/registry.hpp"
#include "survae/rng.hpp"
#include "survae/tensor.hpp"
#include "survae/train.hpp"
