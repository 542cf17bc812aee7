#pragma once

#include "aspnn/autodiff.hpp"
#include "aspnn/combiner.hpp"
#include "aspnn/common.hpp"
#include "aspnn/data.hpp"
#include "aspnn/features.hpp"
#include "aspnn/generic.hpp"
#include "aspnn/mitosis.hpp"
#include "aspnn/model.hpp"
#include "aspnn/net.hpp"
#include "aspnn/optim.hpp"
#include "aspnn/rollout.hpp"
#include "aspnn/sim.hpp"
#include "aspnn/training.hpp"
