#pragma once

#include "scalepred/core.hpp"
#include "scalepred/evalkit.hpp"
#include "scalepred/io.hpp"
#include "scalepred/labeling.hpp"
#include "scalepred/nn/gradcheck.hpp"
#include "scalepred/nn/network.hpp"
#include "scalepred/nn/optim.hpp"
#include "scalepred/nn/serialize.hpp"
#include "scalepred/nn/train.hpp"
#include "scalepred/pipeline.hpp"
#include "scalepred/random.hpp"
#include "scalepred/safety.hpp"
#include "scalepred/scene.hpp"
#include "scalepred/simulator.hpp"
#include "scalepred/tasks.hpp"
