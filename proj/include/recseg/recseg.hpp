#pragma once

#include "recseg/autodiff/adam.hpp"
#include "recseg/autodiff/checkpoint.hpp"
#include "recseg/autodiff/gradcheck.hpp"
#include "recseg/autodiff/ops.hpp"
#include "recseg/autodiff/tape.hpp"
#include "recseg/autodiff/tensor.hpp"
#include "recseg/config.hpp"
#include "recseg/data.hpp"
#include "recseg/error.hpp"
#include "recseg/eval.hpp"
#include "recseg/geom.hpp"
#include "recseg/hierarchy.hpp"
#include "recseg/model.hpp"
#include "recseg/nets.hpp"
#include "recseg/ply.hpp"
#include "recseg/train.hpp"
