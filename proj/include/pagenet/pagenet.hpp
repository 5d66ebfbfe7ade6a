#pragma once

#include "pagenet/baselines.hpp"
#include "pagenet/dataset.hpp"
#include "pagenet/errors.hpp"
#include "pagenet/evaluation.hpp"
#include "pagenet/geometry.hpp"
#include "pagenet/image.hpp"
#include "pagenet/io.hpp"
#include "pagenet/nn/fcn.hpp"
#include "pagenet/nn/model_io.hpp"
#include "pagenet/nn/ops.hpp"
#include "pagenet/nn/tensor.hpp"
#include "pagenet/nn/train.hpp"
#include "pagenet/parallel.hpp"
#include "pagenet/quadfit.hpp"
#include "pagenet/raster.hpp"
#include "pagenet/synthetic.hpp"
