#pragma once

#include "fgat/autodiff.hpp"
#include "fgat/checkpoint.hpp"
#include "fgat/config.hpp"
#include "fgat/core.hpp"
#include "fgat/dataset.hpp"
#include "fgat/eval.hpp"
#include "fgat/feature_file.hpp"
#include "fgat/graph.hpp"
#include "fgat/model.hpp"
#include "fgat/pipeline.hpp"
#include "fgat/propagate.hpp"
#include "fgat/rng.hpp"
#include "fgat/score.hpp"
#include "fgat/splits.hpp"
#include "fgat/synthetic.hpp"
#include "fgat/train.hpp"
