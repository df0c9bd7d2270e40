#pragma once

#include "mcslam/errors.hpp"
#include "mcslam/eval.hpp"
#include "mcslam/geometry.hpp"
#include "mcslam/graph_io.hpp"
#include "mcslam/multicut.hpp"
#include "mcslam/optimizer.hpp"
#include "mcslam/pcm.hpp"
#include "mcslam/pipeline.hpp"
#include "mcslam/posegraph.hpp"
#include "mcslam/synth.hpp"
