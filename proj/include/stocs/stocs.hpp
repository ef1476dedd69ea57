#pragma once

#include "stocs/binary_io.hpp"
#include "stocs/camera.hpp"
#include "stocs/congruent.hpp"
#include "stocs/error.hpp"
#include "stocs/estimator.hpp"
#include "stocs/geometry.hpp"
#include "stocs/heatmap.hpp"
#include "stocs/icp.hpp"
#include "stocs/image_io.hpp"
#include "stocs/metrics.hpp"
#include "stocs/model.hpp"
#include "stocs/normals.hpp"
#include "stocs/parallel.hpp"
#include "stocs/pipeline.hpp"
#include "stocs/ply.hpp"
#include "stocs/pose_io.hpp"
#include "stocs/ppf.hpp"
#include "stocs/render.hpp"
#include "stocs/rng.hpp"
#include "stocs/sampler.hpp"
#include "stocs/shapes.hpp"
#include "stocs/simulator.hpp"
#include "stocs/spatial_index.hpp"
#include "stocs/weak_detector.hpp"
