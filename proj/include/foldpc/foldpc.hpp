// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "foldpc/attribute_mapping.hpp"
#include "foldpc/bitstream.hpp"
#include "foldpc/error.hpp"
#include "foldpc/expansion.hpp"
#include "foldpc/folding_model.hpp"
#include "foldpc/geometry.hpp"
#include "foldpc/grid.hpp"
#include "foldpc/image_codec.hpp"
#include "foldpc/loss.hpp"
#include "foldpc/metrics.hpp"
#include "foldpc/parallel.hpp"
#include "foldpc/pipeline.hpp"
#include "foldpc/ply.hpp"
#include "foldpc/point_cloud.hpp"
#include "foldpc/refine.hpp"
#include "foldpc/selftest.hpp"
#include "foldpc/spatial_index.hpp"
#include "foldpc/training.hpp"
