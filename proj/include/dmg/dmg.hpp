#pragma once

// Umbrella header.
#include "dmg/error.hpp"
#include "dmg/grading.hpp"
#include "dmg/instances.hpp"
#include "dmg/manifest.hpp"
#include "dmg/mask.hpp"
#include "dmg/metrics.hpp"
#include "dmg/narration.hpp"
#include "dmg/partition.hpp"
#include "dmg/pipeline.hpp"
#include "dmg/raster_io.hpp"
#include "dmg/text.hpp"
#include "dmg/zonal_stats.hpp"
