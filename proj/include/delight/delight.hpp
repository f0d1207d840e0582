#pragma once

// Umbrella header for the portrait delighting toolkit.

#include "delight/autodiff.hpp"
#include "delight/checkpoint.hpp"
#include "delight/color.hpp"
#include "delight/common.hpp"
#include "delight/datasynth.hpp"
#include "delight/evalx.hpp"
#include "delight/extractor.hpp"
#include "delight/filters.hpp"
#include "delight/fixtures.hpp"
#include "delight/geometry.hpp"
#include "delight/image.hpp"
#include "delight/image_io.hpp"
#include "delight/losses.hpp"
#include "delight/manifest.hpp"
#include "delight/model.hpp"
#include "delight/rng.hpp"
#include "delight/tensor.hpp"
#include "delight/trainer.hpp"
