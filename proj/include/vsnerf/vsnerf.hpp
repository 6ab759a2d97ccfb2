#pragma once

#include "vsnerf/common.hpp"
#include "vsnerf/config.hpp"
#include "vsnerf/consistency.hpp"
#include "vsnerf/correspondence.hpp"
#include "vsnerf/dataset.hpp"
#include "vsnerf/features.hpp"
#include "vsnerf/field.hpp"
#include "vsnerf/geometry.hpp"
#include "vsnerf/image.hpp"
#include "vsnerf/metrics.hpp"
#include "vsnerf/objectives.hpp"
#include "vsnerf/optimizer.hpp"
#include "vsnerf/projector.hpp"
#include "vsnerf/rendering.hpp"
#include "vsnerf/report.hpp"
#include "vsnerf/sampling.hpp"
#include "vsnerf/trainer.hpp"
