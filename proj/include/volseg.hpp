#pragma once

#include "volseg/api.hpp"
#include "volseg/bound_lab.hpp"
#include "volseg/clustering.hpp"
#include "volseg/error.hpp"
#include "volseg/metrics.hpp"
#include "volseg/model_io.hpp"
#include "volseg/random.hpp"
#include "volseg/sample_io.hpp"
#include "volseg/sampler.hpp"
#include "volseg/segmentation.hpp"
#include "volseg/stratification.hpp"
#include "volseg/version.hpp"
#include "volseg/volume_io.hpp"
