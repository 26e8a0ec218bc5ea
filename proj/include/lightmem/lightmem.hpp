#pragma once
// Umbrella header.

#include "lightmem/backends.hpp"
#include "lightmem/core.hpp"
#include "lightmem/dataset.hpp"
#include "lightmem/errors.hpp"
#include "lightmem/harness.hpp"
#include "lightmem/ltm.hpp"
#include "lightmem/metering.hpp"
#include "lightmem/openai_client.hpp"
#include "lightmem/pipeline.hpp"
#include "lightmem/prompts.hpp"
#include "lightmem/segmentation.hpp"
#include "lightmem/sensory.hpp"
#include "lightmem/stm.hpp"
