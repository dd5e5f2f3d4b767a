#pragma once

#include "csislab/common.hpp"
#include "csislab/rng.hpp"
#include "csislab/parallel.hpp"
#include "csislab/hash_types.hpp"
#include "csislab/image.hpp"
#include "csislab/image_io.hpp"
#include "csislab/pdq.hpp"
#include "csislab/surrogate.hpp"
#include "csislab/hasher.hpp"
#include "csislab/geometry.hpp"
#include "csislab/transforms.hpp"
#include "csislab/augment.hpp"
#include "csislab/procedural.hpp"
#include "csislab/scene.hpp"
#include "csislab/matcher.hpp"
#include "csislab/poison.hpp"
#include "csislab/attack.hpp"
#include "csislab/eval.hpp"
#include "csislab/config.hpp"
#include "csislab/pipeline.hpp"
