#pragma once

#include "mftrack/core.hpp"
#include "mftrack/detection.hpp"
#include "mftrack/evaluation.hpp"
#include "mftrack/features.hpp"
#include "mftrack/io.hpp"
#include "mftrack/learning.hpp"
#include "mftrack/point_tracking.hpp"
#include "mftrack/similarity.hpp"
#include "mftrack/synth.hpp"
#include "mftrack/tracking.hpp"
