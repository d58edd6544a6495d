#pragma once

#include "confcal/baselines.hpp"
#include "confcal/calibrate.hpp"
#include "confcal/core.hpp"
#include "confcal/fusion.hpp"
#include "confcal/io.hpp"
#include "confcal/metrics.hpp"
#include "confcal/rng.hpp"
#include "confcal/stream.hpp"
#include "confcal/synth.hpp"
#include "confcal/wilson.hpp"
