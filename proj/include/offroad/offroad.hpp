#pragma once

#include "offroad/common.hpp"
#include "offroad/curves.hpp"
#include "offroad/edt.hpp"
#include "offroad/grid.hpp"
#include "offroad/harness.hpp"
#include "offroad/mpc.hpp"
#include "offroad/sensors.hpp"
#include "offroad/trajopt.hpp"
#include "offroad/tta.hpp"
#include "offroad/voxelizer.hpp"
#include "offroad/worldgen.hpp"
