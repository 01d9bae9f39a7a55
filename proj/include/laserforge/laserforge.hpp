#pragma once

#include "laserforge/calibration.hpp"
#include "laserforge/camera.hpp"
#include "laserforge/error.hpp"
#include "laserforge/geometry.hpp"
#include "laserforge/image.hpp"
#include "laserforge/io.hpp"
#include "laserforge/laser.hpp"
#include "laserforge/numerics.hpp"
#include "laserforge/reconstruction.hpp"
#include "laserforge/simulator.hpp"
