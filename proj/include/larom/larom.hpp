#pragma once

// Umbrella header.

#include "larom/core.hpp"
#include "larom/euler1d.hpp"
#include "larom/hyperreduction.hpp"
#include "larom/maps.hpp"
#include "larom/mesh1d.hpp"
#include "larom/metric2d.hpp"
#include "larom/mor.hpp"
#include "larom/pod.hpp"
#include "larom/registration.hpp"
#include "larom/training.hpp"
