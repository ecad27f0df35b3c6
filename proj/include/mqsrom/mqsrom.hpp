#pragma once
// Umbrella header for the MQS model reduction library.

#include "mqsrom/errors.hpp"
#include "mqsrom/matcore.hpp"
#include "mqsrom/reluctivity.hpp"
#include "mqsrom/problem.hpp"
#include "mqsrom/bundle.hpp"
#include "mqsrom/mqs_system.hpp"
#include "mqsrom/integrator.hpp"
#include "mqsrom/regularization.hpp"
#include "mqsrom/rom.hpp"
#include "mqsrom/passivity.hpp"
