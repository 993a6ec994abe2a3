#pragma once

#include "stabmap/aggregate.hpp"
#include "stabmap/binding.hpp"
#include "stabmap/boundary.hpp"
#include "stabmap/config.hpp"
#include "stabmap/equilibrium.hpp"
#include "stabmap/errors.hpp"
#include "stabmap/family.hpp"
#include "stabmap/frame.hpp"
#include "stabmap/layout.hpp"
#include "stabmap/modal.hpp"
#include "stabmap/model.hpp"
#include "stabmap/params.hpp"
#include "stabmap/plane.hpp"
#include "stabmap/sweep.hpp"
#include "stabmap/system.hpp"
#include "stabmap/timedomain.hpp"
