#pragma once

#include "dlca/rng.hpp"
#include "dlca/timing.hpp"
#include "dlca/channel.hpp"
#include "dlca/medium.hpp"
#include "dlca/protocols.hpp"
#include "dlca/qnn.hpp"
#include "dlca/agent.hpp"
#include "dlca/apc.hpp"
#include "dlca/analytics.hpp"
#include "dlca/simulator.hpp"
#include "dlca/scenario.hpp"
#include "dlca/csv.hpp"
