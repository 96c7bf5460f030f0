#pragma once

#include "ppde/error.hpp"
#include "ppde/experts.hpp"
#include "ppde/io.hpp"
#include "ppde/metrics.hpp"
#include "ppde/oracle.hpp"
#include "ppde/rng.hpp"
#include "ppde/samplers.hpp"
#include "ppde/seqspace.hpp"
#include "ppde/trace.hpp"
#include "ppde/wire.hpp"
