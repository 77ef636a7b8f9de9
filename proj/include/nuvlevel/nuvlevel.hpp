#pragma once

#include "nuvlevel/error.hpp"
#include "nuvlevel/nuv_prior.hpp"
#include "nuvlevel/statespace.hpp"
#include "nuvlevel/mbf.hpp"
#include "nuvlevel/levels.hpp"
#include "nuvlevel/ikie.hpp"
#include "nuvlevel/oracle.hpp"
#include "nuvlevel/scenarios.hpp"
#include "nuvlevel/problem_io.hpp"
