#pragma once

#include "restkv/errors.hpp"
#include "restkv/numerics.hpp"
#include "restkv/attention.hpp"
#include "restkv/indicator.hpp"
#include "restkv/smoothing.hpp"
#include "restkv/policies.hpp"
#include "restkv/trace.hpp"
#include "restkv/pipeline.hpp"
