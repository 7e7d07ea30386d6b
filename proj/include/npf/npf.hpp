#pragma once

#include "npf/errors.hpp"
#include "npf/model_algebra.hpp"
#include "npf/mesh.hpp"
#include "npf/fem.hpp"
#include "npf/energy.hpp"
#include "npf/flow.hpp"
#include "npf/io.hpp"
#include "npf/experiments.hpp"
#include "npf/verify.hpp"
