#pragma once

#include "cpflow/error.hpp"
#include "cpflow/mesh.hpp"
#include "cpflow/fixtures.hpp"
#include "cpflow/geometry.hpp"
#include "cpflow/potential.hpp"
#include "cpflow/dynamics.hpp"
