#pragma once

#include "dpflab/numerics/eigen.hpp"
#include "dpflab/numerics/linalg.hpp"
#include "dpflab/numerics/lsq.hpp"
#include "dpflab/numerics/lyapunov.hpp"
#include "dpflab/numerics/matrix.hpp"
#include "dpflab/numerics/riccati.hpp"
