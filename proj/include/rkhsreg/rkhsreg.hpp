// rkhsreg: umbrella header.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "rkhsreg/bench.hpp"
#include "rkhsreg/core.hpp"
#include "rkhsreg/features.hpp"
#include "rkhsreg/icp.hpp"
#include "rkhsreg/io.hpp"
#include "rkhsreg/kdtree.hpp"
#include "rkhsreg/kernel.hpp"
#include "rkhsreg/perturb.hpp"
#include "rkhsreg/point_cloud.hpp"
#include "rkhsreg/registration.hpp"
#include "rkhsreg/rkhs.hpp"
#include "rkhsreg/se3.hpp"
#include "rkhsreg/shapes.hpp"
#include "rkhsreg/training.hpp"
