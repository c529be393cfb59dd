#pragma once

/// @file qmask.hpp
/// Umbrella header.

#include "qmask/cli.hpp"
#include "qmask/counting.hpp"
#include "qmask/domain.hpp"
#include "qmask/eval.hpp"
#include "qmask/expr.hpp"
#include "qmask/program.hpp"
#include "qmask/reduce.hpp"
#include "qmask/smt.hpp"
#include "qmask/type_infer.hpp"
#include "qmask/verifier.hpp"
