#pragma once

#include "qcd/design.hpp"
#include "qcd/design_card.hpp"
#include "qcd/detectors.hpp"
#include "qcd/error.hpp"
#include "qcd/io.hpp"
#include "qcd/models.hpp"
#include "qcd/numeric.hpp"
#include "qcd/oracle.hpp"
#include "qcd/rng.hpp"
#include "qcd/simulate.hpp"
