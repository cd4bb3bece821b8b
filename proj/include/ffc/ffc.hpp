#pragma once

#include "ffc/errors.hpp"
#include "ffc/numkit.hpp"
#include "ffc/fairness.hpp"
#include "ffc/model.hpp"
#include "ffc/federation.hpp"
#include "ffc/scmdata.hpp"
#include "ffc/causal.hpp"
#include "ffc/toml.hpp"
#include "ffc/config.hpp"
#include "ffc/pipeline.hpp"
