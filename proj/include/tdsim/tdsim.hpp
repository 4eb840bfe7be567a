/* Copyright 2026 The tdsim Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include "tdsim/cost_model.hpp"
#include "tdsim/engine.hpp"
#include "tdsim/errors.hpp"
#include "tdsim/metrics.hpp"
#include "tdsim/pipeline.hpp"
#include "tdsim/predictor.hpp"
#include "tdsim/rng.hpp"
#include "tdsim/run_config.hpp"
#include "tdsim/scenarios.hpp"
#include "tdsim/scheduler.hpp"
#include "tdsim/specs.hpp"
#include "tdsim/toml.hpp"
#include "tdsim/workload.hpp"
