// Copyright 2026 The cocstress Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "cocstress/analysis.hpp"
#include "cocstress/campaign.hpp"
#include "cocstress/data_model.hpp"
#include "cocstress/defend.hpp"
#include "cocstress/errors.hpp"
#include "cocstress/fixtures.hpp"
#include "cocstress/image.hpp"
#include "cocstress/metrics.hpp"
#include "cocstress/modelio.hpp"
#include "cocstress/monitor.hpp"
#include "cocstress/perturb.hpp"
#include "cocstress/remote.hpp"
#include "cocstress/report.hpp"
#include "cocstress/rng.hpp"
#include "cocstress/stats.hpp"
#include "cocstress/taxonomy.hpp"
#include "cocstress/types.hpp"
