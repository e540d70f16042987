// Copyright (c) 2026 The disn Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Umbrella header.

#include "disn/adam.hpp"
#include "disn/checkpoint.hpp"
#include "disn/commands.hpp"
#include "disn/config.hpp"
#include "disn/discriminators.hpp"
#include "disn/disentangler.hpp"
#include "disn/embedding_io.hpp"
#include "disn/error.hpp"
#include "disn/framework.hpp"
#include "disn/gradcheck.hpp"
#include "disn/gradcheck_suite.hpp"
#include "disn/layers.hpp"
#include "disn/metrics.hpp"
#include "disn/probe.hpp"
#include "disn/rng.hpp"
#include "disn/sampler.hpp"
#include "disn/scoring.hpp"
#include "disn/synth.hpp"
#include "disn/tensor.hpp"
#include "disn/trainer.hpp"
