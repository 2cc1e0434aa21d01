// Copyright 2026 The kasr-sim Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "kasr/base64.hpp"
#include "kasr/config.hpp"
#include "kasr/database.hpp"
#include "kasr/digest.hpp"
#include "kasr/enforcement.hpp"
#include "kasr/error.hpp"
#include "kasr/metrics.hpp"
#include "kasr/page_identity.hpp"
#include "kasr/trace.hpp"
#include "kasr/training.hpp"
#include "kasr/workload.hpp"
