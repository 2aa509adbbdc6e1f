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

#include "dmvc/common.hpp"
#include "dmvc/dataio.hpp"
#include "dmvc/metrics.hpp"
#include "dmvc/kmeans.hpp"
#include "dmvc/agglomerative.hpp"
#include "dmvc/nnet.hpp"
#include "dmvc/deepclust.hpp"
#include "dmvc/mvnet.hpp"
#include "dmvc/ensemble.hpp"
#include "dmvc/synthgen.hpp"
#include "dmvc/pipeline.hpp"
