// SPDX-License-Identifier: Apache-2.0
//
// modclass - time-frequency modulation classification toolkit
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

#pragma once

#include "modclass/channel.hpp"
#include "modclass/cnn.hpp"
#include "modclass/decision.hpp"
#include "modclass/error.hpp"
#include "modclass/fft.hpp"
#include "modclass/fusion.hpp"
#include "modclass/harness/config.hpp"
#include "modclass/harness/dataset.hpp"
#include "modclass/harness/evaluate.hpp"
#include "modclass/harness/report.hpp"
#include "modclass/image_io.hpp"
#include "modclass/parallel.hpp"
#include "modclass/rng.hpp"
#include "modclass/sigsynth.hpp"
#include "modclass/tfa.hpp"
