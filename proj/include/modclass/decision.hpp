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

#include <cmath>
#include <cstddef>
#include <vector>

namespace modclass {

// Per-antenna class probabilities d_i = [d_i1 .. d_iK].
struct DecisionVector {
    std::vector<double> probs;

    std::size_t size() const { return probs.size(); }

    bool valid(double tol = 1e-6) const
    {
        if (probs.empty())
            return false;
        double sum = 0.0;
        for (double p : probs) {
            if (!(p >= 0.0) || !std::isfinite(p))
                return false;
            sum += p;
        }
        return std::abs(sum - 1.0) <= tol;
    }
};

} // namespace modclass
