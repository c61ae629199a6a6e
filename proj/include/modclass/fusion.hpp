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

// Hard-decision fusion of per-antenna classifier outputs: argmax with random
// tie-break per antenna, then plurality or n-out-of-N_r voting.

#include <algorithm>
#include <cstddef>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "decision.hpp"
#include "error.hpp"
#include "rng.hpp"

namespace modclass {

// Probabilities within this distance of the maximum count as tied.
inline constexpr double kTieTolerance = 1e-9;

struct SingleDecision {
    int label = -1;
    bool tie_broken = false;
};

inline SingleDecision decide_single(const DecisionVector& d, Rng& rng)
{
    if (d.probs.empty())
        throw DataError("decide_single: empty decision vector");
    const double mx = *std::max_element(d.probs.begin(), d.probs.end());
    std::vector<int> best;
    for (std::size_t k = 0; k < d.probs.size(); ++k)
        if (d.probs[k] >= mx - kTieTolerance)
            best.push_back(static_cast<int>(k));
    if (best.size() == 1)
        return {best.front(), false};
    std::uniform_int_distribution<std::size_t> pick(0, best.size() - 1);
    return {best[pick(rng)], true};
}

struct FusionRule {
    enum class Kind {
        Majority,
        NOutOf,
        // Average the decision vectors, then argmax. Not a hard-decision rule;
        // offered for comparison only.
        Soft
    };
    Kind kind = Kind::Majority;
    int n = 0;

    static FusionRule majority() { return {Kind::Majority, 0}; }
    static FusionRule n_out_of(int n) { return {Kind::NOutOf, n}; }
    static FusionRule soft() { return {Kind::Soft, 0}; }

    std::string name() const
    {
        switch (kind) {
        case Kind::Majority: return "majority";
        case Kind::NOutOf: return std::to_string(n) + "-out-of-n";
        case Kind::Soft: return "soft";
        }
        return "?";
    }
};

struct FusionOutcome {
    int final_label = -1; // -1 when undecided
    std::vector<int> per_antenna_labels;
    bool tie_broken = false;
    bool undecided = false;
};

// Fuses hard per-antenna labels. Majority: plurality vote, ties broken
// uniformly at random. NOutOf(n): lowest-indexed class with at least n votes,
// otherwise undecided.
inline FusionOutcome fuse(const std::vector<int>& labels, const FusionRule& rule, Rng& rng)
{
    if (labels.empty())
        throw DataError("fuse: no labels");
    FusionOutcome out;
    out.per_antenna_labels = labels;
    std::map<int, int> counts;
    for (int l : labels)
        ++counts[l];

    switch (rule.kind) {
    case FusionRule::Kind::Soft:
        throw ConfigError("fuse: soft fusion needs decision vectors, use fuse_decisions");
    case FusionRule::Kind::NOutOf: {
        if (rule.n < 1 || rule.n > static_cast<int>(labels.size()))
            throw ConfigError("fuse: n-out-of-N_r needs 1 <= n <= " + std::to_string(labels.size()) + ", got " + std::to_string(rule.n));
        for (const auto& [label, count] : counts)
            if (count >= rule.n) {
                out.final_label = label;
                return out;
            }
        out.undecided = true;
        return out;
    }
    case FusionRule::Kind::Majority: {
        int top = 0;
        for (const auto& [label, count] : counts)
            top = std::max(top, count);
        std::vector<int> tied;
        for (const auto& [label, count] : counts)
            if (count == top)
                tied.push_back(label);
        if (tied.size() == 1) {
            out.final_label = tied.front();
        } else {
            std::uniform_int_distribution<std::size_t> pick(0, tied.size() - 1);
            out.final_label = tied[pick(rng)];
            out.tie_broken = true;
        }
        return out;
    }
    }
    return out;
}

// Full per-bundle decision: argmax each antenna, then fuse per `rule`.
inline FusionOutcome fuse_decisions(const std::vector<DecisionVector>& ds, const FusionRule& rule, Rng& rng)
{
    if (ds.empty())
        throw DataError("fuse_decisions: no decision vectors");
    std::vector<int> labels;
    bool any_tie = false;
    for (const auto& d : ds) {
        auto s = decide_single(d, rng);
        labels.push_back(s.label);
        any_tie = any_tie || s.tie_broken;
    }
    if (rule.kind == FusionRule::Kind::Soft) {
        DecisionVector mean;
        mean.probs.assign(ds.front().size(), 0.0);
        for (const auto& d : ds) {
            if (d.size() != mean.size())
                throw DataError("fuse_decisions: decision vectors differ in length");
            for (std::size_t k = 0; k < d.size(); ++k)
                mean.probs[k] += d.probs[k] / static_cast<double>(ds.size());
        }
        auto s = decide_single(mean, rng);
        FusionOutcome out;
        out.per_antenna_labels = std::move(labels);
        out.final_label = s.label;
        out.tie_broken = s.tie_broken;
        return out;
    }
    auto out = fuse(labels, rule, rng);
    out.tie_broken = out.tie_broken || any_tie;
    return out;
}

} // namespace modclass
