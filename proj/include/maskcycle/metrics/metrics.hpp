#pragma once

#include <cstdint>

#include "maskcycle/imaging/image.hpp"

namespace maskcycle::metrics {

struct OverlapCounts {
    std::int64_t predicted = 0; // |P|
    std::int64_t truth = 0;     // |G|
    std::int64_t intersection = 0;

    std::int64_t union_size() const { return predicted + truth - intersection; }
};

inline OverlapCounts overlap(const BinaryMask& pred, const BinaryMask& truth)
{
    if (pred.height() != truth.height() || pred.width() != truth.width())
        throw ShapeError("mask dimensions differ: " + std::to_string(pred.height()) + "x" +
                         std::to_string(pred.width()) + " vs " + std::to_string(truth.height()) + "x" +
                         std::to_string(truth.width()));
    const auto p = pred.data().cast<std::int64_t>();
    const auto g = truth.data().cast<std::int64_t>();
    return {p.sum(), g.sum(), (p * g).sum()};
}

// 2|P n G| / (|P| + |G|); two empty masks score 1.
inline double dice(const OverlapCounts& c)
{
    const std::int64_t denom = c.predicted + c.truth;
    return denom == 0 ? 1.0 : 2.0 * static_cast<double>(c.intersection) / static_cast<double>(denom);
}

// |P n G| / |P u G|; two empty masks score 1.
inline double iou(const OverlapCounts& c)
{
    const std::int64_t u = c.union_size();
    return u == 0 ? 1.0 : static_cast<double>(c.intersection) / static_cast<double>(u);
}

inline double dice(const BinaryMask& pred, const BinaryMask& truth) { return dice(overlap(pred, truth)); }
inline double iou(const BinaryMask& pred, const BinaryMask& truth) { return iou(overlap(pred, truth)); }

} // namespace maskcycle::metrics
