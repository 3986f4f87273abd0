#include "ndeepc/signals.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>
#include <random>
#include <string>

#include "ndeepc/csv.hpp"
#include "ndeepc/error.hpp"

namespace ndeepc::signals {
namespace {

std::vector<int> in_band_bins(const MultisineSpec &spec) {
    std::vector<int> bins;
    const double p = spec.period;
    for (int k = 1; 2 * k < spec.period; ++k) {
        const double frac = 2.0 * k / p;
        if (frac >= spec.band_low - 1e-12 && frac <= spec.band_high + 1e-12) bins.push_back(k);
    }
    return bins;
}

struct Candidate {
    std::vector<int> bins;
    std::vector<double> one_period;
    double crest = 0.0;
};

std::vector<double> synthesize(const std::vector<int> &bins, const std::vector<double> &phases,
                               int period) {
    std::vector<double> x(static_cast<std::size_t>(period), 0.0);
    for (std::size_t i = 0; i < bins.size(); ++i) {
        const double w = 2.0 * std::numbers::pi * bins[i] / period;
        for (int t = 0; t < period; ++t) x[static_cast<std::size_t>(t)] += std::cos(w * t + phases[i]);
    }
    return x;
}

Candidate search(const MultisineSpec &spec) {
    spec.validate();
    std::vector<int> pool = in_band_bins(spec);
    if (static_cast<int>(pool.size()) < spec.num_sinusoids) {
        throw ConfigError("band contains " + std::to_string(pool.size()) + " DFT bins, " +
                          std::to_string(spec.num_sinusoids) + " sinusoids requested");
    }
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> phase_dist(0.0, 2.0 * std::numbers::pi);
    const auto k = static_cast<std::size_t>(spec.num_sinusoids);

    Candidate best;
    best.crest = std::numeric_limits<double>::infinity();
    for (int ft = 0; ft < spec.frequency_trials; ++ft) {
        // Partial Fisher-Yates draw of k distinct bins.
        for (std::size_t i = 0; i < k; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
            std::swap(pool[i], pool[pick(rng)]);
        }
        std::vector<int> bins(pool.begin(), pool.begin() + static_cast<long>(k));
        std::sort(bins.begin(), bins.end());

        for (int pt = 0; pt < spec.phase_trials; ++pt) {
            std::vector<double> phases(k);
            for (std::size_t i = 0; i < k; ++i) {
                const double idx = static_cast<double>(i + 1);
                phases[i] = pt == 0 ? -std::numbers::pi * idx * (idx - 1.0) / static_cast<double>(k)
                                    : phase_dist(rng);
            }
            auto x = synthesize(bins, phases, spec.period);
            const double cf = crest_factor(x);
            if (cf < best.crest) {
                best.crest = cf;
                best.bins = bins;
                best.one_period = std::move(x);
            }
        }
    }
    return best;
}

}  // namespace

void MultisineSpec::validate() const {
    if (!(range_low < range_high)) throw ConfigError("multisine range requires low < high");
    if (band_low < 0.0 || band_high > 1.0 || band_low > band_high) {
        throw ConfigError("multisine band must satisfy 0 <= low <= high <= 1");
    }
    if (period < 1) throw ConfigError("multisine period must be >= 1");
    if (num_periods < 1) throw ConfigError("multisine num_periods must be >= 1");
    if (num_sinusoids < 1) throw ConfigError("multisine needs at least one sinusoid");
    if (frequency_trials < 1 || phase_trials < 1) throw ConfigError("multisine trial counts must be >= 1");
}

double crest_factor(std::span<const double> x) {
    if (x.empty()) return 0.0;
    const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
    double ss = 0.0;
    for (double v : x) ss += v * v;
    const double rms = std::sqrt(ss / static_cast<double>(x.size()));
    return rms > 0.0 ? (*hi - *lo) / (2.0 * rms) : 0.0;
}

std::vector<int> multisine_bins(const MultisineSpec &spec) { return search(spec).bins; }

std::vector<double> multisine(const MultisineSpec &spec) {
    const Candidate best = search(spec);
    const auto [mn, mx] = std::minmax_element(best.one_period.begin(), best.one_period.end());
    const double lo = *mn;
    const double span = *mx - lo;
    std::vector<double> one(best.one_period.size());
    for (std::size_t t = 0; t < one.size(); ++t) {
        one[t] = span > 0.0 ? spec.range_low + (best.one_period[t] - lo) / span * (spec.range_high - spec.range_low)
                            : 0.5 * (spec.range_low + spec.range_high);
    }
    // Pin the extremes exactly against rounding in the affine map.
    if (span > 0.0) {
        one[static_cast<std::size_t>(mn - best.one_period.begin())] = spec.range_low;
        one[static_cast<std::size_t>(mx - best.one_period.begin())] = spec.range_high;
    }
    std::vector<double> out;
    out.reserve(one.size() * static_cast<std::size_t>(spec.num_periods));
    for (int p = 0; p < spec.num_periods; ++p) out.insert(out.end(), one.begin(), one.end());
    return out;
}

void ReferenceSpec::validate() const {
    if (horizon < 1) throw ConfigError("reference horizon must be >= 1");
    if (kind == ReferenceKind::Steps) {
        if (levels.empty() || levels.size() != dwell.size()) {
            throw ConfigError("step reference needs matching, non-empty levels and dwell lists");
        }
        if (std::any_of(dwell.begin(), dwell.end(), [](int d) { return d < 1; })) {
            throw ConfigError("step dwell lengths must be >= 1");
        }
    } else {
        if (!(start_hz > 0.0) || end_hz < start_hz) {
            throw ConfigError("chirp frequencies must be positive and non-decreasing");
        }
        if (!(sample_time > 0.0)) throw ConfigError("chirp sample time must be positive");
    }
}

std::vector<double> reference(const ReferenceSpec &spec) {
    spec.validate();
    std::vector<double> r(static_cast<std::size_t>(spec.horizon));
    if (spec.kind == ReferenceKind::Steps) {
        std::size_t seg = 0;
        int left = spec.dwell[0];
        for (auto &v : r) {
            if (left == 0) {
                seg = (seg + 1) % spec.levels.size();
                left = spec.dwell[seg];
            }
            v = spec.levels[seg];
            --left;
        }
    } else {
        const double last = spec.horizon > 1 ? spec.horizon - 1 : 1;
        for (int k = 0; k < spec.horizon; ++k) {
            const double f = spec.start_hz + (spec.end_hz - spec.start_hz) * k / last;
            r[static_cast<std::size_t>(k)] =
                spec.amplitude * std::sin(2.0 * std::numbers::pi * f * k * spec.sample_time);
        }
    }
    return r;
}

void write_signal_csv(std::ostream &os, std::string_view column, std::span<const double> values) {
    csv::Table t;
    t.add_column(std::string(column), {values.begin(), values.end()});
    csv::write(os, t);
}

}  // namespace ndeepc::signals
