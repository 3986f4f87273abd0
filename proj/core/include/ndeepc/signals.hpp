#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

namespace ndeepc::signals {

/// Periodic multisine excitation. Frequencies are drawn from the in-band DFT
/// grid of one period; `band` is expressed as a fraction of the Nyquist
/// frequency.
struct MultisineSpec {
    double range_low = -4.0;
    double range_high = 4.0;
    double band_low = 0.0;
    double band_high = 1.0;
    int period = 1000;
    int num_periods = 1;
    int num_sinusoids = 25;
    /// Number of random frequency sets tried.
    int frequency_trials = 40;
    /// Phase candidates per frequency set; the first is always the Schroeder
    /// phase, the rest are uniform random.
    int phase_trials = 1;
    std::uint64_t seed = 1;

    void validate() const;
};

/// Peak-to-peak over twice the RMS; equals the classical crest factor for
/// zero-mean symmetric signals.
double crest_factor(std::span<const double> x);

/// Length period * num_periods; min == range_low and max == range_high.
std::vector<double> multisine(const MultisineSpec &spec);

/// In-band DFT bins selected by `multisine` for the given spec (sorted).
std::vector<int> multisine_bins(const MultisineSpec &spec);

enum class ReferenceKind { Steps, Chirp };

struct ReferenceSpec {
    ReferenceKind kind = ReferenceKind::Steps;
    // Steps: level i is held for dwell[i] samples; the pattern repeats.
    std::vector<double> levels{0.5, -0.5};
    std::vector<int> dwell{150, 150};
    // Chirp: amplitude * sin(2 pi f(k) k Ts), f linear from start to end.
    double start_hz = 0.05;
    double end_hz = 0.5;
    double amplitude = 0.5;
    double sample_time = 0.033;
    int horizon = 600;

    void validate() const;
};

std::vector<double> reference(const ReferenceSpec &spec);

/// One-column CSV with a header row.
void write_signal_csv(std::ostream &os, std::string_view column, std::span<const double> values);

}  // namespace ndeepc::signals
