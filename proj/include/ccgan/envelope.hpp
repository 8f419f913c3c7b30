#pragma once

#include <cstddef>

#include "ccgan/envelope_image.hpp"

namespace ccgan {

inline constexpr std::size_t kMinAxialSamples = 8;

/// Magnitude of the analytic signal of each axial line (column) of rf.
/// The analytic signal is formed in the frequency domain: DC and Nyquist kept,
/// positive frequencies doubled, negative frequencies zeroed.
EnvelopeImage envelope_detect(const Grid<double>& rf, double axial_spacing = 1.0,
                              double lateral_spacing = 1.0, Domain domain = Domain::phased);

/// Divides by the frame maximum. Throws DataError("degenerate frame") when
/// the frame is all zero, and rejects negative or non-finite samples.
EnvelopeImage normalize(const EnvelopeImage& img);

/// Bilinear resampling with corner alignment, so first and last samples map
/// onto first and last samples. Spacings are rescaled to keep the extent.
EnvelopeImage resample_to_model_grid(const EnvelopeImage& img,
                                     std::size_t target_rows = kModelGridSize,
                                     std::size_t target_cols = kModelGridSize);

/// Every sample finite and >= 0.
bool is_valid_envelope(const EnvelopeImage& img);

}  // namespace ccgan
