#pragma once

#include <stdexcept>
#include <string>

namespace gla {

/// Base class for all library errors so callers can catch one type.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Gaze origin and gaze target (nearly) coincide, no direction exists.
struct DegenerateRay : Error {
  using Error::Error;
};

/// Direction points away from the camera (g_z >= 0), outside the polar chart.
struct OutOfFrustum : Error {
  using Error::Error;
};

/// An alignment unit is too small to fit anything at all.
struct InsufficientSamples : Error {
  using Error::Error;
};

/// A sample has no alignment model covering it during relabeling.
struct UncoveredSample : Error {
  using Error::Error;
};

/// Training produced a non-finite loss; message carries the batch index.
struct NonFiniteLoss : Error {
  using Error::Error;
};

/// Evaluation requested on an empty dataset.
struct NoSamples : Error {
  using Error::Error;
};

/// Homogeneous division by a (near-)zero third coordinate.
struct ProjectiveDegenerate : Error {
  using Error::Error;
};

}  // namespace gla
