#pragma once

#include <stdexcept>
#include <string>

namespace deeplda {

// Covariance degeneracy is an expected runtime outcome (likelihood training
// drives Sigma toward singularity), so factorization failures are typed
// errors that callers can catch and report instead of process aborts.
struct NotPositiveDefinite : std::runtime_error {
  explicit NotPositiveDefinite(const std::string& what) : std::runtime_error(what) {}
};

struct NonPositiveDiagonal : std::runtime_error {
  explicit NonPositiveDiagonal(const std::string& what) : std::runtime_error(what) {}
};

struct DimensionMismatch : std::runtime_error {
  explicit DimensionMismatch(const std::string& what) : std::runtime_error(what) {}
};

struct InvalidLabel : std::runtime_error {
  explicit InvalidLabel(const std::string& what) : std::runtime_error(what) {}
};

struct NegativeLambda : std::runtime_error {
  explicit NegativeLambda(const std::string& what) : std::runtime_error(what) {}
};

struct EmptyBatch : std::runtime_error {
  explicit EmptyBatch(const std::string& what) : std::runtime_error(what) {}
};

struct EmptyDataset : std::runtime_error {
  explicit EmptyDataset(const std::string& what) : std::runtime_error(what) {}
};

// Raised when a loss or one of its gradients overflows. The training loop
// treats this as the collapse regime, not as a bug.
struct NonFiniteLoss : std::runtime_error {
  explicit NonFiniteLoss(const std::string& what) : std::runtime_error(what) {}
};

struct StaleCache : std::runtime_error {
  explicit StaleCache(const std::string& what) : std::runtime_error(what) {}
};

struct ShapeMismatch : std::runtime_error {
  explicit ShapeMismatch(const std::string& what) : std::runtime_error(what) {}
};

struct LengthMismatch : std::runtime_error {
  explicit LengthMismatch(const std::string& what) : std::runtime_error(what) {}
};

struct ConfidenceOutOfRange : std::runtime_error {
  explicit ConfidenceOutOfRange(const std::string& what) : std::runtime_error(what) {}
};

struct GridTooCoarse : std::runtime_error {
  explicit GridTooCoarse(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace deeplda
