#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "crashwatch/core.hpp"

namespace crashwatch {

struct ResampleConfig {
  int smote_k = 5;
  int enn_k = 3;  // must be odd so the vote cannot tie
  double target_minority_ratio = 1.0;
  std::uint64_t seed = 0;
};

enum class Provenance : std::uint8_t { Original, Synthetic };

struct SmoteResult {
  Matrix x;
  std::vector<std::uint8_t> y;
  std::vector<Provenance> provenance;
  std::vector<std::int64_t> origin;  // input row for originals, -1 for synthetics
  int smote_k_used = 0;              // clamped to minority size - 1 when needed
  bool k_clamped = false;
};

struct EnnResult {
  Matrix x;
  std::vector<std::uint8_t> y;
  std::vector<std::uint8_t> removed;  // per input row
};

struct ResampleResult {
  Matrix x;  // surviving rows, originals first
  std::vector<std::uint8_t> y;
  std::vector<Provenance> provenance;        // per pre-ENN row
  std::vector<std::int64_t> origin;          // per pre-ENN row
  std::vector<std::uint8_t> removed_by_enn;  // per pre-ENN row
  int smote_k_used = 0;
  bool k_clamped = false;
};

// Interpolates synthetics between minority rows and their nearest minority
// neighbours until minority/majority reaches the target ratio.
SmoteResult smote(const Matrix& x, const std::vector<std::uint8_t>& y, const ResampleConfig& cfg);

// Drops every sample whose enn_k nearest neighbours (excluding itself) vote
// against its own label. One pass over the original neighbour graph.
EnnResult enn(const Matrix& x, const std::vector<std::uint8_t>& y, const ResampleConfig& cfg);

ResampleResult smote_enn(const Matrix& x, const std::vector<std::uint8_t>& y, const ResampleConfig& cfg);

// `row,provenance,origin,label` with provenance original|synthetic|removed.
void save_resample_audit_csv(const ResampleResult& r, const std::string& path);

}  // namespace crashwatch
