#pragma once

#include <string>
#include <vector>

#include "cfa/model.hpp"

namespace cfa {

// Per-loading directional consistency: dcr = 100 * M / N where M counts the
// replicates whose estimate sign matches the truth sign. An estimate of
// exactly zero counts as positive and sets `ties`.
struct DcrRecord {
  int loading_index = 0;  // 0-based position in the loading vector
  double truth = 0.0;
  long long matches = 0;  // M
  long long total = 0;    // N
  double dcr = 0.0;
  bool ties = false;
};

enum class FlipClass { Match, GlobalFlip, Mixed };

// One record per free loading (fixed loadings carry no direction information
// and are skipped). free_mask empty means all loadings are free. Throws on
// length mismatch or a zero truth entry.
std::vector<DcrRecord> dcr(const std::vector<std::vector<double>>& estimates,
                           const std::vector<double>& truth,
                           const std::vector<bool>& free_mask = {});

// Match when every free loading matches the truth sign, GlobalFlip when
// every one is opposite, Mixed otherwise. Zero estimates count as positive.
FlipClass classify_flip(const std::vector<double>& estimate, const std::vector<double>& truth,
                        const std::vector<bool>& free_mask = {});

const char* flip_class_name(FlipClass c);

// Designates `anchor` as the loading fixed at 1 for its factor, removing any
// start directive on it; every other directive is preserved. Idempotent when
// the anchor is already fixed at 1. Throws std::invalid_argument on an
// unknown anchor or one already fixed to a value other than 1.
ModelSpec anchor_reorder(const ModelSpec& spec, const LoadingKey& anchor);

}  // namespace cfa
