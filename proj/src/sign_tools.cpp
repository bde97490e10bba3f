#include "cfa/sign_tools.hpp"

#include <stdexcept>

namespace cfa {

namespace {

// Sign with the documented tie rule: zero is positive.
bool is_positive(double v) { return v >= 0.0; }

std::vector<bool> resolve_mask(const std::vector<bool>& mask, std::size_t size) {
  if (mask.empty()) return std::vector<bool>(size, true);
  if (mask.size() != size)
    throw std::invalid_argument("free mask length does not match the loading vector");
  return mask;
}

}  // namespace

std::vector<DcrRecord> dcr(const std::vector<std::vector<double>>& estimates,
                           const std::vector<double>& truth,
                           const std::vector<bool>& free_mask) {
  const std::size_t k = truth.size();
  auto mask = resolve_mask(free_mask, k);
  for (std::size_t j = 0; j < k; ++j)
    if (mask[j] && truth[j] == 0.0)
      throw std::invalid_argument("truth loading " + std::to_string(j + 1) + " is zero");
  for (const auto& est : estimates)
    if (est.size() != k)
      throw std::invalid_argument("estimate vector length does not match truth");

  std::vector<DcrRecord> records;
  for (std::size_t j = 0; j < k; ++j) {
    if (!mask[j]) continue;
    DcrRecord rec;
    rec.loading_index = static_cast<int>(j);
    rec.truth = truth[j];
    for (const auto& est : estimates) {
      ++rec.total;
      if (est[j] == 0.0) rec.ties = true;
      if (is_positive(est[j]) == is_positive(truth[j])) ++rec.matches;
    }
    rec.dcr = rec.total == 0 ? 0.0 : 100.0 * static_cast<double>(rec.matches) /
                                         static_cast<double>(rec.total);
    records.push_back(rec);
  }
  return records;
}

FlipClass classify_flip(const std::vector<double>& estimate, const std::vector<double>& truth,
                        const std::vector<bool>& free_mask) {
  if (estimate.size() != truth.size())
    throw std::invalid_argument("estimate and truth lengths differ");
  auto mask = resolve_mask(free_mask, truth.size());

  bool all_match = true;
  bool all_flip = true;
  for (std::size_t j = 0; j < truth.size(); ++j) {
    if (!mask[j]) continue;
    bool same = is_positive(estimate[j]) == is_positive(truth[j]);
    all_match = all_match && same;
    all_flip = all_flip && !same;
  }
  if (all_match) return FlipClass::Match;
  if (all_flip) return FlipClass::GlobalFlip;
  return FlipClass::Mixed;
}

const char* flip_class_name(FlipClass c) {
  switch (c) {
    case FlipClass::Match: return "match";
    case FlipClass::GlobalFlip: return "global_flip";
    case FlipClass::Mixed: return "mixed";
  }
  return "unknown";
}

ModelSpec anchor_reorder(const ModelSpec& spec, const LoadingKey& anchor) {
  if (!spec.has_loading(anchor))
    throw std::invalid_argument("unknown anchor " + anchor.first + "." + anchor.second);
  auto f = spec.fixed_loadings.find(anchor);
  if (f != spec.fixed_loadings.end()) {
    if (f->second != 1.0)
      throw std::invalid_argument("anchor " + anchor.first + "." + anchor.second +
                                  " is already fixed to a value other than 1");
    return spec;  // already the designated anchor
  }
  ModelSpec out = spec;
  out.fixed_loadings[anchor] = 1.0;
  out.loading_starts.erase(anchor);
  out.fixed_factor_variances.erase(anchor.first);  // the variance becomes free
  return out;
}

}  // namespace cfa
