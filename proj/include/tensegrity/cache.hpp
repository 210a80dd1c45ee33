// On-disk caches for equilibrium seeds and catastrophe witnesses, keyed by the
// system hash and the RNG seed.
#pragma once

#include <memory>
#include <optional>
#include <string>

#include "tensegrity/catastrophe.hpp"
#include "tensegrity/equilibria.hpp"

namespace tensegrity {

/// TENSEGRITY_CACHE_DIR when set and non-empty.
std::optional<std::string> cache_dir_from_env();

std::string seed_cache_path(const std::string& dir, const FrameworkModel& model, const TrackerConfig& cfg);
std::string witness_cache_path(const std::string& dir, const FrameworkModel& model, const TrackerConfig& cfg);

/// Loads the seed from `dir` when present, else solves and stores it. A
/// corrupt cache entry is rebuilt.
EquilibriumSeed cached_generic_seed(const FrameworkModel& model, const TrackerConfig& cfg,
                                    const std::optional<std::string>& dir);
PseudoWitnessSet cached_witness(std::shared_ptr<const FrameworkModel> model, const TrackerConfig& cfg,
                                const std::optional<std::string>& dir, const WitnessOptions& opts = {});

}  // namespace tensegrity
