#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "pathbench/errors.hpp"
#include "pathbench/numkit/rng.hpp"

namespace pathbench::splitkit {

struct SeedBundle {
  std::uint64_t master_seed = 0;
  std::uint64_t split_seed = 0;
  std::uint64_t shuffle_seed = 0;
  std::uint64_t init_seed = 0;

  friend bool operator==(const SeedBundle&, const SeedBundle&) = default;
};

/**
 * Seeds for one replicate of one task:
 *   base    = mix(master ^ fnv1a64(task_id) ^ replicate * gamma)
 *   split   = mix(base + 1 * gamma)
 *   shuffle = mix(base + 2 * gamma)
 *   init    = mix(base + 3 * gamma)
 * with mix the SplitMix64 finalizer and gamma its golden-ratio increment.
 * `mix` is a bijection, so distinct replicates give distinct bases.
 */
inline SeedBundle derive_seeds(std::uint64_t master, std::string_view task_id, std::uint32_t replicate,
                               std::uint32_t replicate_count = 5) {
  using numkit::kSplitMixGamma;
  using numkit::splitmix64_mix;
  if (replicate >= replicate_count) {
    throw ContractViolation("derive_seeds: replicate " + std::to_string(replicate) + " >= configured count " +
                            std::to_string(replicate_count));
  }
  const std::uint64_t base =
      splitmix64_mix(master ^ numkit::fnv1a64(task_id) ^ (static_cast<std::uint64_t>(replicate) * kSplitMixGamma));
  return SeedBundle{master, splitmix64_mix(base + 1 * kSplitMixGamma), splitmix64_mix(base + 2 * kSplitMixGamma),
                    splitmix64_mix(base + 3 * kSplitMixGamma)};
}

}  // namespace pathbench::splitkit
