#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pathbench/embstore/bound_dataset.hpp"
#include "pathbench/errors.hpp"
#include "pathbench/numkit/matrix.hpp"
#include "pathbench/numkit/rng.hpp"

namespace pathbench::milkit {

using numkit::MatrixD;

struct Bag {
  std::string slide_id;
  MatrixD instances;                  // n x dim, n = min(sampled_from, cap)
  int label = -1;
  std::size_t sampled_from = 0;
  std::vector<std::string> item_ids;  // one per instance row
  embstore::SplitTag split = embstore::SplitTag::None;
};

/**
 * One bag per slide (slides in lexicographic order). Slides with more than
 * `cap` items keep a uniform sample without replacement drawn from
 * stream_key(seed, fnv1a64(slide_id)); kept rows stay in manifest order.
 */
inline std::vector<Bag> build_bags(const embstore::BoundDataset& data, std::size_t cap, std::uint64_t seed) {
  if (cap == 0) throw ConfigError("build_bags: cap must be positive");
  std::map<std::string, std::vector<std::size_t>> slides;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& r = data.record(i);
    if (r.slide_id.empty()) throw ConfigError("build_bags: item '" + r.item_id + "' has no slide_id");
    slides[r.slide_id].push_back(i);
  }
  std::vector<Bag> bags;
  bags.reserve(slides.size());
  for (auto& [slide, members] : slides) {
    const auto& first = data.record(members.front());
    for (std::size_t idx : members) {
      const auto& r = data.record(idx);
      if (r.label != first.label) {
        throw ConfigError("build_bags: slide '" + slide + "' has conflicting labels " + std::to_string(first.label) +
                          " and " + std::to_string(r.label));
      }
      if (r.split != first.split) throw ConfigError("build_bags: slide '" + slide + "' spans several split tags");
    }
    Bag bag;
    bag.slide_id = slide;
    bag.label = first.label;
    bag.split = first.split;
    bag.sampled_from = members.size();
    if (members.size() > cap) {
      numkit::CounterRng rng(numkit::stream_key(seed, numkit::fnv1a64(slide)));
      rng.shuffle(members);
      members.resize(cap);
      std::sort(members.begin(), members.end());
    }
    bag.instances = data.gather(members);
    for (std::size_t idx : members) bag.item_ids.push_back(data.record(idx).item_id);
    bags.push_back(std::move(bag));
  }
  return bags;
}

inline std::vector<int> bag_labels(const std::vector<Bag>& bags) {
  std::vector<int> out;
  out.reserve(bags.size());
  for (const auto& b : bags) out.push_back(b.label);
  return out;
}

}  // namespace pathbench::milkit
