#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "pathbench/embstore/binary_io.hpp"
#include "pathbench/errors.hpp"

namespace pathbench::embstore {

struct ModelCard {
  std::string model_id;
  std::string display_name;
  std::int64_t parameter_count = 0;
  std::int64_t training_slides = 0;
};

inline ModelCard model_card_from_json(const nlohmann::json& j) {
  ModelCard c;
  try {
    c.model_id = j.at("model_id").get<std::string>();
    c.display_name = j.value("display_name", c.model_id);
    c.parameter_count = j.at("parameter_count").get<std::int64_t>();
    c.training_slides = j.at("training_slides").get<std::int64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("model card: ") + e.what());
  }
  if (c.model_id.empty()) throw ParseError("model card: empty model_id");
  if (c.parameter_count <= 0 || c.training_slides <= 0) {
    throw ParseError("model card " + c.model_id + ": parameter_count and training_slides must be positive");
  }
  return c;
}

inline nlohmann::json to_json(const ModelCard& c) {
  return {{"model_id", c.model_id},
          {"display_name", c.display_name},
          {"parameter_count", c.parameter_count},
          {"training_slides", c.training_slides}};
}

/// Accepts a single card object, an array of cards, or {"models": [...]}.
inline std::vector<ModelCard> read_model_cards(const std::filesystem::path& path) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  std::vector<ModelCard> cards;
  const nlohmann::json& list = doc.is_object() && doc.contains("models") ? doc.at("models") : doc;
  if (list.is_array()) {
    for (const auto& item : list) cards.push_back(model_card_from_json(item));
  } else {
    cards.push_back(model_card_from_json(list));
  }
  return cards;
}

}  // namespace pathbench::embstore
