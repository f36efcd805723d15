#pragma once

#include "json.hpp"

#include "item/model.hpp"

namespace item::detail {

/// {"states": [...], "reachable": {...}, "absorbing": [...]}
nlohmann::json space_json(const StatusSpace& space);
StatusSpace space_from_json(const nlohmann::json& doc);

}  // namespace item::detail
