#pragma once

// Model files (JSON) and the fit report CSV.

#include <filesystem>
#include <iosfwd>
#include <string>

#include "item/model.hpp"

namespace item {

inline constexpr int kModelFileVersion = 1;

/// Fields: version, start_status, reference_state, states, reachable,
/// absorbing, regressors, intercepts, flag_betas, curves. Doubles are written
/// in shortest round-trip form, so parse_model(serialize_model(m)) == m.
std::string serialize_model(const ItemModel& model);

/// Throws ParseError for malformed documents and InvalidArgument for models
/// that fail check_model.
ItemModel parse_model(const std::string& text);

void save_model(const ItemModel& model, const std::filesystem::path& path);
ItemModel load_model(const std::filesystem::path& path);

/// Header: regressor,to_state,type,center,slope,neg_ll,delta_aic,delta_bic
void write_report_csv(std::ostream& out, const FitReport& report);

}  // namespace item
