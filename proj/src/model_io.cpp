#include "item/model_io.hpp"

#include <fstream>
#include <ostream>
#include <sstream>

#include "item/data_io.hpp"
#include "json.hpp"
#include "status_json.hpp"

namespace item {

using nlohmann::json;

std::string serialize_model(const ItemModel& model) {
  check_model(model);
  const auto& space = model.space;
  json doc = detail::space_json(space);
  doc["version"] = kModelFileVersion;
  doc["start_status"] = space.name(model.startStatus);
  doc["reference_state"] = space.name(model.referenceState);

  json regressors = json::array();
  for (const auto& r : model.regressors) {
    json entry = {{"name", r.name}, {"kind", to_string(r.kind)}, {"curve_eligible", r.curveEligible}};
    if (!r.levels.empty()) entry["levels"] = r.levels;
    regressors.push_back(std::move(entry));
  }
  doc["regressors"] = std::move(regressors);

  json intercepts = json::object();
  json flagBetas = json::object();
  const auto& outcomes = model.outcomes();
  for (std::size_t w = 0; w < outcomes.size(); ++w) {
    const auto& to = space.name(outcomes[w]);
    const auto row = static_cast<Eigen::Index>(w);
    intercepts[to] = model.intercepts(row);
    json betas = json::object();
    for (std::size_t k = 0; k < model.regressors.size(); ++k) {
      const double b = model.flagBetas(row, static_cast<Eigen::Index>(k));
      if (b != 0.0) betas[model.regressors[k].name] = b;
    }
    flagBetas[to] = std::move(betas);
  }
  doc["intercepts"] = std::move(intercepts);
  doc["flag_betas"] = std::move(flagBetas);

  json curves = json::array();
  for (const auto& c : model.curves) {
    curves.push_back({{"family", to_string(c.family)},
                      {"a", c.a},
                      {"b", c.b},
                      {"regressor", model.regressors[static_cast<std::size_t>(c.regressor)].name},
                      {"to_state", space.name(c.toState)},
                      {"beta", c.beta}});
  }
  doc["curves"] = std::move(curves);
  return doc.dump(2) + "\n";
}

ItemModel parse_model(const std::string& text) {
  ItemModel model;
  try {
    const json doc = json::parse(text);
    const int version = doc.at("version").get<int>();
    if (version != kModelFileVersion) {
      throw Error(ErrorKind::ParseError, "unsupported model file version " + std::to_string(version));
    }
    const StatusSpace space = detail::space_from_json(doc);
    std::vector<RegressorMeta> meta;
    for (const auto& r : doc.at("regressors")) {
      RegressorMeta m;
      m.name = r.at("name").get<std::string>();
      m.kind = parse_regressor_kind(r.at("kind").get<std::string>());
      m.curveEligible = r.value("curve_eligible", m.kind == RegressorKind::Real);
      m.levels = r.value("levels", std::vector<std::string>{});
      meta.push_back(std::move(m));
    }
    model = make_empty_model(space, meta, space.index(doc.at("start_status").get<std::string>()));
    model.referenceState = space.index(doc.at("reference_state").get<std::string>());

    const auto regressor_index = [&](const std::string& name) {
      for (std::size_t k = 0; k < meta.size(); ++k) {
        if (meta[k].name == name) return static_cast<Eigen::Index>(k);
      }
      throw Error(ErrorKind::ParseError, "unknown regressor '" + name + "'");
    };
    for (const auto& [to, value] : doc.at("intercepts").items()) {
      model.intercepts(model.outcome_position(space.index(to))) = value.get<double>();
    }
    for (const auto& [to, betas] : doc.at("flag_betas").items()) {
      const int row = model.outcome_position(space.index(to));
      for (const auto& [name, value] : betas.items()) model.flagBetas(row, regressor_index(name)) = value.get<double>();
    }
    for (const auto& c : doc.at("curves")) {
      CurveSpec curve;
      curve.family = parse_curve_family(c.at("family").get<std::string>());
      curve.a = c.at("a").get<double>();
      curve.b = c.at("b").get<double>();
      curve.regressor = regressor_index(c.at("regressor").get<std::string>());
      curve.toState = space.index(c.at("to_state").get<std::string>());
      curve.beta = c.at("beta").get<double>();
      model.curves.push_back(curve);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ParseError, std::string("model file: ") + e.what());
  }
  check_model(model);
  return model;
}

void save_model(const ItemModel& model, const std::filesystem::path& path) {
  const std::string text = serialize_model(model);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorKind::IoError, "write failed for " + path.string());
}

ItemModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open model " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_model(buffer.str());
}

void write_report_csv(std::ostream& out, const FitReport& report) {
  out << "regressor,to_state,type,center,slope,neg_ll,delta_aic,delta_bic\n";
  for (const auto& e : report.entries) {
    out << e.regressor << ',' << e.toState << ',' << to_string(e.family) << ',' << format_double(e.center) << ','
        << format_double(e.slope) << ',' << format_double(e.meanNegLL) << ',' << format_double(e.deltaAIC) << ','
        << format_double(e.deltaBIC) << '\n';
  }
}

}  // namespace item
