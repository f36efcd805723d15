#include "item/data_io.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"

#include "item/likelihood.hpp"
#include "status_json.hpp"

namespace item {

using nlohmann::json;

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else {
      field += c;
    }
  }
  fields.push_back(std::move(field));
  return fields;
}

std::string csv_field(const std::string& text) {
  if (text.find_first_of(",\"\n") == std::string::npos) return text;
  std::string out = "\"";
  for (const char c : text) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::optional<double> parse_double(std::string_view text) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r')) text.remove_suffix(1);
  if (text.empty()) return std::nullopt;
  if (text.front() == '+') text.remove_prefix(1);
  double value = 0.0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || end != text.data() + text.size()) return std::nullopt;
  return value;
}

std::string trim(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.pop_back();
  return s;
}

}  // namespace

namespace detail {

json space_json(const StatusSpace& space) {
  json reachable = json::object();
  json absorbing = json::array();
  for (StateIndex s = 0; s < space.size(); ++s) {
    if (space.is_absorbing(s)) {
      absorbing.push_back(space.name(s));
      continue;
    }
    json targets = json::array();
    for (const auto t : space.reachable(s)) targets.push_back(space.name(t));
    reachable[space.name(s)] = std::move(targets);
  }
  return {{"states", space.states()}, {"reachable", reachable}, {"absorbing", absorbing}};
}

StatusSpace space_from_json(const json& doc) {
  return StatusSpace(doc.at("states").get<std::vector<std::string>>(),
                     doc.at("reachable").get<std::map<std::string, std::vector<std::string>>>(),
                     doc.value("absorbing", std::vector<std::string>{}));
}

}  // namespace detail

std::string_view to_string(ColumnRole role) {
  switch (role) {
    case ColumnRole::LoanId: return "loan_id";
    case ColumnRole::Month: return "month";
    case ColumnRole::Regressor: return "regressor";
    case ColumnRole::StartStatus: return "start_status";
    case ColumnRole::EndStatus: return "end_status";
  }
  return "regressor";
}

ColumnRole parse_column_role(std::string_view text) {
  for (const auto r : {ColumnRole::LoanId, ColumnRole::Month, ColumnRole::Regressor, ColumnRole::StartStatus,
                       ColumnRole::EndStatus}) {
    if (to_string(r) == text) return r;
  }
  throw Error(ErrorKind::SchemaMismatch, "unknown column role '" + std::string(text) + "'");
}

ColumnSchema parse_schema(const std::string& text) {
  ColumnSchema schema;
  try {
    const json doc = json::parse(text);
    schema.space = detail::space_from_json(doc);
    for (const auto& c : doc.at("columns")) {
      ColumnSpec spec;
      spec.name = c.at("name").get<std::string>();
      spec.role = parse_column_role(c.at("role").get<std::string>());
      if (spec.role == ColumnRole::Regressor) {
        spec.kind = parse_regressor_kind(c.value("kind", std::string("real")));
        spec.curveEligible = c.value("curve_eligible", spec.kind == RegressorKind::Real);
        spec.levels = c.value("levels", std::vector<std::string>{});
      }
      schema.columns.push_back(std::move(spec));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::SchemaMismatch, std::string("schema: ") + e.what());
  }
  const auto count = [&](ColumnRole r) {
    return std::count_if(schema.columns.begin(), schema.columns.end(), [r](const auto& c) { return c.role == r; });
  };
  if (count(ColumnRole::StartStatus) != 1 || count(ColumnRole::EndStatus) != 1) {
    throw Error(ErrorKind::SchemaMismatch, "schema needs exactly one start_status and one end_status column");
  }
  if (count(ColumnRole::LoanId) > 1 || count(ColumnRole::Month) > 1) {
    throw Error(ErrorKind::SchemaMismatch, "schema has more than one loan_id or month column");
  }
  std::set<std::string> names;
  for (const auto& c : schema.columns) {
    if (!names.insert(c.name).second) throw Error(ErrorKind::SchemaMismatch, "duplicate column " + c.name);
  }
  return schema;
}

ColumnSchema load_schema(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot open schema " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_schema(buffer.str());
}

std::string serialize_schema(const ColumnSchema& schema) {
  json doc = detail::space_json(schema.space);
  json columns = json::array();
  for (const auto& c : schema.columns) {
    json col = {{"name", c.name}, {"role", to_string(c.role)}};
    if (c.role == ColumnRole::Regressor) {
      col["kind"] = to_string(c.kind);
      col["curve_eligible"] = c.curveEligible;
      if (!c.levels.empty()) col["levels"] = c.levels;
    }
    columns.push_back(std::move(col));
  }
  doc["columns"] = std::move(columns);
  return doc.dump(2) + "\n";
}

ColumnSchema schema_for(const ObservationGrid& grid, const StatusSpace& space) {
  ColumnSchema schema;
  schema.space = space;
  if (!grid.loanIds.empty()) schema.columns.push_back({"loan_id", ColumnRole::LoanId, {}, false, {}});
  if (!grid.months.empty()) schema.columns.push_back({"month", ColumnRole::Month, {}, false, {}});
  for (const auto& m : grid.meta) {
    schema.columns.push_back({m.name, ColumnRole::Regressor, m.kind, m.curveEligible, m.levels});
  }
  schema.columns.push_back({"start_status", ColumnRole::StartStatus, {}, false, {}});
  schema.columns.push_back({"end_status", ColumnRole::EndStatus, {}, false, {}});
  return schema;
}

ObservationGrid read_csv(std::istream& in, const ColumnSchema& schema) {
  std::string line;
  std::size_t lineNo = 0;
  if (!std::getline(in, line)) throw Error(ErrorKind::SchemaMismatch, "missing header row");
  ++lineNo;
  const auto header = split_csv_line(trim(line));
  std::vector<std::string> expected;
  for (const auto& c : schema.columns) expected.push_back(c.name);
  if (header != expected) {
    std::string want;
    for (const auto& e : expected) want += (want.empty() ? "" : ",") + e;
    throw Error(ErrorKind::SchemaMismatch, "header does not match schema (expected " + want + ")");
  }

  std::vector<std::size_t> regressorCols;
  for (std::size_t j = 0; j < schema.columns.size(); ++j) {
    if (schema.columns[j].role == ColumnRole::Regressor) regressorCols.push_back(j);
  }
  const auto k = regressorCols.size();

  ObservationGrid grid;
  std::vector<double> values;
  // Categorical cells are kept as text until all levels are known.
  std::vector<std::vector<std::string>> categoricalText(k);
  std::vector<std::string> ids;
  std::vector<std::string> months;
  const auto& space = schema.space;
  while (std::getline(in, line)) {
    ++lineNo;
    line = trim(line);
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != schema.columns.size()) {
      throw ParseError(lineNo, "expected " + std::to_string(schema.columns.size()) + " fields, found " +
                                   std::to_string(fields.size()));
    }
    for (std::size_t j = 0; j < fields.size(); ++j) {
      const auto& spec = schema.columns[j];
      switch (spec.role) {
        case ColumnRole::LoanId: ids.push_back(fields[j]); break;
        case ColumnRole::Month: months.push_back(fields[j]); break;
        case ColumnRole::StartStatus:
        case ColumnRole::EndStatus: {
          const auto s = space.find(fields[j]);
          if (!s) throw ParseError(lineNo, "unknown status '" + fields[j] + "' in column " + spec.name);
          (spec.role == ColumnRole::StartStatus ? grid.startStatus : grid.endStatus).push_back(*s);
          break;
        }
        case ColumnRole::Regressor: break;
      }
    }
    for (std::size_t r = 0; r < k; ++r) {
      const auto& spec = schema.columns[regressorCols[r]];
      const auto& text = fields[regressorCols[r]];
      if (spec.kind == RegressorKind::Categorical) {
        categoricalText[r].push_back(text);
        values.push_back(0.0);
        continue;
      }
      const auto v = parse_double(text);
      if (!v) throw ParseError(lineNo, "non-numeric value '" + text + "' in column " + spec.name);
      if (spec.kind == RegressorKind::Flag && *v != 0.0 && *v != 1.0) {
        throw ParseError(lineNo, "flag column " + spec.name + " holds '" + text + "'");
      }
      values.push_back(*v);
    }
    const auto s = grid.startStatus.back();
    const auto e = grid.endStatus.back();
    if (!space.can_reach(s, e)) {
      throw ParseError(lineNo, "transition " + space.name(s) + " -> " + space.name(e) + " is not reachable");
    }
  }
  const auto n = static_cast<Eigen::Index>(grid.startStatus.size());
  if (n == 0) throw Error(ErrorKind::EmptyGrid, "no data rows");

  grid.x.resize(n, static_cast<Eigen::Index>(k));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (std::size_t r = 0; r < k; ++r) grid.x(i, static_cast<Eigen::Index>(r)) = values[static_cast<std::size_t>(i) * k + r];
  }
  for (std::size_t r = 0; r < k; ++r) {
    const auto& spec = schema.columns[regressorCols[r]];
    RegressorMeta meta{spec.name, spec.kind, spec.levels, spec.kind == RegressorKind::Real && spec.curveEligible};
    if (spec.kind == RegressorKind::Categorical) {
      if (meta.levels.empty()) {
        const std::set<std::string> seen(categoricalText[r].begin(), categoricalText[r].end());
        meta.levels.assign(seen.begin(), seen.end());
      }
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto& text = categoricalText[r][static_cast<std::size_t>(i)];
        const auto it = std::find(meta.levels.begin(), meta.levels.end(), text);
        if (it == meta.levels.end()) {
          throw Error(ErrorKind::SchemaMismatch, "level '" + text + "' of " + spec.name + " is not declared");
        }
        grid.x(i, static_cast<Eigen::Index>(r)) = static_cast<double>(it - meta.levels.begin());
      }
    }
    grid.meta.push_back(std::move(meta));
  }
  grid.y = one_hot(grid.endStatus, space.size());
  grid.loanIds = std::move(ids);
  grid.months = std::move(months);
  return grid;
}

ObservationGrid load_csv(const std::filesystem::path& path, const ColumnSchema& schema) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot open data file " + path.string());
  return read_csv(in, schema);
}

std::string format_double(double value) {
  char buffer[32];
  std::snprintf(buffer, sizeof buffer, "%.17g", value);
  return buffer;
}

void write_csv(std::ostream& out, const ObservationGrid& grid, const StatusSpace& space) {
  const auto schema = schema_for(grid, space);
  for (std::size_t j = 0; j < schema.columns.size(); ++j) out << (j ? "," : "") << csv_field(schema.columns[j].name);
  out << '\n';
  for (Eigen::Index i = 0; i < grid.rows(); ++i) {
    const auto si = static_cast<std::size_t>(i);
    bool first = true;
    const auto sep = [&] {
      if (!first) out << ',';
      first = false;
    };
    if (!grid.loanIds.empty()) sep(), out << csv_field(grid.loanIds[si]);
    if (!grid.months.empty()) sep(), out << csv_field(grid.months[si]);
    for (Eigen::Index c = 0; c < grid.cols(); ++c) {
      sep();
      const auto& meta = grid.meta[static_cast<std::size_t>(c)];
      if (meta.kind == RegressorKind::Categorical) {
        out << csv_field(meta.levels.at(static_cast<std::size_t>(grid.x(i, c))));
      } else {
        out << format_double(grid.x(i, c));
      }
    }
    sep();
    out << csv_field(space.name(grid.startStatus[si])) << ',' << csv_field(space.name(grid.endStatus[si])) << '\n';
  }
}

std::uint64_t id_hash_residue(std::string_view loanId, std::uint64_t modulus) {
  if (modulus == 0) throw Error(ErrorKind::InvalidArgument, "modulus must be >= 1");
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(loanId.data(), loanId.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorKind::IoError, "SHA-256 failed");
  }
  unsigned __int128 r = 0;
  for (unsigned int i = 0; i < length; ++i) r = ((r << 8) | digest[i]) % modulus;
  return static_cast<std::uint64_t>(r);
}

ObservationGrid sample_by_id_hash(const ObservationGrid& grid, std::uint64_t modulus, std::uint64_t residue) {
  if (modulus == 0 || residue >= modulus) throw Error(ErrorKind::InvalidArgument, "need 0 <= residue < modulus");
  if (grid.loanIds.size() != static_cast<std::size_t>(grid.rows())) {
    throw Error(ErrorKind::InvalidArgument, "id hash sampling needs a loan id column");
  }
  std::vector<Eigen::Index> rows;
  for (Eigen::Index i = 0; i < grid.rows(); ++i) {
    if (id_hash_residue(grid.loanIds[static_cast<std::size_t>(i)], modulus) == residue) rows.push_back(i);
  }
  return select_rows(grid, rows);
}

ObservationGrid shuffle(const ObservationGrid& grid, std::uint64_t seed) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(grid.rows()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  // Fisher-Yates with an explicit draw so the permutation does not depend on
  // the standard library's std::shuffle.
  std::mt19937_64 rng(seed);
  for (std::size_t i = order.size(); i > 1; --i) {
    const std::uint64_t j = rng() % i;
    std::swap(order[i - 1], order[j]);
  }
  return select_rows(grid, order);
}

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  const ItemModel& truth = spec.truth;
  check_model(truth);
  const auto k = static_cast<Eigen::Index>(truth.regressors.size());
  if (spec.distributions.size() != truth.regressors.size()) {
    throw Error(ErrorKind::InvalidArgument, "need one sampling distribution per regressor");
  }
  if (spec.n < 1) throw Error(ErrorKind::InvalidArgument, "synthetic N must be >= 1");

  SyntheticData out;
  ObservationGrid& grid = out.grid;
  grid.meta = truth.regressors;
  grid.x.resize(spec.n, k);
  std::mt19937_64 rng(spec.seed);
  for (Eigen::Index c = 0; c < k; ++c) {
    const auto& d = spec.distributions[static_cast<std::size_t>(c)];
    const auto kind = truth.regressors[static_cast<std::size_t>(c)].kind;
    if (kind == RegressorKind::Flag && d.kind != RegressorDistribution::Kind::Bernoulli) {
      throw Error(ErrorKind::InvalidArgument, "flag regressors need a Bernoulli distribution");
    }
    for (Eigen::Index i = 0; i < spec.n; ++i) {
      switch (d.kind) {
        case RegressorDistribution::Kind::Uniform: grid.x(i, c) = std::uniform_real_distribution<double>(d.p1, d.p2)(rng); break;
        case RegressorDistribution::Kind::Normal: grid.x(i, c) = std::normal_distribution<double>(d.p1, d.p2)(rng); break;
        case RegressorDistribution::Kind::Bernoulli: grid.x(i, c) = std::bernoulli_distribution(d.p1)(rng) ? 1.0 : 0.0; break;
      }
    }
  }
  const auto& outcomes = truth.outcomes();
  grid.startStatus.assign(static_cast<std::size_t>(spec.n), truth.startStatus);
  grid.endStatus.resize(static_cast<std::size_t>(spec.n));
  grid.loanIds.resize(static_cast<std::size_t>(spec.n));
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  double entropy = 0.0;
  for (Eigen::Index i = 0; i < spec.n; ++i) {
    const Eigen::VectorXd p = softmax(power_scores(truth, grid.x.row(i)));
    const double u = uniform(rng);
    double cumulative = 0.0;
    Eigen::Index pick = p.size() - 1;
    for (Eigen::Index w = 0; w + 1 < p.size(); ++w) {
      cumulative += p(w);
      if (u < cumulative) {
        pick = w;
        break;
      }
    }
    entropy -= std::log(p(pick));
    grid.endStatus[static_cast<std::size_t>(i)] = outcomes[static_cast<std::size_t>(pick)];
    grid.loanIds[static_cast<std::size_t>(i)] = "L" + std::to_string(i);
  }
  grid.y = one_hot(grid.endStatus, truth.space.size());
  out.generatorEntropy = entropy / static_cast<double>(spec.n);
  return out;
}

void write_projection_csv(std::ostream& out, const Projection& projection, const StatusSpace& space) {
  out << "time,state,probability,std_error\n";
  for (Eigen::Index t = 0; t < projection.probability.rows(); ++t) {
    for (StateIndex s = 0; s < space.size(); ++s) {
      out << t << ',' << csv_field(space.name(s)) << ',' << format_double(projection.probability(t, s)) << ','
          << format_double(projection.stdError(t, s)) << '\n';
    }
  }
}

}  // namespace item
