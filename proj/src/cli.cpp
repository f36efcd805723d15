#include "item/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "item/concurrency.hpp"
#include "item/data_io.hpp"
#include "item/fitter.hpp"
#include "item/likelihood.hpp"
#include "item/model_io.hpp"
#include "item/projection.hpp"
#include "json.hpp"

namespace item {

using nlohmann::json;

namespace {

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

template <typename Write>
void write_file(const std::filesystem::path& path, Write write) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
  write(out);
  if (!out) throw Error(ErrorKind::IoError, "write failed for " + path.string());
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw Error(ErrorKind::InvalidArgument, "config " + key + ": expected a boolean, got '" + value + "'");
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  std::istringstream in(value);
  T out{};
  in >> out;
  if (!in || !in.eof()) throw Error(ErrorKind::InvalidArgument, "config " + key + ": bad value '" + value + "'");
  return out;
}

// Records what a command read, wrote and how long it took.
class Manifest {
 public:
  explicit Manifest(std::string command) : start_(std::chrono::steady_clock::now()) { doc_["command"] = command; }

  void input(const std::string& key, const std::string& path) { doc_["inputs"][key] = path; }
  void output(const std::string& key, const std::string& path) { doc_["outputs"][key] = path; }
  json& operator[](const std::string& key) { return doc_[key]; }

  void write(const std::filesystem::path& path) {
    const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start_;
    doc_["wall_clock_seconds"] = elapsed.count();
    const std::string text = doc_.dump(2) + "\n";
    write_file(path, [&](std::ostream& out) { out << text; });
  }

 private:
  json doc_;
  std::chrono::steady_clock::time_point start_;
};

std::filesystem::path manifest_path(const std::string& flag, const std::string& firstOutput) {
  return flag.empty() ? std::filesystem::path(firstOutput + ".manifest.json") : std::filesystem::path(flag);
}

// Rows that start in `start`, categorical columns expanded.
ObservationGrid prepare_grid(const ObservationGrid& raw, StateIndex start) {
  return expand_categorical(select_start(raw, start));
}

StateIndex choose_start(const ObservationGrid& grid, const StatusSpace& space, const std::string& flag) {
  if (!flag.empty()) return space.index(flag);
  std::vector<StateIndex> starts = grid.startStatus;
  std::sort(starts.begin(), starts.end());
  starts.erase(std::unique(starts.begin(), starts.end()), starts.end());
  if (starts.size() != 1) {
    throw Error(ErrorKind::InvalidArgument, "data holds several start statuses; pick one with --start-status");
  }
  return starts.front();
}

void check_grid(const ObservationGrid& grid, const StatusSpace& space) {
  const auto violations = validate_grid(grid, space);
  if (violations.empty()) return;
  std::string message = "invalid grid: " + violations.front().message;
  if (violations.front().row >= 0) message += " (row " + std::to_string(violations.front().row) + ")";
  if (violations.size() > 1) message += " and " + std::to_string(violations.size() - 1) + " more";
  throw Error(ErrorKind::InvalidArgument, message);
}

// Column order of `model.regressors` taken from a CSV with named columns.
Eigen::MatrixXd read_covariates(const std::filesystem::path& path, const ItemModel& model) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot open covariates " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::SchemaMismatch, "covariate file has no header");
  std::vector<std::string> header;
  {
    std::stringstream fields(line);
    std::string f;
    while (std::getline(fields, f, ',')) {
      while (!f.empty() && (f.back() == '\r' || f.back() == ' ')) f.pop_back();
      header.push_back(f);
    }
  }
  std::vector<std::size_t> position;
  for (const auto& r : model.regressors) {
    const auto it = std::find(header.begin(), header.end(), r.name);
    if (it == header.end()) throw Error(ErrorKind::SchemaMismatch, "covariate file lacks column " + r.name);
    position.push_back(static_cast<std::size_t>(it - header.begin()));
  }
  std::vector<Eigen::RowVectorXd> rows;
  std::size_t lineNo = 1;
  while (std::getline(in, line)) {
    ++lineNo;
    if (line.empty() || line == "\r") continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    if (fields.size() != header.size()) throw ParseError(lineNo, "wrong number of covariate fields");
    Eigen::RowVectorXd row(static_cast<Eigen::Index>(position.size()));
    for (std::size_t k = 0; k < position.size(); ++k) {
      try {
        std::size_t used = 0;
        row(static_cast<Eigen::Index>(k)) = std::stod(fields[position[k]], &used);
      } catch (const std::exception&) {
        throw ParseError(lineNo, "non-numeric covariate '" + fields[position[k]] + "'");
      }
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw Error(ErrorKind::EmptyGrid, "covariate file has no rows");
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(position.size()));
  for (std::size_t t = 0; t < rows.size(); ++t) out.row(static_cast<Eigen::Index>(t)) = rows[t];
  return out;
}

RegressorDistribution parse_distribution(const json& d) {
  RegressorDistribution out;
  const auto kind = d.at("kind").get<std::string>();
  if (kind == "uniform") {
    out.kind = RegressorDistribution::Kind::Uniform;
    out.p1 = d.at("low").get<double>();
    out.p2 = d.at("high").get<double>();
  } else if (kind == "normal") {
    out.kind = RegressorDistribution::Kind::Normal;
    out.p1 = d.at("mean").get<double>();
    out.p2 = d.at("sd").get<double>();
  } else if (kind == "bernoulli") {
    out.kind = RegressorDistribution::Kind::Bernoulli;
    out.p1 = d.at("p").get<double>();
  } else {
    throw Error(ErrorKind::InvalidArgument, "unknown distribution kind '" + kind + "'");
  }
  return out;
}

// ---------------------------------------------------------------------------

struct FitArgs {
  std::string data, schema, config, outModel, outReport, manifest, startStatus;
  std::string criterion;
  int maxCurves = 0, annealLoops = 0, threads = 0, paramsPerCurve = 0;
  std::uint64_t seed = 0;
  double noiseSd = 0.0, comparatorC = 0.0, llCap = 0.0;
  std::int64_t m0 = 0;
  bool sigmaStop = true, adaptive = true;
};

int cmd_fit(const FitArgs& a, const CLI::App& sub, std::ostream& out) {
  FitConfig config;
  if (!a.config.empty()) config = apply_config(config, parse_key_values(read_text(a.config)));
  const auto given = [&](const char* name) { return sub.get_option(name)->count() > 0; };
  if (given("--criterion")) config.criterion = parse_criterion(a.criterion);
  if (given("--max-curves")) config.maxCurves = a.maxCurves;
  if (given("--seed")) config.seed = a.seed;
  if (given("--threads")) config.threads = a.threads;
  if (given("--noise-sd")) config.noiseSd = a.noiseSd;
  if (given("--anneal-loops")) config.annealLoops = a.annealLoops;
  if (given("--m0")) config.m0 = a.m0;
  if (given("--comparator-c")) config.comparatorC = a.comparatorC;
  if (given("--ll-cap")) config.llCap = a.llCap;
  if (given("--params-per-curve")) config.paramsPerCurve = a.paramsPerCurve;
  if (given("--sigma-stop")) config.sigmaStop = a.sigmaStop;
  if (given("--adaptive")) config.adaptive = a.adaptive;
  check_config(config);

  Manifest manifest("fit");
  manifest.input("data", a.data);
  manifest.input("schema", a.schema);
  if (!a.config.empty()) manifest.input("config", a.config);

  const auto schema = load_schema(a.schema);
  const ObservationGrid raw = load_csv(a.data, schema);
  check_grid(raw, schema.space);
  const StateIndex start = choose_start(raw, schema.space, a.startStatus);
  ObservationGrid grid = shuffle(prepare_grid(raw, start), config.seed);
  if (grid.rows() == 0) throw Error(ErrorKind::EmptyGrid, "no rows start in " + schema.space.name(start));
  if (config.noiseSd > 0.0) {
    std::mt19937_64 rng(mix_seed(config.seed, 0x6e6f697365ULL));
    grid = inject_noise(grid, schema.space, config.noiseSd, rng);
  }

  FitResult result = fit(grid, schema.space, config);
  if (config.annealLoops > 0 && !result.model.curves.empty()) {
    result = anneal(result.model, grid, config, result.report);
  }

  save_model(result.model, a.outModel);
  write_file(a.outReport, [&](std::ostream& o) { write_report_csv(o, result.report); });
  manifest.output("model", a.outModel);
  manifest.output("report", a.outReport);
  json cfg = json::object();
  for (const auto& [k, v] : config_values(config)) cfg[k] = v;
  manifest["config"] = cfg;
  manifest["seed"] = config.seed;
  manifest["rows_processed"] = grid.rows();
  manifest["start_status"] = schema.space.name(start);
  manifest["curves"] = result.model.curves.size();
  manifest["terminal_reason"] = std::string(to_string(result.report.reason));
  manifest["final_neg_ll"] = mean_neg_ll(grid, result.model, config.llCap);
  manifest.write(manifest_path(a.manifest, a.outModel));
  out << "fit: " << result.model.curves.size() << " curves, stopped with " << to_string(result.report.reason)
      << '\n';
  return kExitOk;
}

struct ProjectArgs {
  std::vector<std::string> models;
  std::vector<std::string> timeInState;
  std::string covariates, method = "matrix", start, outPath, manifest;
  std::int64_t paths = 10000;
  int horizon = 12, threads = 1;
  std::uint64_t seed = 1;
};

int cmd_project(const ProjectArgs& a, std::ostream& out) {
  Manifest manifest("project");
  std::vector<ItemModel> models;
  for (const auto& path : a.models) {
    models.push_back(load_model(path));
    manifest["inputs"]["models"].push_back(path);
  }
  const ItemModel& first = models.front();
  Eigen::MatrixXd covariates(1, static_cast<Eigen::Index>(first.regressors.size()));
  covariates.setZero();
  if (!a.covariates.empty()) {
    covariates = read_covariates(a.covariates, first);
    manifest.input("covariates", a.covariates);
  } else if (!first.regressors.empty()) {
    throw Error(ErrorKind::InvalidArgument, "the model has regressors; pass --covariates");
  }
  std::vector<Eigen::Index> pathColumns;
  for (const auto& name : a.timeInState) {
    const auto it = std::find_if(first.regressors.begin(), first.regressors.end(),
                                 [&](const RegressorMeta& m) { return m.name == name; });
    if (it == first.regressors.end()) throw Error(ErrorKind::InvalidArgument, "unknown regressor " + name);
    pathColumns.push_back(it - first.regressors.begin());
  }
  const ItemTransitionModel transitions(models, covariates, pathColumns);
  const auto& space = transitions.space();
  const StateIndex start = a.start.empty() ? first.startStatus : space.index(a.start);

  Projection projection;
  if (a.method == "matrix") {
    Eigen::VectorXd s0 = Eigen::VectorXd::Zero(space.size());
    s0(start) = 1.0;
    projection = project_matrix(transitions, s0, a.horizon);
  } else if (a.method == "simulate") {
    projection = simulate_paths(transitions, start, a.horizon, a.paths, a.seed, a.threads);
  } else if (a.method == "hybrid") {
    projection = project_hybrid(transitions, start, a.horizon, a.paths, a.seed, a.threads);
  } else {
    throw Error(ErrorKind::InvalidArgument, "unknown method '" + a.method + "'");
  }
  write_file(a.outPath, [&](std::ostream& o) { write_projection_csv(o, projection, space); });
  manifest.output("projection", a.outPath);
  manifest["config"] = {{"method", a.method},   {"paths", a.paths}, {"horizon", a.horizon},
                        {"start", space.name(start)}, {"threads", a.threads}};
  manifest["seed"] = a.seed;
  manifest["rows_processed"] = projection.transitionRows;
  manifest["rows_per_path"] = projection.rowsPerPath;
  manifest.write(manifest_path(a.manifest, a.outPath));
  out << "project: " << a.method << ", " << projection.transitionRows << " transition rows\n";
  return kExitOk;
}

struct SynthArgs {
  std::string spec, outData, outSchema, manifest;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  Manifest manifest("synth");
  manifest.input("spec", a.spec);
  json doc;
  try {
    doc = json::parse(read_text(a.spec));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ParseError, std::string("synthetic spec: ") + e.what());
  }
  SyntheticSpec spec;
  try {
    const auto& m = doc.at("model");
    if (m.is_string()) {
      const std::filesystem::path p = std::filesystem::path(a.spec).parent_path() / m.get<std::string>();
      spec.truth = load_model(p);
    } else {
      spec.truth = parse_model(m.dump());
    }
    spec.n = doc.at("n").get<std::int64_t>();
    spec.seed = doc.value("seed", std::uint64_t{1});
    const auto& dists = doc.at("distributions");
    for (const auto& r : spec.truth.regressors) {
      if (!dists.contains(r.name)) throw Error(ErrorKind::InvalidArgument, "no distribution for " + r.name);
      spec.distributions.push_back(parse_distribution(dists.at(r.name)));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ParseError, std::string("synthetic spec: ") + e.what());
  }
  const SyntheticData data = generate_synthetic(spec);
  write_file(a.outData, [&](std::ostream& o) { write_csv(o, data.grid, spec.truth.space); });
  const std::string schemaText = serialize_schema(schema_for(data.grid, spec.truth.space));
  write_file(a.outSchema, [&](std::ostream& o) { o << schemaText; });
  manifest.output("data", a.outData);
  manifest.output("schema", a.outSchema);
  manifest["seed"] = spec.seed;
  manifest["config"] = {{"n", spec.n}};
  manifest["rows_processed"] = spec.n;
  manifest["generator_entropy"] = data.generatorEntropy;
  manifest.write(manifest_path(a.manifest, a.outData));
  out << "synth: " << spec.n << " rows, generator entropy " << format_double(data.generatorEntropy) << '\n';
  return kExitOk;
}

struct ResidualArgs {
  std::string model, data, schema, regressor, outPath, manifest;
  int buckets = 50;
};

int cmd_report_residuals(const ResidualArgs& a, std::ostream& out, std::ostream& err) {
  if (a.buckets < 1) throw Error(ErrorKind::InvalidArgument, "--buckets must be >= 1");
  Manifest manifest("report-residuals");
  manifest.input("model", a.model);
  manifest.input("data", a.data);
  manifest.input("schema", a.schema);
  const ItemModel model = load_model(a.model);
  const auto schema = load_schema(a.schema);
  const ObservationGrid raw = load_csv(a.data, schema);
  check_grid(raw, schema.space);
  if (!(schema.space == model.space)) throw Error(ErrorKind::SchemaMismatch, "model and schema disagree on states");
  const ObservationGrid grid = prepare_grid(raw, model.startStatus);
  const auto column = grid.column(a.regressor);
  if (!column) throw Error(ErrorKind::InvalidArgument, "unknown regressor '" + a.regressor + "'");
  const Eigen::Index n = grid.rows();
  if (n == 0) throw Error(ErrorKind::EmptyGrid, "no rows start in " + model.space.name(model.startStatus));

  const Eigen::VectorXd x = grid.x.col(*column);
  const Eigen::MatrixXd scores = score_matrix(model, grid);
  const Eigen::MatrixXd targets = outcome_targets(model, grid);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index i, Eigen::Index j) { return x(i) < x(j); });

  int buckets = static_cast<int>(std::min<Eigen::Index>(a.buckets, n));
  if (x.minCoeff() == x.maxCoeff()) {
    err << "warning: regressor " << a.regressor << " is constant; using a single bucket\n";
    buckets = 1;
  }
  const auto& outcomes = model.outcomes();
  write_file(a.outPath, [&](std::ostream& o) {
    o << "bucket,lower,upper,count,mean_x,to_state,actual,model,std_error\n";
    for (int b = 0; b < buckets; ++b) {
      const Eigen::Index begin = n * b / buckets;
      const Eigen::Index end = n * (b + 1) / buckets;
      const double count = static_cast<double>(end - begin);
      double sumX = 0.0;
      Eigen::VectorXd actual = Eigen::VectorXd::Zero(model.outcome_count());
      Eigen::VectorXd predicted = Eigen::VectorXd::Zero(model.outcome_count());
      for (Eigen::Index k = begin; k < end; ++k) {
        const auto i = order[static_cast<std::size_t>(k)];
        sumX += x(i);
        actual += targets.row(i).transpose();
        predicted += softmax(scores.row(i).transpose());
      }
      actual /= count;
      predicted /= count;
      const double lower = x(order[static_cast<std::size_t>(begin)]);
      const double upper = x(order[static_cast<std::size_t>(end - 1)]);
      for (std::size_t w = 0; w < outcomes.size(); ++w) {
        const auto wi = static_cast<Eigen::Index>(w);
        const double p = predicted(wi);
        o << b << ',' << format_double(lower) << ',' << format_double(upper) << ',' << (end - begin) << ','
          << format_double(sumX / count) << ',' << model.space.name(outcomes[w]) << ',' << format_double(actual(wi))
          << ',' << format_double(p) << ',' << format_double(std::sqrt(p * (1.0 - p) / count)) << '\n';
      }
    }
  });
  manifest.output("residuals", a.outPath);
  manifest["config"] = {{"regressor", a.regressor}, {"buckets", buckets}};
  manifest["seed"] = nullptr;
  manifest["rows_processed"] = n;
  manifest.write(manifest_path(a.manifest, a.outPath));
  out << "report-residuals: " << buckets << " buckets over " << n << " rows\n";
  return kExitOk;
}

struct ValidateArgs {
  std::string data, schema, model;
};

int cmd_validate(const ValidateArgs& a, std::ostream& out, std::ostream& err) {
  const auto schema = load_schema(a.schema);
  const ObservationGrid grid = load_csv(a.data, schema);
  const auto violations = validate_grid(grid, schema.space);
  for (const auto& v : violations) {
    err << (v.row >= 0 ? "row " + std::to_string(v.row) + ": " : std::string()) << v.message << '\n';
  }
  if (!a.model.empty()) {
    const ItemModel model = load_model(a.model);
    if (!(model.space == schema.space)) {
      err << "model and schema disagree on states\n";
      return kExitInput;
    }
    const auto expanded = prepare_grid(grid, model.startStatus);
    if (expanded.meta != model.regressors) {
      err << "model regressors do not match the data columns\n";
      return kExitInput;
    }
  }
  if (!violations.empty()) return kExitInput;
  out << "valid: " << grid.rows() << " rows\n";
  return kExitOk;
}

}  // namespace

std::map<std::string, std::string> parse_key_values(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineNo = 0;
  const auto strip = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineNo;
    line = strip(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(lineNo, "expected key=value");
    out[strip(line.substr(0, eq))] = strip(line.substr(eq + 1));
  }
  return out;
}

FitConfig apply_config(FitConfig config, const std::map<std::string, std::string>& values) {
  for (const auto& [key, value] : values) {
    if (key == "criterion") config.criterion = parse_criterion(value);
    else if (key == "maxCurves") config.maxCurves = parse_number<int>(key, value);
    else if (key == "comparatorC") config.comparatorC = parse_number<double>(key, value);
    else if (key == "m0") config.m0 = parse_number<std::int64_t>(key, value);
    else if (key == "llCap") config.llCap = parse_number<double>(key, value);
    else if (key == "noiseSd") config.noiseSd = parse_number<double>(key, value);
    else if (key == "annealLoops") config.annealLoops = parse_number<int>(key, value);
    else if (key == "seed") config.seed = parse_number<std::uint64_t>(key, value);
    else if (key == "sigmaStop") config.sigmaStop = parse_bool(key, value);
    else if (key == "adaptive") config.adaptive = parse_bool(key, value);
    else if (key == "paramsPerCurve") config.paramsPerCurve = parse_number<int>(key, value);
    else if (key == "threads") config.threads = parse_number<int>(key, value);
    else throw Error(ErrorKind::InvalidArgument, "unknown config key '" + key + "'");
  }
  return config;
}

std::map<std::string, std::string> config_values(const FitConfig& c) {
  return {{"criterion", std::string(to_string(c.criterion))},
          {"maxCurves", std::to_string(c.maxCurves)},
          {"comparatorC", format_double(c.comparatorC)},
          {"m0", std::to_string(c.m0)},
          {"llCap", format_double(c.llCap)},
          {"noiseSd", format_double(c.noiseSd)},
          {"annealLoops", std::to_string(c.annealLoops)},
          {"seed", std::to_string(c.seed)},
          {"sigmaStop", c.sigmaStop ? "true" : "false"},
          {"adaptive", c.adaptive ? "true" : "false"},
          {"paramsPerCurve", std::to_string(c.paramsPerCurve)},
          {"threads", std::to_string(c.threads)}};
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Fit and project multinomial transition models built from automatically discovered curves."};
  app.name("item");
  app.require_subcommand(1);

  FitArgs fitArgs;
  auto* fitCmd = app.add_subcommand("fit", "Fit a model for one start status");
  fitCmd->add_option("--data", fitArgs.data, "Observation CSV")->required();
  fitCmd->add_option("--schema", fitArgs.schema, "Column schema JSON")->required();
  fitCmd->add_option("--config", fitArgs.config, "key=value config file");
  fitCmd->add_option("--out-model", fitArgs.outModel, "Model file to write")->required();
  fitCmd->add_option("--out-report", fitArgs.outReport, "Fit report CSV to write")->required();
  fitCmd->add_option("--manifest", fitArgs.manifest, "Run manifest (default <out-model>.manifest.json)");
  fitCmd->add_option("--start-status", fitArgs.startStatus, "Start status to fit");
  fitCmd->add_option("--criterion", fitArgs.criterion, "AIC or BIC");
  fitCmd->add_option("--max-curves", fitArgs.maxCurves);
  fitCmd->add_option("--seed", fitArgs.seed);
  fitCmd->add_option("--threads", fitArgs.threads, "Worker cap");
  fitCmd->add_option("--noise-sd", fitArgs.noiseSd);
  fitCmd->add_option("--anneal-loops", fitArgs.annealLoops);
  fitCmd->add_option("--m0", fitArgs.m0);
  fitCmd->add_option("--comparator-c", fitArgs.comparatorC);
  fitCmd->add_option("--ll-cap", fitArgs.llCap);
  fitCmd->add_option("--params-per-curve", fitArgs.paramsPerCurve);
  fitCmd->add_option("--sigma-stop", fitArgs.sigmaStop);
  fitCmd->add_option("--adaptive", fitArgs.adaptive);

  ProjectArgs projectArgs;
  auto* projectCmd = app.add_subcommand("project", "Project state probabilities forward");
  projectCmd->add_option("--model", projectArgs.models, "Model file, one per start status")->required();
  projectCmd->add_option("--covariates", projectArgs.covariates, "Per-step regressor values CSV");
  projectCmd->add_option("--method", projectArgs.method, "matrix, simulate or hybrid")
      ->check(CLI::IsMember({"matrix", "simulate", "hybrid"}));
  projectCmd->add_option("--paths", projectArgs.paths, "Simulated paths");
  projectCmd->add_option("--horizon", projectArgs.horizon, "Steps to project")->check(CLI::NonNegativeNumber);
  projectCmd->add_option("--seed", projectArgs.seed);
  projectCmd->add_option("--start", projectArgs.start, "Initial state (default: first model's start status)");
  projectCmd->add_option("--time-in-state", projectArgs.timeInState, "Regressors computed from the path history");
  projectCmd->add_option("--threads", projectArgs.threads, "Worker cap");
  projectCmd->add_option("--out", projectArgs.outPath, "Projection CSV to write")->required();
  projectCmd->add_option("--manifest", projectArgs.manifest);

  SynthArgs synthArgs;
  auto* synthCmd = app.add_subcommand("synth", "Generate observations from a known model");
  synthCmd->add_option("--spec", synthArgs.spec, "Synthetic spec JSON")->required();
  synthCmd->add_option("--out", synthArgs.outData, "Observation CSV to write")->required();
  synthCmd->add_option("--out-schema", synthArgs.outSchema, "Schema JSON to write")->required();
  synthCmd->add_option("--manifest", synthArgs.manifest);

  ResidualArgs residualArgs;
  auto* residualCmd = app.add_subcommand("report-residuals", "Bucketed actual vs. model transition rates");
  residualCmd->add_option("--model", residualArgs.model)->required();
  residualCmd->add_option("--data", residualArgs.data)->required();
  residualCmd->add_option("--schema", residualArgs.schema)->required();
  residualCmd->add_option("--regressor", residualArgs.regressor)->required();
  residualCmd->add_option("--buckets", residualArgs.buckets, "Equal-count buckets");
  residualCmd->add_option("--out", residualArgs.outPath)->required();
  residualCmd->add_option("--manifest", residualArgs.manifest);

  ValidateArgs validateArgs;
  auto* validateCmd = app.add_subcommand("validate", "Check data (and optionally a model) against a schema");
  validateCmd->add_option("--data", validateArgs.data)->required();
  validateCmd->add_option("--schema", validateArgs.schema)->required();
  validateCmd->add_option("--model", validateArgs.model);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (*fitCmd) return cmd_fit(fitArgs, *fitCmd, out);
    if (*projectCmd) return cmd_project(projectArgs, out);
    if (*synthCmd) return cmd_synth(synthArgs, out);
    if (*residualCmd) return cmd_report_residuals(residualArgs, out, err);
    if (*validateCmd) return cmd_validate(validateArgs, out, err);
  } catch (const Error& e) {
    err << "error [" << to_string(e.kind()) << "]: " << e.what() << '\n';
    return e.kind() == ErrorKind::NonFiniteObjective ? kExitNumerical : kExitInput;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumerical;
  }
  return kExitInput;
}

}  // namespace item
