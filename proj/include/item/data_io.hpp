#pragma once

// Observation CSV ingestion and output, id-hash sampling, shuffling and the
// synthetic data generator.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "item/model.hpp"
#include "item/projection.hpp"

namespace item {

enum class ColumnRole { LoanId, Month, Regressor, StartStatus, EndStatus };

std::string_view to_string(ColumnRole role);
ColumnRole parse_column_role(std::string_view text);

struct ColumnSpec {
  std::string name;
  ColumnRole role = ColumnRole::Regressor;
  RegressorKind kind = RegressorKind::Real;
  bool curveEligible = true;
  /// Categorical only. Empty means "sorted distinct values seen at load".
  std::vector<std::string> levels;
};

/// Column layout plus the status space the status columns refer to.
/// Exactly one start_status and one end_status column.
struct ColumnSchema {
  std::vector<ColumnSpec> columns;
  StatusSpace space;
};

/// JSON document:
///   {"columns": [{"name", "role", "kind", "curve_eligible", "levels"}],
///    "states": [...], "reachable": {"C": [...]}, "absorbing": [...]}
ColumnSchema parse_schema(const std::string& text);
ColumnSchema load_schema(const std::filesystem::path& path);
std::string serialize_schema(const ColumnSchema& schema);

/// Schema describing `grid` as written by write_csv.
ColumnSchema schema_for(const ObservationGrid& grid, const StatusSpace& space);

/// Throws SchemaMismatch when the header does not match the schema,
/// ParseError with the 1-based line for malformed rows and EmptyGrid when
/// there are no data rows.
ObservationGrid read_csv(std::istream& in, const ColumnSchema& schema);
ObservationGrid load_csv(const std::filesystem::path& path, const ColumnSchema& schema);

/// Writes the columns of schema_for(grid, space). Status columns come from
/// startStatus / endStatus; y is not written.
void write_csv(std::ostream& out, const ObservationGrid& grid, const StatusSpace& space);

/// SHA-256 of the id's bytes as a big-endian integer, reduced mod `modulus`.
std::uint64_t id_hash_residue(std::string_view loanId, std::uint64_t modulus);

/// Rows whose id hash residue equals `residue`, in their original order.
ObservationGrid sample_by_id_hash(const ObservationGrid& grid, std::uint64_t modulus, std::uint64_t residue);

/// Uniform row permutation, fixed by `seed`.
ObservationGrid shuffle(const ObservationGrid& grid, std::uint64_t seed);

struct RegressorDistribution {
  enum class Kind { Uniform, Normal, Bernoulli };
  Kind kind = Kind::Uniform;
  /// Uniform: [p1, p2). Normal: mean p1, sd p2. Bernoulli: P(1) = p1.
  double p1 = 0.0;
  double p2 = 1.0;
};

struct SyntheticSpec {
  ItemModel truth;
  std::vector<RegressorDistribution> distributions;  // one per regressor
  std::int64_t n = 0;
  std::uint64_t seed = 1;
};

struct SyntheticData {
  ObservationGrid grid;
  /// Mean -ln p(end status) under the generating model on this sample.
  double generatorEntropy = 0.0;
};

SyntheticData generate_synthetic(const SyntheticSpec& spec);

/// Header: time,state,probability,std_error
void write_projection_csv(std::ostream& out, const Projection& projection, const StatusSpace& space);

/// Printf-style %.17g, the format every numeric CSV field uses.
std::string format_double(double value);

}  // namespace item
