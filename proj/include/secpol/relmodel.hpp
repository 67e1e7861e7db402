#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "secpol/value.hpp"

namespace secpol {

struct AttributeDef {
  std::string name;
  DataType dtype = DataType::Integer;

  friend bool operator==(const AttributeDef&, const AttributeDef&) = default;
};

struct ForeignKey {
  std::vector<std::string> columns;
  std::string ref_table;
  std::vector<std::string> ref_columns;

  friend bool operator==(const ForeignKey&, const ForeignKey&) = default;
};

struct RelationDef {
  std::string name;
  std::vector<AttributeDef> attributes;
  std::vector<std::string> primary_key;
  std::vector<ForeignKey> foreign_keys;

  std::optional<std::size_t> index_of(std::string_view attribute) const;
  const AttributeDef* find(std::string_view attribute) const;
  std::vector<std::size_t> key_indexes() const;
  bool is_key_attribute(std::string_view attribute) const;

  friend bool operator==(const RelationDef&, const RelationDef&) = default;
};

/// Relations in declaration order; lookups by name.
class Schema {
 public:
  Schema() = default;
  /// Validates every invariant (unique names, PK/FK resolution).
  explicit Schema(std::vector<RelationDef> relations);

  const std::vector<RelationDef>& relations() const { return relations_; }
  const RelationDef* find(std::string_view name) const;
  const RelationDef& at(std::string_view name) const;
  bool contains(std::string_view name) const { return find(name) != nullptr; }
  std::size_t size() const { return relations_.size(); }

  friend bool operator==(const Schema& a, const Schema& b) { return a.relations_ == b.relations_; }

 private:
  std::vector<RelationDef> relations_;
};

/// Parses the JSON schema document.
Schema load_schema(std::string_view document);
Schema load_schema_file(const std::string& path);
/// Canonical JSON rendering; load_schema(print_schema(s)) == s.
std::string print_schema(const Schema& schema);

using Tuple = std::vector<Value>;

struct RelationInstance {
  std::string relation;
  std::vector<Tuple> rows;
};

class DatabaseInstance {
 public:
  explicit DatabaseInstance(const Schema& schema) : schema_(&schema) {}

  const Schema& schema() const { return *schema_; }
  /// Validates arity, dtype conformance and PK uniqueness; replaces any
  /// existing instance for the relation.
  void put(RelationInstance instance);
  /// Empty instance when the relation has no rows loaded.
  const RelationInstance& get(std::string_view relation) const;
  const std::map<std::string, RelationInstance, std::less<>>& relations() const { return tables_; }

  /// Re-runs the load-time checks over every relation.
  void validate() const;

 private:
  const Schema* schema_;
  std::map<std::string, RelationInstance, std::less<>> tables_;
};

void validate_instance(const RelationDef& def, const RelationInstance& instance);

/// Loads comma-separated documents (header row required) keyed by relation.
DatabaseInstance load_instance(const Schema& schema,
                               const std::map<std::string, std::string>& tables);
/// Loads `<dir>/<relation>.csv` for every schema relation with a file present.
DatabaseInstance load_instance_dir(const Schema& schema, const std::string& dir);
std::string render_instance_csv(const RelationDef& def, const RelationInstance& instance);

struct EvalContext {
  std::string current_user;
  std::map<std::string, Value, std::less<>> session_params;
};

}  // namespace secpol
