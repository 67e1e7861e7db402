#include "secpol/relmodel.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "secpol/csv.hpp"
#include "secpol/error.hpp"

namespace secpol {

using nlohmann::json;

std::optional<std::size_t> RelationDef::index_of(std::string_view attribute) const {
  for (std::size_t i = 0; i < attributes.size(); ++i)
    if (attributes[i].name == attribute) return i;
  return std::nullopt;
}

const AttributeDef* RelationDef::find(std::string_view attribute) const {
  auto i = index_of(attribute);
  return i ? &attributes[*i] : nullptr;
}

std::vector<std::size_t> RelationDef::key_indexes() const {
  std::vector<std::size_t> out;
  for (const auto& k : primary_key) out.push_back(*index_of(k));
  return out;
}

bool RelationDef::is_key_attribute(std::string_view attribute) const {
  for (const auto& k : primary_key)
    if (k == attribute) return true;
  return false;
}

Schema::Schema(std::vector<RelationDef> relations) : relations_(std::move(relations)) {
  std::set<std::string, std::less<>> names;
  for (const auto& r : relations_) {
    if (!names.insert(r.name).second) throw DuplicateRelation("duplicate relation '" + r.name + "'");
    std::set<std::string, std::less<>> attrs;
    for (const auto& a : r.attributes)
      if (!attrs.insert(a.name).second)
        throw InvalidSchema("duplicate attribute '" + a.name + "' in relation '" + r.name + "'");
    if (r.primary_key.empty()) throw InvalidSchema("relation '" + r.name + "' has no primary key");
    for (const auto& k : r.primary_key)
      if (!attrs.count(k))
        throw InvalidSchema("primary key attribute '" + k + "' missing from '" + r.name + "'");
  }
  for (const auto& r : relations_) {
    for (const auto& fk : r.foreign_keys) {
      const RelationDef* target = find(fk.ref_table);
      if (!target)
        throw DanglingForeignKey("foreign key of '" + r.name + "' targets unknown relation '" +
                                 fk.ref_table + "'");
      if (fk.columns.size() != fk.ref_columns.size() || fk.columns.empty())
        throw InvalidSchema("foreign key of '" + r.name + "' has mismatched column lists");
      for (const auto& c : fk.columns)
        if (!r.find(c))
          throw InvalidSchema("foreign key column '" + c + "' missing from '" + r.name + "'");
      for (const auto& c : fk.ref_columns)
        if (!target->find(c))
          throw DanglingForeignKey("foreign key of '" + r.name + "' targets unknown attribute '" +
                                   fk.ref_table + "." + c + "'");
    }
  }
}

const RelationDef* Schema::find(std::string_view name) const {
  for (const auto& r : relations_)
    if (r.name == name) return &r;
  return nullptr;
}

const RelationDef& Schema::at(std::string_view name) const {
  if (const auto* r = find(name)) return *r;
  throw UnknownRelation("unknown relation '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// Schema documents

namespace {

std::pair<std::size_t, std::size_t> line_col(std::string_view doc, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < doc.size(); ++i) {
    if (doc[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

[[noreturn]] void shape_error(const std::string& what) { throw ParseError(0, 0, what); }

const json& member(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key)) shape_error(where + ": missing '" + key + "'");
  return obj.at(key);
}

std::string str(const json& v, const std::string& where) {
  if (!v.is_string()) shape_error(where + ": expected a string");
  return v.get<std::string>();
}

std::vector<std::string> str_list(const json& v, const std::string& where) {
  if (!v.is_array()) shape_error(where + ": expected an array");
  std::vector<std::string> out;
  for (const auto& e : v) out.push_back(str(e, where));
  return out;
}

}  // namespace

Schema load_schema(std::string_view document) {
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::parse_error& e) {
    auto [line, col] = line_col(document, e.byte == 0 ? 0 : e.byte - 1);
    throw ParseError(line, col, e.what());
  }
  if (!doc.is_object()) shape_error("schema document must be an object");
  std::vector<RelationDef> relations;
  if (doc.contains("relations")) {
    const json& rels = doc.at("relations");
    if (!rels.is_array()) shape_error("'relations' must be an array");
    for (const auto& r : rels) {
      RelationDef def;
      def.name = str(member(r, "name", "relation"), "relation name");
      std::string where = "relation '" + def.name + "'";
      for (const auto& a : member(r, "attributes", where)) {
        AttributeDef attr;
        attr.name = str(member(a, "name", where), where);
        std::string dt = str(member(a, "dtype", where), where);
        auto parsed = parse_data_type(dt);
        if (!parsed) shape_error(where + ": unknown dtype '" + dt + "'");
        attr.dtype = *parsed;
        def.attributes.push_back(std::move(attr));
      }
      def.primary_key = str_list(member(r, "primary_key", where), where);
      if (r.contains("foreign_keys")) {
        for (const auto& f : r.at("foreign_keys")) {
          ForeignKey fk;
          fk.columns = str_list(member(f, "columns", where), where);
          fk.ref_table = str(member(f, "ref_table", where), where);
          fk.ref_columns = str_list(member(f, "ref_columns", where), where);
          def.foreign_keys.push_back(std::move(fk));
        }
      }
      relations.push_back(std::move(def));
    }
  }
  return Schema(std::move(relations));
}

Schema load_schema_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open schema file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return load_schema(ss.str());
}

std::string print_schema(const Schema& schema) {
  json rels = json::array();
  for (const auto& r : schema.relations()) {
    json attrs = json::array();
    for (const auto& a : r.attributes)
      attrs.push_back(json{{"name", a.name}, {"dtype", std::string(to_string(a.dtype))}});
    json fks = json::array();
    for (const auto& f : r.foreign_keys)
      fks.push_back(json{{"columns", f.columns}, {"ref_table", f.ref_table}, {"ref_columns", f.ref_columns}});
    json jr = json::object();
    jr["name"] = r.name;
    jr["attributes"] = attrs;
    jr["primary_key"] = r.primary_key;
    jr["foreign_keys"] = fks;
    rels.push_back(std::move(jr));
  }
  json doc = json::object();
  doc["relations"] = rels;
  return doc.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Instances

void validate_instance(const RelationDef& def, const RelationInstance& instance) {
  std::set<Tuple> keys;
  auto key_idx = def.key_indexes();
  for (std::size_t row = 0; row < instance.rows.size(); ++row) {
    const Tuple& t = instance.rows[row];
    if (t.size() != def.attributes.size())
      throw TypeMismatch(def.name + " row " + std::to_string(row + 1) + ": expected " +
                         std::to_string(def.attributes.size()) + " values, got " +
                         std::to_string(t.size()));
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (t[i].is_suppressed() || !conforms(t[i], def.attributes[i].dtype))
        throw TypeMismatch(def.name + " row " + std::to_string(row + 1) + ": attribute '" +
                           def.attributes[i].name + "' is not a valid " +
                           std::string(to_string(def.attributes[i].dtype)));
    }
    Tuple key;
    for (auto k : key_idx) key.push_back(t[k]);
    if (!keys.insert(std::move(key)).second)
      throw DuplicatePrimaryKey(def.name + " row " + std::to_string(row + 1) +
                                ": duplicate primary key");
  }
}

void DatabaseInstance::put(RelationInstance instance) {
  const RelationDef& def = schema_->at(instance.relation);
  validate_instance(def, instance);
  std::string name = instance.relation;
  tables_.insert_or_assign(std::move(name), std::move(instance));
}

const RelationInstance& DatabaseInstance::get(std::string_view relation) const {
  static const RelationInstance empty;
  auto it = tables_.find(relation);
  return it == tables_.end() ? empty : it->second;
}

void DatabaseInstance::validate() const {
  for (const auto& [name, inst] : tables_) validate_instance(schema_->at(name), inst);
}

namespace {

RelationInstance parse_relation_csv(const RelationDef& def, std::string_view doc) {
  auto rows = csv::parse(doc);
  RelationInstance inst;
  inst.relation = def.name;
  if (rows.empty()) return inst;
  const auto& header = rows.front();
  std::vector<std::size_t> positions;  // header column -> attribute index
  std::set<std::size_t> seen;
  for (const auto& h : header) {
    auto idx = def.index_of(h);
    if (!idx) throw TypeMismatch(def.name + ": unknown column '" + h + "' in header");
    if (!seen.insert(*idx).second) throw TypeMismatch(def.name + ": duplicate column '" + h + "'");
    positions.push_back(*idx);
  }
  if (positions.size() != def.attributes.size())
    throw TypeMismatch(def.name + ": header does not list every attribute");
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& cells = rows[r];
    if (cells.size() != positions.size())
      throw TypeMismatch(def.name + " row " + std::to_string(r) + ": expected " +
                         std::to_string(positions.size()) + " fields, got " +
                         std::to_string(cells.size()));
    Tuple t(def.attributes.size());
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const AttributeDef& attr = def.attributes[positions[c]];
      auto v = parse_value(attr.dtype, cells[c]);
      if (!v)
        throw TypeMismatch(def.name + " row " + std::to_string(r) + ": attribute '" + attr.name +
                           "' expects " + std::string(to_string(attr.dtype)) + ", got '" +
                           cells[c] + "'");
      t[positions[c]] = std::move(*v);
    }
    inst.rows.push_back(std::move(t));
  }
  return inst;
}

}  // namespace

DatabaseInstance load_instance(const Schema& schema,
                               const std::map<std::string, std::string>& tables) {
  DatabaseInstance db(schema);
  for (const auto& [name, doc] : tables) {
    const RelationDef* def = schema.find(name);
    if (!def) throw UnknownRelation("unknown relation '" + name + "'");
    db.put(parse_relation_csv(*def, doc));
  }
  return db;
}

DatabaseInstance load_instance_dir(const Schema& schema, const std::string& dir) {
  std::map<std::string, std::string> docs;
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError("instance directory '" + dir + "' not found");
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() != ".csv") continue;
    std::ifstream in(entry.path());
    std::stringstream ss;
    ss << in.rdbuf();
    docs[entry.path().stem().string()] = ss.str();
  }
  return load_instance(schema, docs);
}

std::string render_instance_csv(const RelationDef& def, const RelationInstance& instance) {
  std::string out;
  csv::Row header;
  for (const auto& a : def.attributes) header.push_back(a.name);
  out += csv::format_row(header) + "\n";
  for (const auto& t : instance.rows) {
    csv::Row row;
    for (const auto& v : t) row.push_back(v.to_string());
    out += csv::format_row(row) + "\n";
  }
  return out;
}

}  // namespace secpol
