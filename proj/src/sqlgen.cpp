#include "secpol/sqlgen.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <memory>
#include <nlohmann/json.hpp>

#include "secpol/depgraph.hpp"
#include "secpol/error.hpp"
#include "sql_render.hpp"

namespace secpol {

namespace fs = std::filesystem;
using sqlr::Nesting;
using sqlr::RenderCtx;

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::PureRLS: return "pure-rls";
    case Strategy::IndexedRLS: return "indexed-rls";
    case Strategy::SecureView: return "secure-view";
    case Strategy::InlineRewrite: return "inline-rewrite";
    case Strategy::BlackBoxUDF: return "udf";
  }
  return "pure-rls";
}

std::optional<Strategy> parse_strategy(std::string_view name) {
  for (Strategy s : all_strategies())
    if (to_string(s) == name) return s;
  return std::nullopt;
}

const std::vector<Strategy>& all_strategies() {
  static const std::vector<Strategy> all{Strategy::PureRLS, Strategy::IndexedRLS, Strategy::SecureView,
                                         Strategy::InlineRewrite, Strategy::BlackBoxUDF};
  return all;
}

std::string EnforcementArtifact::rewrite(const std::string& query) const {
  return per_query_rewrite ? per_query_rewrite(query) : query;
}

namespace {

bool is_cyclic(const PolicySet& set, const Schema& schema, std::string* witness = nullptr) {
  CycleReport r = check_acyclicity(set, schema_dag(schema));
  if (witness) *witness = format_cycle(r);
  return r.cyclic;
}

void require_acyclic(const PolicySet& set, const Schema& schema, std::string_view strategy) {
  std::string witness;
  if (is_cyclic(set, schema, &witness))
    throw CyclicPolicySet(std::string(strategy) + " needs an acyclic policy set; " + witness);
}

void require_filters(const PolicySet& set, const Schema& schema, std::string_view strategy) {
  for (const auto& t : set.tables()) {
    const PolicyExpr& p = *set.for_table(t);
    const RelationDef& rel = schema.at(t);
    for (const AtomicPolicy* a : leaves(p)) {
      if (a->mask.is_filter()) continue;
      // Keys are never masked, so name the first non-key attribute that survives.
      const AttributeDef* shown = nullptr;
      for (const auto& attr : rel.attributes)
        if (a->mask.action_for(rel, attr.name).kind != MaskKind::Suppress &&
            (!shown || (rel.is_key_attribute(shown->name) && !rel.is_key_attribute(attr.name))))
          shown = &attr;
      if (shown)
        throw RLSUnsupportedMasking(std::string(strategy) + " cannot enforce masking: table " + t +
                                    ", attribute " + shown->name + " (policy " + a->name + ")");
    }
  }
}

/// Tables in an order where every policy only reads tables created before it.
std::vector<std::string> creation_order(const PolicySet& set, const Schema& schema) {
  std::vector<std::string> tables = set.tables();
  if (is_cyclic(set, schema)) return tables;
  TierAssignment tiers = assign_tiers(set, schema_dag(schema));
  std::stable_sort(tables.begin(), tables.end(),
                   [&](const std::string& a, const std::string& b) { return tiers[a] < tiers[b]; });
  return tables;
}

RenderCtx base_ctx(const PolicySet& set, const Schema& schema, Nesting nesting, const std::string& qualifier) {
  RenderCtx ctx;
  ctx.schema = &schema;
  ctx.set = &set;
  ctx.nesting = nesting;
  ctx.qualifier = qualifier;
  return ctx;
}

std::vector<std::string> rls_enable(const std::string& t) {
  return {"ALTER TABLE " + t + " ENABLE ROW LEVEL SECURITY", "ALTER TABLE " + t + " FORCE ROW LEVEL SECURITY"};
}

std::vector<std::string> rls_disable(const std::string& t) {
  return {"DROP POLICY IF EXISTS secpol_" + t + " ON " + t, "ALTER TABLE " + t + " NO FORCE ROW LEVEL SECURITY",
          "ALTER TABLE " + t + " DISABLE ROW LEVEL SECURITY"};
}

std::string drop_index(const std::string& create) {
  constexpr std::string_view prefix = "CREATE INDEX IF NOT EXISTS ";
  std::string name = create.substr(prefix.size(), create.find(' ', prefix.size()) - prefix.size());
  return "DROP INDEX IF EXISTS " + name;
}

void append(std::vector<std::string>& to, const std::vector<std::string>& from) {
  to.insert(to.end(), from.begin(), from.end());
}

std::string class_note(const PolicySet& set, const std::string& t) {
  std::string out = t + ":";
  for (const AtomicPolicy* a : leaves(*set.for_table(t)))
    out += " " + a->name + "=" + std::string(to_string(classify(*a)));
  return out;
}

struct UdfSignature {
  std::string name;
  std::vector<std::string> decl;   // "arg_x bigint"
  std::vector<std::string> types;  // for DROP FUNCTION
  std::vector<std::string> call;   // call-site arguments
  std::map<std::string, std::string> params;
};

UdfSignature udf_signature(const std::string& name, const PolicyExpr& p, const RelationDef& rel) {
  UdfSignature sig;
  sig.name = name;
  std::set<std::string> used = sqlr::base_attributes(p);
  for (const auto& a : rel.attributes) {
    if (!used.count(a.name) && !rel.is_key_attribute(a.name)) continue;
    std::string arg = "arg_" + a.name;
    std::string type = sqlr::sql_type(a.dtype);
    sig.decl.push_back(arg + " " + type);
    sig.types.push_back(type);
    sig.call.push_back(a.name);
    sig.params[a.name] = arg;
  }
  for (const auto& param : sqlr::context_params(p)) {
    std::string arg = "p_" + param;
    sig.decl.push_back(arg + " text");
    sig.types.push_back("text");
    sig.call.push_back(param == "current_user" ? "current_user" : "current_setting('secpol." + param + "')");
    sig.params[":" + param] = arg;
  }
  return sig;
}

std::string join_list(const std::vector<std::string>& xs, const char* sep = ", ") {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? sep : "") + xs[i];
  return out;
}

std::string udf_create(const UdfSignature& sig, const std::string& body) {
  return "CREATE FUNCTION " + sig.name + "(" + join_list(sig.decl) +
         ") RETURNS boolean LANGUAGE sql STABLE SECURITY DEFINER SET search_path = public AS $$ SELECT " + body +
         " $$";
}

std::string udf_drop(const UdfSignature& sig) {
  return "DROP FUNCTION IF EXISTS " + sig.name + "(" + join_list(sig.types) + ")";
}

std::string udf_call(const UdfSignature& sig) { return sig.name + "(" + join_list(sig.call) + ")"; }

UdfSignature udf_for(const PolicyExpr& p, const RelationDef& rel, const std::string& name, const PolicySet& set,
                     const Schema& schema, bool nested, std::string* body) {
  UdfSignature sig = udf_signature(name, p, rel);
  RenderCtx ctx = base_ctx(set, schema, nested ? Nesting::Inline : Nesting::None, "");
  ctx.params = sig.params;
  *body = sqlr::condition(p, ctx);
  return sig;
}

}  // namespace

std::string policy_condition_sql(const PolicyExpr& p, const Schema& schema, const std::string& qualifier) {
  RenderCtx ctx;
  ctx.schema = &schema;
  ctx.qualifier = qualifier;
  return sqlr::condition(p, ctx);
}

EnforcementArtifact emit_rls(const PolicySet& set, const Schema& schema) {
  require_filters(set, schema, "row level security");
  require_acyclic(set, schema, "row level security");
  EnforcementArtifact art;
  art.strategy = Strategy::PureRLS;
  art.requires_acyclic = true;
  for (const auto& t : creation_order(set, schema)) {
    RenderCtx ctx = base_ctx(set, schema, Nesting::None, t);
    append(art.setup_sql, rls_enable(t));
    art.setup_sql.push_back("CREATE POLICY secpol_" + t + " ON " + t + " FOR SELECT USING (" +
                            sqlr::condition(*set.for_table(t), ctx) + ")");
    art.policed_tables.push_back(t);
    art.notes.push_back(class_note(set, t));
  }
  for (auto it = art.policed_tables.rbegin(); it != art.policed_tables.rend(); ++it)
    append(art.teardown_sql, rls_disable(*it));
  return art;
}

std::vector<std::string> advise_indexes(const PolicySet& set, const Schema& schema) {
  std::set<std::pair<std::string, std::string>> cols;
  for (const auto& t : set.tables()) sqlr::collect_columns(*set.for_table(t), cols);
  std::vector<std::string> out;
  for (const auto& [rel, col] : cols) {
    const RelationDef* def = schema.find(rel);
    if (!def || !def->find(col)) continue;
    out.push_back("CREATE INDEX IF NOT EXISTS pcov_" + rel + "_" + col + " ON " + rel + " (" + col + ")");
  }
  return out;
}

EnforcementArtifact emit_indexed_rls(const PolicySet& set, const Schema& schema) {
  EnforcementArtifact art = emit_rls(set, schema);
  art.strategy = Strategy::IndexedRLS;
  std::vector<std::string> idx = advise_indexes(set, schema);
  std::vector<std::string> drops;
  for (const auto& stmt : idx) drops.push_back(drop_index(stmt));
  append(art.setup_sql, idx);
  drops.insert(drops.end(), art.teardown_sql.begin(), art.teardown_sql.end());
  art.teardown_sql = std::move(drops);
  return art;
}

EnforcementArtifact emit_views(const PolicySet& set, const Schema& schema, bool barrier) {
  bool cyclic = is_cyclic(set, schema);
  if (!barrier && cyclic) require_acyclic(set, schema, "white-box views");
  EnforcementArtifact art;
  art.strategy = Strategy::SecureView;
  art.requires_acyclic = !barrier;
  // Acyclic sets nest: a view reads other policed tables through their views.
  // Cyclic sets read raw tables behind the barrier.
  Nesting nesting = cyclic ? Nesting::None : Nesting::Views;
  for (const auto& t : creation_order(set, schema)) {
    const PolicyExpr& p = *set.for_table(t);
    RenderCtx ctx = base_ctx(set, schema, nesting, t);
    std::string body = is_filter_only(p) ? "SELECT * FROM " + t + " WHERE " + sqlr::condition(p, ctx)
                                         : sqlr::masking_body(p, schema.at(t), ctx);
    art.setup_sql.push_back("CREATE VIEW v_" + t + (barrier ? " WITH (security_barrier)" : "") + " AS " + body);
    art.policed_tables.push_back(t);
    art.notes.push_back(class_note(set, t));
  }
  for (auto it = art.policed_tables.rbegin(); it != art.policed_tables.rend(); ++it)
    art.teardown_sql.push_back("DROP VIEW IF EXISTS v_" + *it);
  std::set<std::string> policed(art.policed_tables.begin(), art.policed_tables.end());
  art.per_query_rewrite = [policed](const std::string& q) {
    struct Edit {
      std::size_t begin, end;
      std::string text;
    };
    std::vector<Edit> edits;
    for (const auto& block : scan_query(q))
      for (const auto& t : block.tables)
        if (policed.count(t.relation))
          edits.push_back({t.name_begin, t.name_end, "v_" + t.relation + (t.alias.empty() ? " " + t.relation : "")});
    std::sort(edits.begin(), edits.end(), [](const Edit& a, const Edit& b) { return a.begin > b.begin; });
    std::string out = q;
    for (const auto& e : edits) out.replace(e.begin, e.end - e.begin, e.text);
    return out;
  };
  return art;
}

std::string rewrite_query_inline(const std::string& query, const PolicySet& set, const Schema& schema) {
  if (query.find(kInlineMarker) != std::string::npos) return query;
  require_acyclic(set, schema, "inline rewriting");

  struct Edit {
    std::size_t begin, end;
    std::string text;
    int order;  // tie-break for insertions at the same offset
  };
  std::vector<Edit> edits;
  int seq = 0;
  for (const auto& block : scan_query(query)) {
    std::vector<std::string> conjuncts;
    for (const auto& t : block.tables) {
      const PolicyExpr* p = set.for_table(t.relation);
      if (!p) continue;
      if (t.in_join || !is_filter_only(*p)) {
        RenderCtx ctx = base_ctx(set, schema, Nesting::Inline, t.relation);
        edits.push_back({t.name_begin, t.end, "(" + sqlr::relation_source(t.relation, ctx) + ") " + t.qualifier(),
                         seq++});
        continue;
      }
      RenderCtx ctx = base_ctx(set, schema, Nesting::Inline, t.qualifier());
      ctx.always_qualify = true;
      conjuncts.push_back("(" + sqlr::condition(*p, ctx) + ")");
    }
    if (conjuncts.empty()) continue;
    std::string all = join_list(conjuncts, " AND ");
    if (block.has_where) {
      edits.push_back({block.where_begin, block.where_begin, all + " AND (", seq++});
      edits.push_back({block.where_end, block.where_end, ")", seq++});
    } else {
      edits.push_back({block.from_end, block.from_end, " WHERE " + all, seq++});
    }
  }
  // Apply back to front; at equal offsets later edits go first so that text
  // from earlier edits ends up in front.
  std::sort(edits.begin(), edits.end(), [](const Edit& a, const Edit& b) {
    return a.begin != b.begin ? a.begin > b.begin : a.order > b.order;
  });
  std::string out = query;
  for (const auto& e : edits) out.replace(e.begin, e.end - e.begin, e.text);
  return std::string(kInlineMarker) + " " + out;
}

EnforcementArtifact emit_inline(const PolicySet& set, const Schema& schema) {
  require_acyclic(set, schema, "inline rewriting");
  EnforcementArtifact art;
  art.strategy = Strategy::InlineRewrite;
  art.requires_acyclic = true;
  art.policed_tables = set.tables();
  for (const auto& t : art.policed_tables) art.notes.push_back(class_note(set, t));
  auto owned = std::make_shared<PolicySet>(set);
  auto schema_copy = std::make_shared<Schema>(schema);
  art.per_query_rewrite = [owned, schema_copy](const std::string& q) {
    return rewrite_query_inline(q, *owned, *schema_copy);
  };
  return art;
}

EnforcementArtifact emit_udf(const PolicySet& set, const Schema& schema) {
  require_filters(set, schema, "security definer functions");
  EnforcementArtifact art;
  art.strategy = Strategy::BlackBoxUDF;
  art.requires_acyclic = false;
  bool nested = !is_cyclic(set, schema);
  std::vector<UdfSignature> sigs;
  for (const auto& t : creation_order(set, schema)) {
    const PolicyExpr& p = *set.for_table(t);
    std::string body;
    UdfSignature sig = udf_for(p, schema.at(t), "pol_" + t, set, schema, nested, &body);
    art.setup_sql.push_back(udf_create(sig, body));
    append(art.setup_sql, rls_enable(t));
    art.setup_sql.push_back("CREATE POLICY secpol_" + t + " ON " + t + " FOR SELECT USING (" + udf_call(sig) + ")");
    art.policed_tables.push_back(t);
    art.notes.push_back(class_note(set, t));
    sigs.push_back(std::move(sig));
  }
  for (std::size_t i = sigs.size(); i-- > 0;) {
    append(art.teardown_sql, rls_disable(art.policed_tables[i]));
    art.teardown_sql.push_back(udf_drop(sigs[i]));
  }
  return art;
}

EnforcementArtifact compile(Strategy s, const PolicySet& set, const Schema& schema) {
  switch (s) {
    case Strategy::PureRLS: return emit_rls(set, schema);
    case Strategy::IndexedRLS: return emit_indexed_rls(set, schema);
    case Strategy::SecureView: return emit_views(set, schema, true);
    case Strategy::InlineRewrite: return emit_inline(set, schema);
    case Strategy::BlackBoxUDF: return emit_udf(set, schema);
  }
  return emit_rls(set, schema);
}

std::vector<std::string> schema_ddl(const Schema& schema) {
  std::vector<std::string> out;
  for (const auto& rel : schema.relations()) {
    std::string stmt = "CREATE TABLE " + rel.name + " (";
    for (const auto& a : rel.attributes) stmt += a.name + " " + sqlr::sql_type(a.dtype) + " NOT NULL, ";
    stmt += "PRIMARY KEY (" + join_list(rel.primary_key) + "))";
    out.push_back(std::move(stmt));
  }
  return out;
}

std::vector<std::string> schema_drop_ddl(const Schema& schema) {
  std::vector<std::string> out;
  for (auto it = schema.relations().rbegin(); it != schema.relations().rend(); ++it)
    out.push_back("DROP TABLE IF EXISTS " + it->name + " CASCADE");
  return out;
}

// ---------------------------------------------------------------------------
// Stress compositions

namespace {

constexpr std::string_view kStressPolicies = R"(
policy contradiction_p on orders o
  using (o.o_orderstatus = 'F' AND o.o_totalprice > 100000 AND o.o_orderdate >= DATE '1995-01-01')
  suppress-otherwise;
policy p on orders o
  using (o.o_totalprice > 150000
         AND o.o_orderstatus = 'F'
         AND o.o_orderdate > DATE '1994-12-31'
         AND EXISTS (SELECT 1 FROM orders o2 WHERE o2.o_custkey = o.o_custkey AND o2.o_orderstatus = 'F'))
  suppress-otherwise;
policy q on orders o
  using (o.o_totalprice > 50000
         AND o.o_orderdate > DATE '1993-12-31'
         AND EXISTS (SELECT 1 FROM orders o2 WHERE o2.o_custkey = o.o_custkey AND o2.o_orderstatus = 'F'))
  suppress-otherwise;
policy stress on orders = ((p and q) and contradiction_p);
)";

struct Operand {
  const AtomicPolicy* atom;
  bool negated;
};

StressCase make_case(const std::string& name, const std::vector<Operand>& ops, bool indexed, const Schema& schema) {
  const RelationDef& orders = schema.at("orders");
  StressCase c;
  c.name = name;
  c.indexed = indexed;

  PolicySet empty;
  std::vector<std::string> conds, calls, creates, drops;
  std::set<std::string> made;
  std::optional<PolicyExpr> composed;
  for (const auto& op : ops) {
    PolicyExpr leaf = atomic(*op.atom);
    PolicyExpr term = op.negated ? p_not(leaf) : leaf;
    composed = composed ? p_and(*composed, term) : term;

    std::string label = op.atom->name == "contradiction_p" ? "p" : op.atom->name;
    c.composition += std::string(c.composition.empty() ? "" : " AND ") + (op.negated ? "NOT " : "") + label;

    RenderCtx ctx;
    ctx.schema = &schema;
    ctx.qualifier = "orders";
    std::string cond = sqlr::condition(leaf, ctx);
    conds.push_back(std::string(op.negated ? "NOT " : "") + "(" + cond + ")");

    std::string body;
    UdfSignature sig = udf_for(leaf, orders, "pol_orders_" + label, empty, schema, false, &body);
    calls.push_back(std::string(op.negated ? "NOT " : "") + udf_call(sig));
    if (made.insert(sig.name).second) {
      creates.push_back(udf_create(sig, body));
      drops.push_back(udf_drop(sig));
    }
  }
  c.policy = *composed;

  std::vector<std::string> idx, idx_drop;
  if (indexed) {
    PolicySet ps = PolicySet::of({c.policy});
    idx = advise_indexes(ps, schema);
    for (const auto& stmt : idx) idx_drop.push_back(drop_index(stmt));
  }

  StressRun inline_run;
  inline_run.mechanism = Strategy::InlineRewrite;
  inline_run.setup_sql = idx;
  inline_run.teardown_sql = idx_drop;
  inline_run.query = "SELECT count(*) FROM orders WHERE " + join_list(conds, " AND ");

  StressRun udf_run;
  udf_run.mechanism = Strategy::BlackBoxUDF;
  udf_run.setup_sql = creates;
  append(udf_run.setup_sql, rls_enable("orders"));
  udf_run.setup_sql.push_back("CREATE POLICY secpol_orders ON orders FOR SELECT USING (" +
                              join_list(calls, " AND ") + ")");
  append(udf_run.setup_sql, idx);
  udf_run.teardown_sql = idx_drop;
  append(udf_run.teardown_sql, rls_disable("orders"));
  append(udf_run.teardown_sql, drops);
  udf_run.query = "SELECT count(*) FROM orders";

  c.runs = {std::move(inline_run), std::move(udf_run)};
  return c;
}

}  // namespace

std::vector<StressCase> gen_stress_suite(const Schema& schema) {
  PolicySet set = parse_policies(kStressPolicies, schema);
  auto atom = [&](std::string_view name) { return &std::get<AtomicPolicy>(set.find_definition(name)->expr.node); };
  const AtomicPolicy* p1 = atom("contradiction_p");
  const AtomicPolicy* p = atom("p");
  const AtomicPolicy* q = atom("q");

  std::vector<StressCase> out;
  out.push_back(make_case("p_and_not_p", {{p1, false}, {p1, true}}, false, schema));
  for (bool indexed : {false, true}) {
    std::string suffix = indexed ? "_indexed" : "";
    out.push_back(make_case("p_and_not_q" + suffix, {{p, false}, {q, true}}, indexed, schema));
    out.push_back(make_case("not_q_and_p" + suffix, {{q, true}, {p, false}}, indexed, schema));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Artifact files

std::string to_script(const std::vector<std::string>& statements) {
  std::string out;
  for (const auto& s : statements) out += s + ";\n";
  return out;
}

std::string manifest_json(const EnforcementArtifact& artifact, const std::vector<std::string>& files) {
  nlohmann::json j;
  j["strategy"] = std::string(to_string(artifact.strategy));
  j["files"] = files;
  j["policed_tables"] = artifact.policed_tables;
  j["requires_acyclic"] = artifact.requires_acyclic;
  return j.dump(2) + "\n";
}

std::vector<std::string> write_artifact(const EnforcementArtifact& artifact, const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir + "': " + ec.message());
  std::string prefix(to_string(artifact.strategy));
  std::vector<std::pair<std::string, std::string>> files{
      {prefix + "_setup.sql", to_script(artifact.setup_sql)},
      {prefix + "_teardown.sql", to_script(artifact.teardown_sql)},
  };
  std::vector<std::string> names;
  for (const auto& f : files) names.push_back(f.first);
  files.emplace_back(prefix + "_manifest.json", manifest_json(artifact, names));

  std::vector<std::string> written;
  for (const auto& [name, content] : files) {
    fs::path path = fs::path(dir) / name;
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << content;
    written.push_back(path.string());
  }
  return written;
}

}  // namespace secpol
