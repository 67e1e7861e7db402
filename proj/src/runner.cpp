#include "secpol/runner.hpp"

#include <algorithm>
#include <chrono>

#include <nlohmann/json.hpp>

#include "secpol/error.hpp"

namespace secpol {

namespace {

using Clock = std::chrono::steady_clock;

std::string ident(const std::string& name) {
  std::string out = "\"";
  for (char c : name) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

std::string strip_terminator(std::string sql) {
  while (!sql.empty() && (std::isspace(static_cast<unsigned char>(sql.back())) || sql.back() == ';')) sql.pop_back();
  return sql;
}

/// SET ROLE for the lifetime of the guard. RESET failures after a lost
/// connection are left to the next statement to report.
class RoleGuard {
 public:
  RoleGuard(pg::Connection& conn, const std::string& role) : conn_(conn), active_(!role.empty()) {
    if (active_) conn_.exec("SET ROLE " + ident(role));
  }
  ~RoleGuard() {
    if (!active_) return;
    try {
      conn_.exec("RESET ROLE");
    } catch (const Error&) {
    }
  }
  RoleGuard(const RoleGuard&) = delete;
  RoleGuard& operator=(const RoleGuard&) = delete;

 private:
  pg::Connection& conn_;
  bool active_;
};

void run_teardown(pg::Connection& conn, const std::vector<std::string>& statements) {
  for (const auto& s : statements) {
    try {
      conn.exec(s);
    } catch (const QueryFailed&) {
    }
  }
}

void record_failure(ResultMatrix& m, const std::string& query, Strategy s, int reps, const std::string& error) {
  for (int r = 0; r < reps; ++r) {
    QueryRun run;
    run.query_id = query;
    run.strategy = s;
    run.repetition = r;
    run.failed = true;
    run.error = error;
    m.runs.push_back(std::move(run));
  }
}

struct Timer {
  Clock::time_point origin = Clock::now();
  double now() const { return std::chrono::duration<double, std::milli>(Clock::now() - origin).count(); }
};

/// Warmups then repetitions of one statement. A timed-out warmup marks every
/// repetition timed out instead of waiting out the limit again.
void time_statement(pg::Connection& conn, const std::string& sql, const std::string& query_id, Strategy s,
                    const BenchConfig& config, const Timer& timer, std::optional<double> rewrite_ms,
                    ResultMatrix& m) {
  for (int w = 0; w < config.warmups; ++w) {
    QueryRun warm = explain_analyze(conn, sql);
    if (warm.timed_out || warm.failed) {
      for (int r = 0; r < config.repetitions; ++r) {
        QueryRun run = warm;
        run.query_id = query_id;
        run.strategy = s;
        run.repetition = r;
        run.rewrite_ms = rewrite_ms;
        m.runs.push_back(run);
      }
      return;
    }
  }
  for (int r = 0; r < config.repetitions; ++r) {
    double started = timer.now();
    QueryRun run = explain_analyze(conn, sql);
    run.started_ms = started;
    run.finished_ms = timer.now();
    run.query_id = query_id;
    run.strategy = s;
    run.repetition = r;
    run.rewrite_ms = rewrite_ms;
    m.runs.push_back(std::move(run));
  }
}

Value cell_value(DataType type, const std::optional<std::string>& text) {
  if (!text) return Value::null();
  if (auto v = parse_value(type, *text)) return *v;
  // Constant masks turn non-text columns into text.
  return Value::text(*text);
}

/// Drops every field that varies between identical runs so plan_text is
/// comparable across repetitions.
void strip_timings(nlohmann::json& node) {
  static const char* const volatile_keys[] = {"Actual Startup Time", "Actual Total Time", "Planning Time",
                                              "Execution Time", "Workers", "Workers Launched", "JIT"};
  if (node.is_object()) {
    for (const char* k : volatile_keys) node.erase(k);
    for (auto& [_, v] : node.items()) strip_timings(v);
  } else if (node.is_array()) {
    for (auto& v : node) strip_timings(v);
  }
}

std::string first_difference(const std::string& want, const std::string& got) {
  std::size_t a = 0, b = 0;
  while (a < want.size() || b < got.size()) {
    std::size_t ea = want.find('\n', a), eb = got.find('\n', b);
    std::string lw = a < want.size() ? want.substr(a, ea - a) : "<end>";
    std::string lg = b < got.size() ? got.substr(b, eb - b) : "<end>";
    if (lw != lg) return "expected '" + lw + "', got '" + lg + "'";
    a = ea == std::string::npos ? want.size() : ea + 1;
    b = eb == std::string::npos ? got.size() : eb + 1;
  }
  return "";
}

std::string key_list(const RelationDef& def) {
  std::string out;
  for (const auto& k : def.primary_key) out += (out.empty() ? "" : ", ") + k;
  return out;
}

}  // namespace

bool DiffReport::ok() const {
  return std::all_of(checks.begin(), checks.end(), [](const DiffCheck& c) { return c.skipped || c.passed; });
}

void create_schema(pg::Connection& conn, const Schema& schema) {
  conn.exec_all(schema_drop_ddl(schema));
  conn.exec(
      "DO $$ DECLARE f regprocedure; BEGIN "
      "FOR f IN SELECT p.oid::regprocedure FROM pg_proc p JOIN pg_namespace n ON n.oid = p.pronamespace "
      "WHERE n.nspname = 'public' AND p.proname LIKE 'pol\\_%' LOOP "
      "EXECUTE 'DROP FUNCTION ' || f; END LOOP; END $$");
  conn.exec_all(schema_ddl(schema));
}

void load_fixture(pg::Connection& conn, const DatabaseInstance& db, const std::vector<std::string>& tables) {
  for (const auto& def : db.schema().relations()) {
    if (!tables.empty() && std::find(tables.begin(), tables.end(), def.name) == tables.end()) continue;
    const RelationInstance& inst = db.get(def.name);
    if (inst.rows.empty()) continue;
    std::vector<std::string> cols;
    for (const auto& a : def.attributes) cols.push_back(a.name);
    conn.copy_csv(def.name, cols, render_instance_csv(def, inst));
    conn.exec("ANALYZE " + def.name);
  }
}

void ensure_reader_role(pg::Connection& conn, const std::string& role) {
  conn.exec("DO $$ BEGIN IF NOT EXISTS (SELECT 1 FROM pg_roles WHERE rolname = " + conn.quote_literal(role) +
            ") THEN CREATE ROLE " + ident(role) + " NOLOGIN NOSUPERUSER NOBYPASSRLS; END IF; END $$");
  conn.exec("GRANT USAGE ON SCHEMA public TO " + ident(role));
  conn.exec("GRANT SELECT ON ALL TABLES IN SCHEMA public TO " + ident(role));
}

void prepare_statements(pg::Connection& conn, const std::vector<std::string>& setup,
                        const std::vector<std::string>& analyze_tables, const std::string& reader_role) {
  conn.exec("BEGIN");
  for (const auto& stmt : setup) {
    try {
      conn.exec(stmt);
    } catch (const QueryFailed& e) {
      try {
        conn.exec("ROLLBACK");
      } catch (const QueryFailed&) {
      }
      throw SetupFailed(stmt + ": " + e.what());
    }
  }
  conn.exec("COMMIT");
  for (const auto& t : analyze_tables) conn.exec("ANALYZE " + t);
  if (!reader_role.empty()) conn.exec("GRANT SELECT ON ALL TABLES IN SCHEMA public TO " + ident(reader_role));
}

void prepare_strategy(pg::Connection& conn, const EnforcementArtifact& artifact, const std::string& reader_role) {
  prepare_statements(conn, artifact.setup_sql, artifact.policed_tables, reader_role);
}

void teardown_strategy(pg::Connection& conn, const EnforcementArtifact& artifact) {
  run_teardown(conn, artifact.teardown_sql);
}

QueryRun explain_analyze(pg::Connection& conn, const std::string& sql) {
  QueryRun run;
  try {
    pg::Result r = conn.exec("EXPLAIN (ANALYZE, FORMAT JSON) " + strip_terminator(sql));
    auto doc = nlohmann::json::parse(r.get(0, 0));
    run.planning_ms = doc.at(0).at("Planning Time").get<double>();
    run.execution_ms = doc.at(0).at("Execution Time").get<double>();
    strip_timings(doc);
    run.plan_text = doc.dump(2);
  } catch (const QueryFailed& e) {
    if (conn.last_was_timeout()) run.timed_out = true;
    else run.failed = true;
    run.error = e.what();
  } catch (const nlohmann::json::exception& e) {
    run.failed = true;
    run.error = std::string("unreadable plan: ") + e.what();
  }
  return run;
}

std::vector<ResultRow> fetch_multiset(pg::Connection& conn, const std::string& sql, const std::string& role) {
  RoleGuard guard(conn, role);
  pg::Result r = conn.exec(strip_terminator(sql));
  std::vector<ResultRow> rows;
  rows.reserve(static_cast<std::size_t>(r.rows()));
  for (int i = 0; i < r.rows(); ++i) {
    ResultRow row;
    for (int c = 0; c < r.columns(); ++c) row.push_back(r.value(i, c));
    rows.push_back(std::move(row));
  }
  std::sort(rows.begin(), rows.end());
  return rows;
}

ResultMatrix run_suite(const BenchConfig& config, const Schema& schema, const PolicySet& set,
                       pg::Connection& conn) {
  config.check();
  ResultMatrix m;
  Timer timer;
  try {
    for (Strategy s : config.strategies) {
      std::optional<EnforcementArtifact> art;
      try {
        art = compile(s, set, schema);
        prepare_strategy(conn, *art, config.reader_role);
      } catch (const ConnectionLost&) {
        throw;
      } catch (const Error& e) {
        if (art) teardown_strategy(conn, *art);
        for (const auto& [id, _] : config.queries) record_failure(m, id, s, config.repetitions, e.what());
        continue;
      }
      {
        RoleGuard guard(conn, config.reader_role);
        conn.exec("SET statement_timeout = " + std::to_string(config.timeout.count()));
        for (const auto& [id, sql] : config.queries) {
          std::string text;
          std::optional<double> rewrite_ms;
          try {
            text = art->rewrite(sql);
            if (s == Strategy::InlineRewrite && !config.rewriter_command.empty()) {
              double t0 = timer.now();
              text = external_rewrite(text, config.rewriter_command, config.timeout);
              rewrite_ms = timer.now() - t0;
            }
          } catch (const Error& e) {
            record_failure(m, id, s, config.repetitions, e.what());
            continue;
          }
          time_statement(conn, text, id, s, config, timer, rewrite_ms, m);
        }
        conn.exec("RESET statement_timeout");
      }
      teardown_strategy(conn, *art);
    }
  } catch (const ConnectionLost& e) {
    ResultMatrix partial = aggregate(std::move(m.runs));
    partial.aborted = e.what();
    return partial;
  }
  return aggregate(std::move(m.runs));
}

ResultMatrix run_stress(const BenchConfig& config, const std::vector<StressCase>& cases, pg::Connection& conn) {
  config.check();
  ResultMatrix m;
  Timer timer;
  try {
    for (const auto& c : cases) {
      for (const auto& run : c.runs) {
        try {
          prepare_statements(conn, run.setup_sql, {"orders"}, config.reader_role);
        } catch (const SetupFailed& e) {
          run_teardown(conn, run.teardown_sql);
          record_failure(m, c.name, run.mechanism, config.repetitions, e.what());
          continue;
        }
        {
          RoleGuard guard(conn, config.reader_role);
          conn.exec("SET statement_timeout = " + std::to_string(config.timeout.count()));
          time_statement(conn, run.query, c.name, run.mechanism, config, timer, std::nullopt, m);
          conn.exec("RESET statement_timeout");
        }
        run_teardown(conn, run.teardown_sql);
      }
    }
  } catch (const ConnectionLost& e) {
    ResultMatrix partial = aggregate(std::move(m.runs));
    partial.aborted = e.what();
    return partial;
  }
  return aggregate(std::move(m.runs));
}

RelationInstance read_relation(pg::Connection& conn, const RelationDef& def) {
  std::string cols;
  for (const auto& a : def.attributes) cols += (cols.empty() ? "" : ", ") + a.name;
  pg::Result r = conn.exec("SELECT " + cols + " FROM " + def.name + " ORDER BY " + key_list(def));
  RelationInstance inst;
  inst.relation = def.name;
  for (int i = 0; i < r.rows(); ++i) {
    Tuple row;
    for (int c = 0; c < r.columns(); ++c) row.push_back(cell_value(def.attributes[c].dtype, r.value(i, c)));
    inst.rows.push_back(std::move(row));
  }
  return inst;
}

DiffReport diff(pg::Connection& conn, const Schema& schema, const PolicySet& set, const DatabaseInstance& db,
                const std::string& reader_role, const std::vector<Strategy>& strategies) {
  DiffReport report;
  EvalContext ctx;
  ctx.current_user = reader_role;
  for (const auto& t : set.tables()) {
    PolicySet one = set.only(t);
    const RelationDef& def = schema.at(t);
    const PolicyExpr& policy = *one.for_table(t);
    bool masking = !is_filter_only(policy);
    MaskedRelation want = eval_policy(policy, db, ctx);

    for (Strategy s : strategies) {
      DiffCheck check;
      check.table = t;
      check.strategy = s;
      check.masking = masking;
      check.total_rows = db.get(t).rows.size();
      check.expected_rows = masking ? static_cast<std::size_t>(std::count_if(want.rows.begin(), want.rows.end(),
                                                                             [](const MaskedRow& r) {
                                                                               return r.tag != VisibilityTag::SuppressedOut;
                                                                             }))
                                    : visible_set(want).size();
      std::optional<EnforcementArtifact> art;
      try {
        art = compile(s, one, schema);
      } catch (const ConnectionLost&) {
        throw;
      } catch (const Error& e) {
        check.skipped = true;
        check.detail = e.what();
        report.checks.push_back(std::move(check));
        continue;
      }
      try {
        prepare_strategy(conn, *art, reader_role);
        if (masking) {
          std::vector<ResultRow> rows = fetch_multiset(conn, art->rewrite("SELECT * FROM " + t), reader_role);
          MaskedRelation got;
          got.relation = t;
          for (const auto& row : rows) {
            if (row.size() != def.attributes.size() + 1)
              throw QueryFailed("expected " + std::to_string(def.attributes.size() + 1) + " columns, got " +
                                std::to_string(row.size()));
            MaskedRow mr;
            for (std::size_t i = 0; i < def.attributes.size(); ++i)
              mr.values.push_back(cell_value(def.attributes[i].dtype, row[i]));
            for (std::size_t k : def.key_indexes()) mr.key.push_back(mr.values[k]);
            const std::string level = row.back().value_or("");
            mr.tag = level == "FULL" ? VisibilityTag::Full : VisibilityTag::Masked;
            got.rows.push_back(std::move(mr));
          }
          std::string w = render(want, def), g = render(got, def);
          check.passed = w == g;
          if (!check.passed) check.detail = first_difference(w, g);
        } else {
          std::vector<ResultRow> rows =
              fetch_multiset(conn, art->rewrite("SELECT " + key_list(def) + " FROM " + t), reader_role);
          std::set<Tuple> got;
          std::vector<std::size_t> keys = def.key_indexes();
          for (const auto& row : rows) {
            Tuple key;
            for (std::size_t i = 0; i < keys.size(); ++i)
              key.push_back(cell_value(def.attributes[keys[i]].dtype, row[i]));
            got.insert(std::move(key));
          }
          std::set<Tuple> expected = visible_set(want);
          check.passed = got == expected && rows.size() == expected.size();
          if (!check.passed)
            check.detail = "expected " + std::to_string(expected.size()) + " visible rows, got " +
                           std::to_string(rows.size()) + (got == expected ? " (duplicates)" : " (different keys)");
        }
      } catch (const ConnectionLost&) {
        throw;
      } catch (const Error& e) {
        check.passed = false;
        check.detail = e.what();
      }
      teardown_strategy(conn, *art);
      report.checks.push_back(std::move(check));
    }
  }
  return report;
}

}  // namespace secpol
