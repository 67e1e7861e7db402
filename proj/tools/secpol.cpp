#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "secpol/bench.hpp"
#include "secpol/csv.hpp"
#include "secpol/depgraph.hpp"
#include "secpol/error.hpp"
#include "secpol/oracle.hpp"
#include "secpol/pg.hpp"
#include "secpol/runner.hpp"
#include "secpol/sqlgen.hpp"
#include "secpol/synth.hpp"

namespace fs = std::filesystem;
using namespace secpol;

namespace {

constexpr int kOk = 0;
constexpr int kFinding = 1;
constexpr int kUsage = 2;

struct Globals {
  std::string schema = SECPOL_DEFAULT_SCHEMA;
  std::string policies;
  bool verbose = false;
};

struct FixtureOptions {
  std::string instance;
  int synth_customers = 0;
  std::uint64_t seed = 1;
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Schema load_schema_opt(const Globals& g) { return load_schema_file(g.schema); }

PolicySet load_policies_opt(const Globals& g, const Schema& schema) {
  if (g.policies.empty()) throw UsageError("--policies is required");
  return parse_policies_file(g.policies, schema);
}

std::vector<Strategy> parse_strategies(const std::string& list) {
  std::vector<Strategy> out;
  std::stringstream ss(list);
  std::string name;
  while (std::getline(ss, name, ',')) {
    auto s = parse_strategy(name);
    if (!s) throw UsageError("unknown strategy '" + name + "'");
    out.push_back(*s);
  }
  if (out.empty()) throw UsageError("no strategies given");
  return out;
}

Strategy parse_one_strategy(const std::string& name) {
  auto s = parse_strategy(name);
  if (!s) throw UsageError("unknown strategy '" + name + "'");
  return *s;
}

void add_fixture_options(CLI::App* cmd, FixtureOptions& f) {
  cmd->add_option("--instance", f.instance, "Directory of <relation>.csv files to load first")
      ->check(CLI::ExistingDirectory);
  cmd->add_option("--synth-customers", f.synth_customers, "Load a synthetic instance with this many customers");
  cmd->add_option("--seed", f.seed, "Seed of the synthetic instance");
}

std::optional<DatabaseInstance> build_fixture(const Schema& schema, const FixtureOptions& f) {
  if (!f.instance.empty()) return load_instance_dir(schema, f.instance);
  if (f.synth_customers > 0) {
    SynthOptions o;
    o.seed = f.seed;
    o.customers = f.synth_customers;
    o.suppliers = std::max(5, f.synth_customers / 6);
    o.parts = std::max(20, f.synth_customers / 2);
    return synth_tpch(schema, o);
  }
  return std::nullopt;
}

void load_into(pg::Connection& conn, const Schema& schema, const DatabaseInstance& db, bool verbose) {
  if (verbose) std::cerr << "loading fixture\n";
  create_schema(conn, schema);
  load_fixture(conn, db);
}

std::vector<std::pair<std::string, std::string>> read_queries(const std::string& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".sql") files.push_back(e.path());
  // q2 before q10: order by the numeric part when there is one.
  auto number = [](const fs::path& p) {
    std::string stem = p.stem().string();
    std::string digits;
    for (char c : stem)
      if (std::isdigit(static_cast<unsigned char>(c))) digits += c;
    return digits.empty() ? -1L : std::stol(digits);
  };
  std::sort(files.begin(), files.end(), [&](const fs::path& a, const fs::path& b) {
    return std::pair(number(a), a.stem().string()) < std::pair(number(b), b.stem().string());
  });
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& p : files) out.emplace_back(p.stem().string(), slurp(p.string()));
  if (out.empty()) throw UsageError("no .sql files in '" + dir + "'");
  return out;
}

// ---------------------------------------------------------------------------

int cmd_validate(const Globals& g) {
  Schema schema = load_schema_opt(g);
  if (g.policies.empty()) throw UsageError("--policies is required");
  PolicySet set = parse_policies_unchecked(slurp(g.policies), schema);
  ValidationReport r = validate(set, schema);
  for (const auto& f : r.findings) std::cout << f.code << " " << f.policy << ": " << f.message << "\n";
  if (!r.ok()) return kFinding;
  try {
    set.seal();
  } catch (const DuplicatePolicyForTable& e) {
    std::cout << e.kind() << ": " << e.what() << "\n";
    return kFinding;
  }
  CycleReport cycles = check_acyclicity(set, schema_dag(schema));
  for (const auto& f : cycles.findings) std::cout << f.code << " " << f.policy << ": " << f.message << "\n";
  std::cout << "ok: " << set.tables().size() << " policed tables, " << format_cycle(cycles) << "\n";
  return kOk;
}

int cmd_classify(const Globals& g) {
  Schema schema = load_schema_opt(g);
  PolicySet set = load_policies_opt(g, schema);
  std::cout << csv::format_row({"policy", "relation", "class", "mask"}) << "\n";
  for (const auto& d : set.definitions()) {
    if (d.composed) continue;
    for (const AtomicPolicy* a : leaves(d.expr))
      std::cout << csv::format_row({a->name, a->relation, std::string(to_string(classify(*a))),
                                    a->mask.is_filter() ? "filter" : "masking"})
                << "\n";
  }
  return kOk;
}

int cmd_tiers(const Globals& g) {
  Schema schema = load_schema_opt(g);
  PolicySet set = load_policies_opt(g, schema);
  SchemaDag dag = schema_dag(schema);
  CycleReport cycles = check_acyclicity(set, dag);
  if (cycles.cyclic) {
    std::cout << format_cycle(cycles) << "\n";
    return kFinding;
  }
  TierAssignment tiers = assign_tiers(set, dag);
  for (const auto& rel : schema.relations())
    std::cout << rel.name << " " << tiers.at(rel.name) << (set.for_table(rel.name) ? "" : " (base)") << "\n";
  return kOk;
}

int cmd_compile(const Globals& g, const std::string& strategy, const std::string& out, bool no_barrier) {
  Schema schema = load_schema_opt(g);
  PolicySet set = load_policies_opt(g, schema);
  Strategy s = parse_one_strategy(strategy);
  EnforcementArtifact art = (s == Strategy::SecureView && no_barrier) ? emit_views(set, schema, false)
                                                                       : compile(s, set, schema);
  for (const auto& f : write_artifact(art, out)) std::cout << f << "\n";
  if (g.verbose)
    for (const auto& n : art.notes) std::cerr << n << "\n";
  return kOk;
}

int cmd_oracle(const Globals& g, const std::string& instance, const std::string& user, bool literal_union) {
  Schema schema = load_schema_opt(g);
  PolicySet set = load_policies_opt(g, schema);
  DatabaseInstance db = load_instance_dir(schema, instance);
  EvalContext ctx;
  ctx.current_user = user;
  EvalOptions opts;
  opts.literal_union = literal_union;
  bool first = true;
  for (const auto& t : set.tables()) {
    if (!first) std::cout << "\n";
    first = false;
    std::cout << "-- " << t << "\n" << render(eval_policy(*set.for_table(t), db, ctx, opts), schema.at(t));
  }
  return kOk;
}

int cmd_diff(const Globals& g, const FixtureOptions& f, const std::string& strategies, const std::string& reader) {
  Schema schema = load_schema_opt(g);
  PolicySet set = load_policies_opt(g, schema);
  FixtureOptions fixture = f;
  if (fixture.instance.empty() && fixture.synth_customers <= 0) fixture.synth_customers = 60;
  DatabaseInstance db = *build_fixture(schema, fixture);
  pg::Connection conn(pg::uri_from_env());
  load_into(conn, schema, db, g.verbose);
  ensure_reader_role(conn, reader);
  DiffReport r = diff(conn, schema, set, db, reader, parse_strategies(strategies));
  for (const auto& c : r.checks) {
    std::cout << (c.skipped ? "SKIP" : c.passed ? "PASS" : "FAIL") << " " << c.table << " " << to_string(c.strategy)
              << " " << (c.masking ? "masking" : "filter") << " " << c.expected_rows << "/" << c.total_rows;
    if (!c.detail.empty()) std::cout << " " << c.detail;
    std::cout << "\n";
  }
  return r.ok() ? kOk : kFinding;
}

struct BenchOptions {
  std::string strategies = "pure-rls,indexed-rls,secure-view";
  std::string queries_dir = SECPOL_DEFAULT_QUERIES;
  int reps = 3;
  int warmups = 1;
  double timeout_s = 300;
  std::string baseline = "pure-rls";
  std::string out = "bench-out";
  std::string rewriter;
  std::string reader = "secpol_reader";
};

BenchConfig make_config(const BenchOptions& o) {
  BenchConfig c;
  c.uri = pg::uri_from_env();
  c.strategies = parse_strategies(o.strategies);
  c.repetitions = o.reps;
  c.warmups = o.warmups;
  c.timeout = std::chrono::milliseconds(static_cast<long long>(o.timeout_s * 1000));
  c.baseline = parse_one_strategy(o.baseline);
  c.reader_role = o.reader;
  c.rewriter_command = o.rewriter;
  try {
    c.check();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  return c;
}

int cmd_bench(const Globals& g, const FixtureOptions& f, const BenchOptions& o) {
  Schema schema = load_schema_opt(g);
  PolicySet set = load_policies_opt(g, schema);
  BenchConfig config = make_config(o);
  config.policy_path = g.policies;
  config.queries = read_queries(o.queries_dir);
  pg::Connection conn(config.uri);
  if (auto db = build_fixture(schema, f)) load_into(conn, schema, *db, g.verbose);
  ensure_reader_role(conn, config.reader_role);

  ResultMatrix m = run_suite(config, schema, set, conn);
  std::map<std::string, std::string> text(config.queries.begin(), config.queries.end());
  int opaque_failures = 0;
  std::vector<std::string> opacity{csv::format_row({"query", "strategy", "rep", "opaque"})};
  for (const auto& r : m.runs) {
    if (r.plan_text.empty()) continue;
    bool ok = verify_opacity(r.plan_text, r.strategy, set, text[r.query_id]);
    if (!ok) ++opaque_failures;
    opacity.push_back(csv::format_row(
        {r.query_id, std::string(to_string(r.strategy)), std::to_string(r.repetition), ok ? "true" : "false"}));
  }
  bool has_baseline = std::any_of(m.aggregates.begin(), m.aggregates.end(),
                                  [&](const auto& kv) { return kv.first.strategy == config.baseline; });
  if (has_baseline && m.aborted.empty()) m = normalize(m, config.baseline);
  for (const auto& file : emit_report(m, o.out)) std::cout << file << "\n";
  std::ofstream(fs::path(o.out) / "opacity.csv") << [&] {
    std::string s;
    for (const auto& line : opacity) s += line + "\n";
    return s;
  }();
  std::size_t timeouts = 0, failures = 0;
  for (const auto& r : m.runs) {
    timeouts += r.timed_out;
    failures += r.failed;
    if (g.verbose && r.failed) std::cerr << r.query_id << " " << to_string(r.strategy) << ": " << r.error << "\n";
  }
  std::cout << m.runs.size() << " runs, " << timeouts << " timed out, " << failures << " failed, " << opaque_failures
            << " opacity violations\n";
  if (!m.aborted.empty()) {
    std::cerr << "suite aborted: " << m.aborted << "\n";
    return kFinding;
  }
  return opaque_failures ? kFinding : kOk;
}

int cmd_stress(const Globals& g, FixtureOptions f, const BenchOptions& o) {
  Schema schema = load_schema_opt(g);
  BenchConfig config = make_config(o);
  config.strategies = {Strategy::InlineRewrite, Strategy::BlackBoxUDF};
  config.baseline = Strategy::InlineRewrite;
  pg::Connection conn(config.uri);
  if (f.instance.empty() && f.synth_customers <= 0) f.synth_customers = 15000;
  if (!f.instance.empty()) {
    load_into(conn, schema, load_instance_dir(schema, f.instance), g.verbose);
  } else {
    SynthOptions so;
    so.seed = f.seed;
    so.customers = f.synth_customers;
    so.max_orders_per_customer = 31;
    so.max_lines_per_order = 1;
    DatabaseInstance db = synth_tpch(schema, so);
    if (g.verbose) std::cerr << "loading " << db.get("orders").rows.size() << " orders\n";
    create_schema(conn, schema);
    load_fixture(conn, db, {"orders"});
  }
  ensure_reader_role(conn, config.reader_role);
  std::vector<StressCase> cases = gen_stress_suite(schema);
  ResultMatrix m = run_stress(config, cases, conn);
  std::string table = stress_table(m, cases);
  std::cout << table;
  emit_report(m, o.out);
  std::ofstream(fs::path(o.out) / "stress.csv") << table;
  if (!m.aborted.empty()) {
    std::cerr << "suite aborted: " << m.aborted << "\n";
    return kFinding;
  }
  return kOk;
}

int cmd_report(const std::string& results, const std::string& baseline, const std::string& out) {
  std::vector<csv::Row> rows = csv::parse(slurp(results));
  if (rows.empty() || rows[0] != csv::Row{"query", "strategy", "rep", "planning_ms", "execution_ms", "timed_out"})
    throw UsageError("'" + results + "' is not a results.csv file");
  std::vector<QueryRun> runs;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const csv::Row& r = rows[i];
    if (r.size() != 6) throw UsageError("malformed row " + std::to_string(i + 1) + " in '" + results + "'");
    QueryRun run;
    run.query_id = r[0];
    run.strategy = parse_one_strategy(r[1]);
    run.repetition = std::stoi(r[2]);
    if (!r[3].empty()) run.planning_ms = std::stod(r[3]);
    if (!r[4].empty()) run.execution_ms = std::stod(r[4]);
    run.timed_out = r[5] == "true";
    run.failed = !run.timed_out && !run.execution_ms;
    runs.push_back(std::move(run));
  }
  ResultMatrix m = normalize(aggregate(std::move(runs)), parse_one_strategy(baseline));
  for (const auto& file : emit_report(m, out)) std::cout << file << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Policy compiler and benchmark toolkit for content-based access policies"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--schema", g.schema, "Schema document (JSON)")->capture_default_str();
  app.add_option("--policies", g.policies, "Policy document");
  app.add_flag("-v,--verbose", g.verbose, "Progress and notes on standard error");

  std::function<int()> action;

  app.add_subcommand("validate", "Parse and validate a policy document")->callback([&] {
    action = [&] { return cmd_validate(g); };
  });
  app.add_subcommand("classify", "Taxonomy class of every atomic policy")->callback([&] {
    action = [&] { return cmd_classify(g); };
  });
  app.add_subcommand("tiers", "Tier of every relation, or the cycle that prevents tiering")->callback([&] {
    action = [&] { return cmd_tiers(g); };
  });

  std::string strategy, out = "artifacts";
  bool no_barrier = false;
  auto* compile_cmd = app.add_subcommand("compile", "Write setup, teardown and manifest files for a strategy");
  compile_cmd->add_option("--strategy", strategy, "pure-rls, indexed-rls, secure-view, inline-rewrite or udf")
      ->required();
  compile_cmd->add_option("--out", out, "Output directory")->capture_default_str();
  compile_cmd->add_flag("--no-barrier", no_barrier, "Plain views instead of security barrier views");
  compile_cmd->callback([&] { action = [&] { return cmd_compile(g, strategy, out, no_barrier); }; });

  std::string instance, user = "secpol_reader";
  bool literal_union = false;
  auto* oracle_cmd = app.add_subcommand("oracle", "Evaluate every policy over an instance");
  oracle_cmd->add_option("--instance", instance, "Directory of <relation>.csv files")
      ->required()
      ->check(CLI::ExistingDirectory);
  oracle_cmd->add_option("--user", user, "Value of :current_user")->capture_default_str();
  oracle_cmd->add_flag("--literal-union", literal_union, "One row per applicable mask instead of merging");
  oracle_cmd->callback([&] { action = [&] { return cmd_oracle(g, instance, user, literal_union); }; });

  FixtureOptions fixture;
  std::string diff_strategies = "pure-rls,indexed-rls,secure-view,inline-rewrite,udf", reader = "secpol_reader";
  auto* diff_cmd = app.add_subcommand("diff", "Compare database results under each strategy with the oracle");
  add_fixture_options(diff_cmd, fixture);
  diff_cmd->add_option("--strategies", diff_strategies, "Comma-separated strategies")->capture_default_str();
  diff_cmd->add_option("--reader", reader, "Role the checked queries run as")->capture_default_str();
  diff_cmd->callback([&] { action = [&] { return cmd_diff(g, fixture, diff_strategies, reader); }; });

  BenchOptions bench;
  auto add_bench_options = [&](CLI::App* cmd, bool with_strategies) {
    if (with_strategies) {
      cmd->add_option("--strategies", bench.strategies, "Comma-separated strategies")->capture_default_str();
      cmd->add_option("--queries-dir", bench.queries_dir, "Directory of .sql files")->capture_default_str();
      cmd->add_option("--baseline", bench.baseline, "Normalization baseline")->capture_default_str();
      cmd->add_option("--rewriter", bench.rewriter, "External rewriter command for inline-rewrite");
    }
    cmd->add_option("--reps", bench.reps, "Timed repetitions")->capture_default_str();
    cmd->add_option("--warmups", bench.warmups, "Discarded warmup runs")->capture_default_str();
    cmd->add_option("--timeout-s", bench.timeout_s, "Per-statement timeout in seconds")->capture_default_str();
    cmd->add_option("--out", bench.out, "Report directory")->capture_default_str();
    cmd->add_option("--reader", bench.reader, "Role the timed statements run as")->capture_default_str();
    add_fixture_options(cmd, fixture);
  };
  auto* bench_cmd = app.add_subcommand("bench", "Time the query workload under each strategy");
  add_bench_options(bench_cmd, true);
  bench_cmd->callback([&] { action = [&] { return cmd_bench(g, fixture, bench); }; });

  auto* stress_cmd = app.add_subcommand("stress", "Time the negated-composition stress cases");
  add_bench_options(stress_cmd, false);
  stress_cmd->callback([&] { action = [&] { return cmd_stress(g, fixture, bench); }; });

  std::string results, report_baseline = "pure-rls";
  auto* report_cmd = app.add_subcommand("report", "Recompute ratios and plot data from a results.csv");
  report_cmd->add_option("--results", results, "results.csv from a previous bench")
      ->required()
      ->check(CLI::ExistingFile);
  report_cmd->add_option("--baseline", report_baseline, "Normalization baseline")->capture_default_str();
  report_cmd->add_option("--out", out, "Report directory")->capture_default_str();
  report_cmd->callback([&] { action = [&] { return cmd_report(results, report_baseline, out); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e, std::cerr, std::cerr);
    std::cerr << app.help();
    return kUsage;
  }

  try {
    return action();
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const Error& e) {
    std::cerr << e.kind() << ": " << e.what() << "\n";
    return kFinding;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
}
