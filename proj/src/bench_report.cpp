#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <regex>
#include <set>

#include "secpol/bench.hpp"
#include "secpol/csv.hpp"
#include "secpol/error.hpp"
#include "sql_render.hpp"

namespace secpol {

namespace fs = std::filesystem;

void BenchConfig::check() const {
  if (repetitions < 1) throw Error("InvalidConfig", "repetitions must be at least 1");
  if (warmups < 0) throw Error("InvalidConfig", "warmups must not be negative");
  if (timeout.count() <= 0) throw Error("InvalidConfig", "timeout must be positive");
  if (std::find(strategies.begin(), strategies.end(), baseline) == strategies.end())
    throw Error("InvalidConfig", "baseline " + std::string(to_string(baseline)) + " is not among the strategies");
}

std::string format_ms(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

namespace {

std::string format_ratio(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::optional<double> median(std::vector<double> xs) {
  if (xs.empty()) return std::nullopt;
  std::sort(xs.begin(), xs.end());
  std::size_t n = xs.size();
  return n % 2 ? xs[n / 2] : (xs[n / 2 - 1] + xs[n / 2]) / 2.0;
}

std::string opt(const std::optional<double>& v, std::string (*fmt)(double)) { return v ? fmt(*v) : ""; }

void write_file(const fs::path& path, const std::string& content, std::vector<std::string>& written) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << content;
  if (!out) throw IoError("write failed for '" + path.string() + "'");
  written.push_back(path.string());
}

std::vector<Strategy> strategies_in(const ResultMatrix& m) {
  std::set<Strategy> seen;
  for (const auto& [k, _] : m.aggregates) seen.insert(k.strategy);
  std::vector<Strategy> out;
  for (Strategy s : all_strategies())
    if (seen.count(s)) out.push_back(s);
  return out;
}

// Column-vs-literal comparisons of a policy.
struct LiteralComparison {
  std::string column;
  std::string op;
  Value literal;
};

struct ComparisonCollector : AstVisitor {
  std::vector<LiteralComparison>* out;
  void on_comparison(const Comparison& c, int) override {
    const auto* lc = std::get_if<ColumnRef>(&c.lhs.node);
    const auto* rc = std::get_if<ColumnRef>(&c.rhs.node);
    const auto* ll = std::get_if<Literal>(&c.lhs.node);
    const auto* rl = std::get_if<Literal>(&c.rhs.node);
    if (lc && rl) out->push_back({lc->attribute, std::string(to_sql(c.op)), rl->value});
    if (ll && rc) {
      static const std::map<std::string, std::string> flip{{"<", ">"}, {">", "<"}, {"<=", ">="},
                                                           {">=", "<="}, {"=", "="},  {"<>", "<>"}};
      out->push_back({rc->attribute, flip.at(std::string(to_sql(c.op))), ll->value});
    }
  }
};

void collect_comparisons(const PolicyExpr& p, std::vector<LiteralComparison>& out) {
  ComparisonCollector v;
  v.out = &out;
  std::visit(
      [&](const auto& n) {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, AtomicPolicy>) {
          walk(n.predicate, v);
        } else if constexpr (std::is_same_v<T, PAnd> || std::is_same_v<T, POr>) {
          collect_comparisons(*n.lhs, out);
          collect_comparisons(*n.rhs, out);
        } else if constexpr (std::is_same_v<T, PNot>) {
          collect_comparisons(*n.inner, out);
        } else {
          walk(n.cond, v);
          collect_comparisons(*n.then_branch, out);
          collect_comparisons(*n.else_branch, out);
        }
      },
      p.node);
}

std::string regex_escape(const std::string& s) {
  static const std::string special = R"(\^$.|?*+()[]{}/-)";
  std::string out;
  for (char c : s) {
    if (special.find(c) != std::string::npos) out += '\\';
    out += c;
  }
  return out;
}

/// Matches `col op literal` as the planner prints it, e.g.
/// `(o_totalprice > '150000'::numeric)` or `((o_orderstatus)::text = 'F'::text)`.
std::regex comparison_regex(const LiteralComparison& c, bool icase) {
  std::string lit = regex_escape(c.literal.to_string());
  bool numeric = c.literal.is_numeric();
  std::string value = numeric ? "'?" + lit + "(?![0-9.])" : "'" + lit + "'";
  std::string pattern = "(^|[^A-Za-z0-9_])" + regex_escape(c.column) + R"(\)?(::[a-z ]+)?\s*)" + regex_escape(c.op) +
                        R"(\s*\(?)" + value;
  auto flags = std::regex::ECMAScript;
  if (icase) flags |= std::regex::icase;
  return std::regex(pattern, flags);
}

}  // namespace

ResultMatrix aggregate(std::vector<QueryRun> runs) {
  ResultMatrix m;
  m.runs = std::move(runs);
  std::map<CellKey, std::pair<std::vector<double>, std::vector<double>>> samples;
  for (const auto& r : m.runs) {
    if (std::find(m.query_order.begin(), m.query_order.end(), r.query_id) == m.query_order.end())
      m.query_order.push_back(r.query_id);
    CellKey key{r.query_id, r.strategy};
    Cell& cell = m.aggregates[key];
    auto& [plan, exec] = samples[key];
    if (r.timed_out) cell.timed_out = true;
    else if (r.failed) cell.failed = true;
    else {
      if (r.planning_ms) plan.push_back(*r.planning_ms);
      if (r.execution_ms) exec.push_back(*r.execution_ms);
    }
  }
  for (auto& [key, cell] : m.aggregates) {
    if (cell.timed_out || cell.failed) continue;
    cell.planning_ms = median(samples[key].first);
    cell.execution_ms = median(samples[key].second);
  }
  return m;
}

ResultMatrix normalize(const ResultMatrix& matrix, Strategy baseline) {
  ResultMatrix out = matrix;
  out.ratios.clear();
  for (const auto& q : matrix.query_order) {
    auto base_it = matrix.aggregates.find(CellKey{q, baseline});
    if (base_it == matrix.aggregates.end())
      throw MissingBaseline("no " + std::string(to_string(baseline)) + " cell for query " + q);
    const Cell& base = base_it->second;
    for (const auto& [key, cell] : matrix.aggregates) {
      if (key.query != q) continue;
      Ratio r;
      if (cell.timed_out) r.marker = "timeout";
      else if (cell.failed) r.marker = "error";
      else if (base.timed_out) r.marker = "baseline-timeout";
      else if (base.failed) r.marker = "baseline-error";
      else if (key.strategy == baseline) {
        r.planning = 1.0;
        r.execution = 1.0;
      } else {
        auto ratio = [](const std::optional<double>& x, const std::optional<double>& b) -> std::optional<double> {
          if (!x || !b || *b == 0.0) return std::nullopt;
          return *x / *b;
        };
        r.planning = ratio(cell.planning_ms, base.planning_ms);
        r.execution = ratio(cell.execution_ms, base.execution_ms);
        if (!r.planning || !r.execution) r.marker = "zero-baseline";
      }
      out.ratios[key] = r;
    }
  }
  return out;
}

bool verify_opacity(const std::string& plan_text, Strategy strategy, const PolicySet& set, const std::string& query) {
  std::vector<std::string> tables;
  if (query.empty()) {
    tables = set.tables();
  } else {
    for (const auto& t : activated_policies(query, set)) tables.push_back(t);
  }
  if (tables.empty()) return true;

  if (strategy == Strategy::BlackBoxUDF) {
    static const std::regex call(R"(\bpol_[A-Za-z0-9_]*\()");
    if (!std::regex_search(plan_text, call)) return false;
    for (const auto& t : tables) {
      std::vector<LiteralComparison> cmps;
      collect_comparisons(*set.for_table(t), cmps);
      for (const auto& c : cmps) {
        if (!query.empty() && std::regex_search(query, comparison_regex(c, true))) continue;
        if (std::regex_search(plan_text, comparison_regex(c, false))) return false;
      }
    }
    return true;
  }

  std::set<std::pair<std::string, std::string>> cols;
  for (const auto& t : tables) sqlr::collect_columns(*set.for_table(t), cols);
  for (const auto& [rel, col] : cols)
    if (std::regex_search(plan_text, std::regex("(^|[^A-Za-z0-9_])" + regex_escape(col) + "($|[^A-Za-z0-9_])")))
      return true;
  return false;
}

std::vector<std::string> emit_report(const ResultMatrix& m, const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir + "': " + ec.message());
  std::vector<std::string> written;

  std::string results =
      csv::format_row({"query", "strategy", "rep", "planning_ms", "execution_ms", "timed_out"}) + "\n";
  for (const auto& r : m.runs)
    results += csv::format_row({r.query_id, std::string(to_string(r.strategy)), std::to_string(r.repetition),
                                opt(r.planning_ms, format_ms), opt(r.execution_ms, format_ms),
                                r.timed_out ? "true" : "false"}) +
               "\n";
  write_file(fs::path(dir) / "results.csv", results, written);

  std::vector<Strategy> strategies = strategies_in(m);
  std::string ratios =
      csv::format_row({"query", "strategy", "planning_ratio", "execution_ratio", "marker"}) + "\n";
  for (const auto& q : m.query_order)
    for (Strategy s : strategies) {
      auto it = m.ratios.find(CellKey{q, s});
      if (it == m.ratios.end()) continue;
      ratios += csv::format_row({q, std::string(to_string(s)), opt(it->second.planning, format_ratio),
                                 opt(it->second.execution, format_ratio), it->second.marker}) +
                "\n";
    }
  write_file(fs::path(dir) / "ratios.csv", ratios, written);

  for (bool planning : {true, false}) {
    std::vector<std::string> header{"query"};
    for (Strategy s : strategies) header.emplace_back(to_string(s));
    std::string plot = csv::format_row(header) + "\n";
    for (const auto& q : m.query_order) {
      std::vector<std::string> row{q};
      for (Strategy s : strategies) {
        auto it = m.ratios.find(CellKey{q, s});
        if (it == m.ratios.end()) row.emplace_back("");
        else row.push_back(opt(planning ? it->second.planning : it->second.execution, format_ratio));
      }
      plot += csv::format_row(row) + "\n";
    }
    write_file(fs::path(dir) / (planning ? "plot_planning.csv" : "plot_execution.csv"), plot, written);
  }
  return written;
}

std::string stress_table(const ResultMatrix& m, const std::vector<StressCase>& cases) {
  std::string out = csv::format_row({"case", "composition", "mechanism", "median_ms", "slowdown"}) + "\n";
  for (const auto& c : cases) {
    std::optional<double> fastest;
    for (const auto& r : c.runs) {
      auto it = m.aggregates.find(CellKey{c.name, r.mechanism});
      if (it != m.aggregates.end() && it->second.execution_ms)
        fastest = fastest ? std::min(*fastest, *it->second.execution_ms) : *it->second.execution_ms;
    }
    for (const auto& r : c.runs) {
      auto it = m.aggregates.find(CellKey{c.name, r.mechanism});
      std::string median_ms, slowdown;
      if (it != m.aggregates.end() && it->second.execution_ms) {
        median_ms = format_ms(*it->second.execution_ms);
        if (fastest && *fastest > 0) slowdown = format_ratio(*it->second.execution_ms / *fastest);
      } else if (it != m.aggregates.end() && it->second.timed_out) {
        slowdown = "timeout";
      }
      out += csv::format_row({c.name, c.composition, std::string(to_string(r.mechanism)), median_ms, slowdown}) +
             "\n";
    }
  }
  return out;
}

}  // namespace secpol
