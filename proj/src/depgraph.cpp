#include "secpol/depgraph.hpp"

#include <algorithm>
#include <functional>

#include "secpol/error.hpp"

namespace secpol {

std::vector<std::string> SchemaDag::successors(const std::string& t) const {
  std::vector<std::string> out;
  for (const auto& [from, to] : edges)
    if (from == t && std::find(out.begin(), out.end(), to) == out.end()) out.push_back(to);
  return out;
}

std::set<std::string> SchemaDag::ancestors(const std::string& t) const {
  std::set<std::string> seen;
  std::vector<std::string> stack = successors(t);
  while (!stack.empty()) {
    std::string u = stack.back();
    stack.pop_back();
    if (!seen.insert(u).second) continue;
    for (auto& v : successors(u)) stack.push_back(std::move(v));
  }
  seen.erase(t);
  return seen;
}

namespace {

// Depth-first search for a cycle; returns the closed witness path or empty.
std::vector<std::string> find_cycle(const std::vector<std::string>& nodes,
                                    const std::function<std::vector<std::string>(const std::string&)>& next) {
  enum class Mark { White, Grey, Black };
  std::map<std::string, Mark> mark;
  std::vector<std::string> stack;
  std::vector<std::string> found;

  std::function<bool(const std::string&)> visit = [&](const std::string& t) {
    mark[t] = Mark::Grey;
    stack.push_back(t);
    for (const auto& u : next(t)) {
      Mark m = mark.count(u) ? mark[u] : Mark::White;
      if (m == Mark::Grey) {
        auto start = std::find(stack.begin(), stack.end(), u);
        found.assign(start, stack.end());
        found.push_back(u);
        return true;
      }
      if (m == Mark::White && visit(u)) return true;
    }
    stack.pop_back();
    mark[t] = Mark::Black;
    return false;
  };

  for (const auto& t : nodes)
    if (!mark.count(t) && visit(t)) return found;
  return {};
}

struct RefCollector : AstVisitor {
  std::set<std::string> out;
  void on_subquery(const SubquerySpec& q, int) override {
    for (const auto& item : q.from) out.insert(item.relation);
  }
};

void collect_refs(const PolicyExpr& p, RefCollector& c) {
  std::visit(
      [&](const auto& n) {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, AtomicPolicy>) {
          walk(n.predicate, c);
        } else if constexpr (std::is_same_v<T, PAnd> || std::is_same_v<T, POr>) {
          collect_refs(*n.lhs, c);
          collect_refs(*n.rhs, c);
        } else if constexpr (std::is_same_v<T, PNot>) {
          collect_refs(*n.inner, c);
        } else {
          walk(n.cond, c);
          collect_refs(*n.then_branch, c);
          collect_refs(*n.else_branch, c);
        }
      },
      p.node);
}

// Policy-dependency edges: t -> u for u ∈ Refs(P_t) carrying a policy.
std::vector<std::string> policy_edges(const PolicySet& set, const std::string& t) {
  std::vector<std::string> out;
  const PolicyExpr* p = set.for_table(t);
  if (!p) return out;
  for (const auto& u : refs(*p))
    if (set.for_table(u)) out.push_back(u);
  return out;
}

}  // namespace

SchemaDag schema_dag(const Schema& schema) {
  SchemaDag dag;
  for (const auto& r : schema.relations()) {
    dag.nodes.push_back(r.name);
    for (const auto& fk : r.foreign_keys) dag.edges.emplace_back(r.name, fk.ref_table);
  }
  auto cycle = find_cycle(dag.nodes, [&](const std::string& t) { return dag.successors(t); });
  if (!cycle.empty()) {
    std::string path;
    for (std::size_t i = 0; i < cycle.size(); ++i) path += (i ? " -> " : "") + cycle[i];
    throw SchemaFkCycle("foreign keys form a cycle: " + path);
  }
  return dag;
}

std::set<std::string> refs(const PolicyExpr& p) {
  RefCollector c;
  collect_refs(p, c);
  return c.out;
}

std::set<std::string> base_tables(const PolicySet& set, const SchemaDag& dag) {
  std::set<std::string> out;
  for (const auto& t : dag.nodes)
    if (!set.for_table(t)) out.insert(t);
  return out;
}

CycleReport check_acyclicity(const PolicySet& set, const SchemaDag& dag) {
  CycleReport report;
  std::vector<std::string> tables = set.tables();
  std::sort(tables.begin(), tables.end());
  report.path = find_cycle(tables, [&](const std::string& t) { return policy_edges(set, t); });
  report.cyclic = !report.path.empty();

  std::set<std::string> base = base_tables(set, dag);
  for (const auto& t : set.tables()) {
    std::set<std::string> allowed = dag.ancestors(t);
    allowed.insert(base.begin(), base.end());
    for (const auto& u : refs(*set.for_table(t)))
      if (!allowed.count(u))
        report.findings.push_back(Finding{"refs-outside-ancestors", t,
                                          "policy on '" + t + "' reads '" + u +
                                              "', which is neither an FK ancestor nor unpoliced"});
  }
  return report;
}

std::string format_cycle(const CycleReport& report) {
  if (!report.cyclic) return "ACYCLIC";
  std::string out = "CYCLIC: ";
  for (std::size_t i = 0; i < report.path.size(); ++i) out += (i ? " -> " : "") + report.path[i];
  return out;
}

TierAssignment assign_tiers(const PolicySet& set, const SchemaDag& dag) {
  CycleReport report = check_acyclicity(set, dag);
  if (report.cyclic) throw CyclicPolicySet("policy references are cyclic (" + format_cycle(report) + ")");
  TierAssignment tiers;
  std::set<std::string> base = base_tables(set, dag);
  std::function<int(const std::string&)> tier = [&](const std::string& t) -> int {
    if (auto it = tiers.find(t); it != tiers.end()) return it->second;
    int value = 0;
    if (!base.count(t) && set.for_table(t)) {
      int highest = 0;
      for (const auto& u : refs(*set.for_table(t))) highest = std::max(highest, tier(u));
      value = 1 + highest;
    }
    tiers[t] = value;
    return value;
  };
  for (const auto& t : dag.nodes) tier(t);
  for (const auto& t : set.tables()) tier(t);
  return tiers;
}

}  // namespace secpol
