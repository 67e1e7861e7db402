#include "secpol/synth.hpp"

#include <array>
#include <map>
#include <random>

#include "secpol/error.hpp"

namespace secpol {

namespace {

constexpr std::array<const char*, 5> kRegions = {"AFRICA", "AMERICA", "ASIA", "EUROPE", "MIDDLE EAST"};

struct NationSeed {
  const char* name;
  int region;
};

constexpr std::array<NationSeed, 25> kNations = {{
    {"ALGERIA", 0},   {"ARGENTINA", 1},      {"BRAZIL", 1},  {"CANADA", 1},         {"EGYPT", 4},
    {"ETHIOPIA", 0},  {"FRANCE", 3},         {"GERMANY", 3}, {"INDIA", 2},          {"INDONESIA", 2},
    {"IRAN", 4},      {"IRAQ", 4},           {"JAPAN", 2},   {"JORDAN", 4},         {"KENYA", 0},
    {"MOROCCO", 0},   {"MOZAMBIQUE", 0},     {"PERU", 1},    {"CHINA", 2},          {"ROMANIA", 3},
    {"SAUDI ARABIA", 4}, {"VIETNAM", 2},     {"RUSSIA", 3},  {"UNITED KINGDOM", 3}, {"UNITED STATES", 1},
}};

constexpr std::array<const char*, 5> kSegments = {"AUTOMOBILE", "BUILDING", "FURNITURE", "MACHINERY", "HOUSEHOLD"};
constexpr std::array<const char*, 5> kPriorities = {"1-URGENT", "2-HIGH", "3-MEDIUM", "4-NOT SPECIFIED", "5-LOW"};
constexpr std::array<const char*, 7> kShipModes = {"REG AIR", "AIR", "RAIL", "SHIP", "TRUCK", "MAIL", "FOB"};
constexpr std::array<const char*, 4> kInstructions = {"DELIVER IN PERSON", "COLLECT COD", "NONE",
                                                      "TAKE BACK RETURN"};
constexpr std::array<const char*, 6> kTypeA = {"STANDARD", "SMALL", "MEDIUM", "LARGE", "ECONOMY", "PROMO"};
constexpr std::array<const char*, 5> kTypeB = {"ANODIZED", "BURNISHED", "PLATED", "POLISHED", "BRUSHED"};
constexpr std::array<const char*, 5> kTypeC = {"TIN", "NICKEL", "BRASS", "STEEL", "COPPER"};
constexpr std::array<const char*, 5> kContainerA = {"SM", "LG", "MED", "JUMBO", "WRAP"};
constexpr std::array<const char*, 8> kContainerB = {"CASE", "BOX", "BAG", "JAR", "PKG", "PACK", "CAN", "DRUM"};
constexpr std::array<const char*, 16> kColors = {"almond", "antique", "blue",   "forest", "green", "khaki",
                                                 "lemon",  "linen",   "navy",   "orange", "peach", "rose",
                                                 "salmon", "tan",     "violet", "white"};
constexpr std::array<const char*, 16> kWords = {"special",   "requests", "packages", "furiously", "carefully",
                                                "deposits",  "accounts", "Customer", "Complaints", "ideas",
                                                "pending",   "express",  "quickly",  "regular",   "final",
                                                "slyly"};

class Gen {
 public:
  Gen(const Schema& schema, const SynthOptions& o) : schema_(schema), o_(o), rng_(o.seed) {}

  DatabaseInstance run() {
    for (const char* r : {"region", "nation", "part", "supplier", "partsupp", "customer", "orders", "lineitem"})
      if (!schema_.find(r)) throw InvalidSchema(std::string("synthetic TPC-H data needs relation '") + r + "'");
    DatabaseInstance db(schema_);
    regions(db);
    nations(db);
    parts(db);
    suppliers(db);
    partsupp(db);
    customers(db);
    orders_and_lines(db);
    return db;
  }

 private:
  using Row = std::map<std::string, Value>;

  int uniform(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  Value money(int lo_cents, int hi_cents) { return Value::decimal(Decimal(uniform(lo_cents, hi_cents), 2)); }
  template <std::size_t N>
  std::string pick(const std::array<const char*, N>& a) {
    return a[static_cast<std::size_t>(uniform(0, N - 1))];
  }
  std::string comment(int words) {
    std::string out;
    for (int i = 0; i < words; ++i) out += (i ? " " : "") + pick(kWords);
    return out;
  }
  std::string padded(const char* prefix, int key) {
    std::string digits = std::to_string(key);
    return prefix + std::string(9 - std::min<std::size_t>(9, digits.size()), '0') + digits;
  }
  std::string phone(int nation) {
    return std::to_string(nation + 10) + "-" + std::to_string(uniform(100, 999)) + "-" +
           std::to_string(uniform(100, 999)) + "-" + std::to_string(uniform(1000, 9999));
  }

  void emit(RelationInstance& inst, Row row) {
    const RelationDef& def = schema_.at(inst.relation);
    Tuple t;
    t.reserve(def.attributes.size());
    for (const auto& a : def.attributes) {
      auto it = row.find(a.name);
      t.push_back(it == row.end() ? Value::null() : it->second);
    }
    inst.rows.push_back(std::move(t));
  }

  void regions(DatabaseInstance& db) {
    RelationInstance inst{"region", {}};
    for (int i = 0; i < 5; ++i)
      emit(inst, {{"r_regionkey", Value::integer(i)}, {"r_name", Value::text(kRegions[i])},
                  {"r_comment", Value::text(comment(3))}});
    db.put(std::move(inst));
  }

  void nations(DatabaseInstance& db) {
    RelationInstance inst{"nation", {}};
    for (int i = 0; i < 25; ++i)
      emit(inst, {{"n_nationkey", Value::integer(i)}, {"n_name", Value::text(kNations[i].name)},
                  {"n_regionkey", Value::integer(kNations[i].region)}, {"n_comment", Value::text(comment(4))}});
    db.put(std::move(inst));
  }

  void parts(DatabaseInstance& db) {
    RelationInstance inst{"part", {}};
    for (int k = 1; k <= o_.parts; ++k) {
      int m = uniform(1, 5);
      int cents = 90000 + ((k / 10) % 20001) + 100 * (k % 1000);
      price_[k] = Decimal(cents, 2);
      emit(inst, {{"p_partkey", Value::integer(k)},
                  {"p_name", Value::text(pick(kColors) + " " + pick(kColors) + " " + pick(kColors))},
                  {"p_mfgr", Value::text("Manufacturer#" + std::to_string(m))},
                  {"p_brand", Value::text("Brand#" + std::to_string(m) + std::to_string(uniform(1, 5)))},
                  {"p_type", Value::text(pick(kTypeA) + " " + pick(kTypeB) + " " + pick(kTypeC))},
                  {"p_size", Value::integer(uniform(1, 50))},
                  {"p_container", Value::text(pick(kContainerA) + " " + pick(kContainerB))},
                  {"p_retailprice", Value::decimal(price_[k])},
                  {"p_comment", Value::text(comment(2))}});
    }
    db.put(std::move(inst));
  }

  void suppliers(DatabaseInstance& db) {
    RelationInstance inst{"supplier", {}};
    for (int k = 1; k <= o_.suppliers; ++k) {
      int nation = uniform(0, 24);
      emit(inst, {{"s_suppkey", Value::integer(k)}, {"s_name", Value::text(padded("Supplier#", k))},
                  {"s_address", Value::text(comment(1) + " " + std::to_string(uniform(1, 999)))},
                  {"s_nationkey", Value::integer(nation)}, {"s_phone", Value::text(phone(nation))},
                  {"s_acctbal", money(-99999, 999999)}, {"s_comment", Value::text(comment(5))}});
    }
    db.put(std::move(inst));
  }

  // dbgen's supplier spread: each part is stocked by up to four suppliers.
  std::vector<int> suppliers_of(int part) const {
    std::vector<int> out;
    int s = o_.suppliers;
    for (int i = 0; i < 4 && i < s; ++i) {
      int key = (part + i * (s / 4 + (part - 1) / s)) % s + 1;
      bool seen = false;
      for (int k : out) seen = seen || k == key;
      if (!seen) out.push_back(key);
    }
    return out;
  }

  void partsupp(DatabaseInstance& db) {
    RelationInstance inst{"partsupp", {}};
    for (int p = 1; p <= o_.parts; ++p)
      for (int s : suppliers_of(p))
        emit(inst, {{"ps_partkey", Value::integer(p)}, {"ps_suppkey", Value::integer(s)},
                    {"ps_availqty", Value::integer(uniform(1, 9999))}, {"ps_supplycost", money(100, 100000)},
                    {"ps_comment", Value::text(comment(4))}});
    db.put(std::move(inst));
  }

  void customers(DatabaseInstance& db) {
    RelationInstance inst{"customer", {}};
    for (int k = 1; k <= o_.customers; ++k) {
      int nation = uniform(0, 24);
      emit(inst, {{"c_custkey", Value::integer(k)}, {"c_name", Value::text(padded("Customer#", k))},
                  {"c_address", Value::text(comment(1) + " " + std::to_string(uniform(1, 999)))},
                  {"c_nationkey", Value::integer(nation)}, {"c_phone", Value::text(phone(nation))},
                  {"c_acctbal", money(-99999, 999999)}, {"c_mktsegment", Value::text(pick(kSegments))},
                  {"c_comment", Value::text(comment(5))}});
    }
    db.put(std::move(inst));
  }

  void orders_and_lines(DatabaseInstance& db) {
    const Date start = *Date::parse("1992-01-01");
    const Date last_order = *Date::parse("1998-08-02");
    const Date current = *Date::parse("1995-06-17");
    RelationInstance orders{"orders", {}};
    RelationInstance lines{"lineitem", {}};
    int orderkey = 0;
    for (int c = 1; c <= o_.customers; ++c) {
      if (c % 3 == 0) continue;  // a third of customers never order
      int n = uniform(0, o_.max_orders_per_customer);
      for (int i = 0; i < n; ++i) {
        ++orderkey;
        Date od{start.days + uniform(0, last_order.days - start.days)};
        Decimal total(0, 2);
        int nlines = uniform(1, o_.max_lines_per_order);
        int shipped = 0;
        for (int ln = 1; ln <= nlines; ++ln) {
          int part = uniform(1, o_.parts);
          auto sups = suppliers_of(part);
          int supp = sups[static_cast<std::size_t>(uniform(0, static_cast<int>(sups.size()) - 1))];
          int qty = uniform(1, 50);
          Decimal ext = (Decimal::from_int(qty) * price_[part]).rescaled(2);
          Decimal disc(uniform(0, 10), 2);
          Decimal tax(uniform(0, 8), 2);
          Date ship{od.days + uniform(1, 121)};
          Date commit{od.days + uniform(30, 90)};
          Date receipt{ship.days + uniform(1, 30)};
          std::string flag = receipt <= current ? (uniform(0, 1) ? "R" : "A") : "N";
          std::string status = ship > current ? "O" : "F";
          shipped += status == "F";
          Decimal one = Decimal::from_int(1);
          total = total + ext * (one + tax) * (one - disc);
          emit(lines, {{"l_orderkey", Value::integer(orderkey)}, {"l_partkey", Value::integer(part)},
                       {"l_suppkey", Value::integer(supp)}, {"l_linenumber", Value::integer(ln)},
                       {"l_quantity", Value::decimal(Decimal(qty * 100, 2))}, {"l_extendedprice", Value::decimal(ext)},
                       {"l_discount", Value::decimal(disc)}, {"l_tax", Value::decimal(tax)},
                       {"l_returnflag", Value::text(flag)}, {"l_linestatus", Value::text(status)},
                       {"l_shipdate", Value::date(ship)}, {"l_commitdate", Value::date(commit)},
                       {"l_receiptdate", Value::date(receipt)}, {"l_shipinstruct", Value::text(pick(kInstructions))},
                       {"l_shipmode", Value::text(pick(kShipModes))}, {"l_comment", Value::text(comment(3))}});
        }
        std::string status = shipped == nlines ? "F" : shipped == 0 ? "O" : "P";
        emit(orders, {{"o_orderkey", Value::integer(orderkey)}, {"o_custkey", Value::integer(c)},
                      {"o_orderstatus", Value::text(status)}, {"o_totalprice", Value::decimal(total.rescaled(2))},
                      {"o_orderdate", Value::date(od)}, {"o_orderpriority", Value::text(pick(kPriorities))},
                      {"o_clerk", Value::text(padded("Clerk#", uniform(1, 1000)))},
                      {"o_shippriority", Value::integer(0)}, {"o_comment", Value::text(comment(4))}});
      }
    }
    db.put(std::move(orders));
    db.put(std::move(lines));
  }

  const Schema& schema_;
  SynthOptions o_;
  std::mt19937_64 rng_;
  std::map<int, Decimal> price_;
};

}  // namespace

DatabaseInstance synth_tpch(const Schema& schema, const SynthOptions& options) {
  return Gen(schema, options).run();
}

}  // namespace secpol
