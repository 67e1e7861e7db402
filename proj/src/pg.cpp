#include "secpol/pg.hpp"

#include <cstdlib>
#include <utility>

#include <libpq-fe.h>

#include "secpol/error.hpp"

namespace secpol::pg {

Result::Result(pg_result* r) : res_(r) {}
Result::~Result() {
  if (res_) PQclear(res_);
}
Result::Result(Result&& other) noexcept : res_(std::exchange(other.res_, nullptr)) {}
Result& Result::operator=(Result&& other) noexcept {
  if (this != &other) {
    if (res_) PQclear(res_);
    res_ = std::exchange(other.res_, nullptr);
  }
  return *this;
}

int Result::rows() const { return res_ ? PQntuples(res_) : 0; }
int Result::columns() const { return res_ ? PQnfields(res_) : 0; }
std::string Result::column_name(int c) const { return PQfname(res_, c); }
bool Result::is_null(int r, int c) const { return PQgetisnull(res_, r, c) != 0; }
std::string Result::get(int r, int c) const { return std::string(PQgetvalue(res_, r, c), PQgetlength(res_, r, c)); }
std::optional<std::string> Result::value(int r, int c) const {
  if (is_null(r, c)) return std::nullopt;
  return get(r, c);
}

namespace {
void quiet(void*, const char*) {}
}  // namespace

Connection::Connection(const std::string& uri) : conn_(PQconnectdb(uri.c_str())) {
  if (!conn_ || PQstatus(conn_) != CONNECTION_OK) {
    std::string msg = conn_ ? PQerrorMessage(conn_) : "out of memory";
    if (conn_) PQfinish(conn_);
    conn_ = nullptr;
    throw ConnectionLost("cannot connect: " + msg);
  }
  PQsetNoticeProcessor(conn_, quiet, nullptr);
}

Connection::~Connection() {
  if (conn_) PQfinish(conn_);
}

void Connection::check_alive(const std::string& context) {
  if (PQstatus(conn_) != CONNECTION_OK) throw ConnectionLost("connection lost during " + context);
}

Result Connection::exec(const std::string& sql) {
  pg_result* raw = PQexec(conn_, sql.c_str());
  Result r(raw);
  ExecStatusType st = raw ? PQresultStatus(raw) : PGRES_FATAL_ERROR;
  if (st == PGRES_COMMAND_OK || st == PGRES_TUPLES_OK || st == PGRES_EMPTY_QUERY) {
    sqlstate_.clear();
    return r;
  }
  check_alive("statement");
  const char* code = raw ? PQresultErrorField(raw, PG_DIAG_SQLSTATE) : nullptr;
  sqlstate_ = code ? code : "";
  std::string msg = raw ? PQresultErrorMessage(raw) : PQerrorMessage(conn_);
  while (!msg.empty() && (msg.back() == '\n' || msg.back() == ' ')) msg.pop_back();
  throw QueryFailed("[" + sqlstate_ + "] " + msg);
}

void Connection::exec_all(const std::vector<std::string>& statements) {
  for (const auto& s : statements) exec(s);
}

std::string Connection::quote_literal(const std::string& s) const {
  char* q = PQescapeLiteral(conn_, s.data(), s.size());
  if (!q) throw QueryFailed(PQerrorMessage(conn_));
  std::string out(q);
  PQfreemem(q);
  return out;
}

void Connection::copy_csv(const std::string& table, const std::vector<std::string>& columns,
                          const std::string& csv) {
  std::string cols;
  for (std::size_t i = 0; i < columns.size(); ++i) cols += (i ? ", " : "") + columns[i];
  std::string sql = "COPY " + table + " (" + cols + ") FROM STDIN WITH (FORMAT csv, HEADER true)";
  pg_result* start = PQexec(conn_, sql.c_str());
  bool ready = PQresultStatus(start) == PGRES_COPY_IN;
  std::string err = ready ? "" : PQresultErrorMessage(start);
  PQclear(start);
  if (!ready) {
    check_alive("COPY");
    throw QueryFailed(sql + ": " + err);
  }
  if (PQputCopyData(conn_, csv.data(), static_cast<int>(csv.size())) != 1 || PQputCopyEnd(conn_, nullptr) != 1)
    throw ConnectionLost(std::string("COPY aborted: ") + PQerrorMessage(conn_));
  std::string failure;
  while (pg_result* r = PQgetResult(conn_)) {
    if (PQresultStatus(r) != PGRES_COMMAND_OK) failure = PQresultErrorMessage(r);
    PQclear(r);
  }
  if (!failure.empty()) throw QueryFailed("COPY " + table + ": " + failure);
}

std::string uri_from_env() {
  if (const char* url = std::getenv("DATABASE_URL"); url && *url) return url;
  return "";
}

}  // namespace secpol::pg
