#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

struct pg_conn;
struct pg_result;

namespace secpol::pg {

/// Owned query result. Text-format values only.
class Result {
 public:
  explicit Result(pg_result* r);
  ~Result();
  Result(Result&& other) noexcept;
  Result& operator=(Result&& other) noexcept;
  Result(const Result&) = delete;
  Result& operator=(const Result&) = delete;

  int rows() const;
  int columns() const;
  std::string column_name(int c) const;
  bool is_null(int r, int c) const;
  std::string get(int r, int c) const;
  /// Null values become std::nullopt.
  std::optional<std::string> value(int r, int c) const;

 private:
  pg_result* res_;
};

/// One blocking libpq session.
class Connection {
 public:
  /// Throws ConnectionLost when the server cannot be reached.
  explicit Connection(const std::string& uri);
  ~Connection();
  Connection(const Connection&) = delete;
  Connection& operator=(const Connection&) = delete;

  /// Throws QueryFailed on a server error (sqlstate() tells which) and
  /// ConnectionLost when the session drops.
  Result exec(const std::string& sql);
  void exec_all(const std::vector<std::string>& statements);
  /// Streams a CSV document (with header row) into `table`.
  void copy_csv(const std::string& table, const std::vector<std::string>& columns, const std::string& csv);

  /// SQLSTATE of the last failed statement, empty after success.
  const std::string& sqlstate() const { return sqlstate_; }
  bool last_was_timeout() const { return sqlstate_ == "57014"; }

  std::string quote_literal(const std::string& s) const;

 private:
  void check_alive(const std::string& context);

  pg_conn* conn_;
  std::string sqlstate_;
};

/// DATABASE_URL, else a libpq keyword string built from PG* variables
/// (libpq reads those itself when the string is empty).
std::string uri_from_env();

}  // namespace secpol::pg
