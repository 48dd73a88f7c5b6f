#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pcsketch/error.hpp"
#include "pcsketch/session.hpp"

namespace pcsketch {

/// HTTP status for a domain error kind.
int http_status(ErrorKind kind);

inline constexpr const char* kJournalEnv = "PCSKETCH_JOURNAL_DIR";

/// `$PCSKETCH_JOURNAL_DIR/journal.jsonl` when the variable is set and non-empty.
std::optional<std::filesystem::path> journal_path_from_env();

struct ServerOptions {
  std::optional<std::filesystem::path> journal;  // appended, one JSON line per successful mutating call
};

/// The `/v1` HTTP API over a SessionEngine.
class HttpServer {
 public:
  explicit HttpServer(SessionEngine& engine, ServerOptions options = {});
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds and returns the port; port 0 picks a free one.
  int bind(const std::string& host, int port);
  /// Serves on the bound socket until stop(); blocks.
  void run();
  /// run() on a background thread, returning once the server accepts requests.
  void start();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct ReplayedCall {
  std::string method;
  std::string path;  // with the replay server's session id
  int status = 0;
  std::string body;
  bool matches_recorded = false;  // response hash equals the journaled one
};

/// Re-issues every journaled call against a running server, mapping
/// recorded session ids to the ids the new server hands out.
std::vector<ReplayedCall> replay_journal(std::string_view journal_text, const std::string& host, int port);

}  // namespace pcsketch
