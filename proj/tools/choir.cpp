// choir: chat-driven knowledge repository service.

#include "choir/config.hpp"
#include "choir/error.hpp"
#include "choir/gateway.hpp"
#include "choir/http_server.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <iostream>
#include <thread>

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitCorruptJournal = 3;

std::atomic<choir::HttpGateway*> g_gateway{nullptr};

void on_signal(int) {
  if (auto* gw = g_gateway.load()) gw->stop();
}

// CHOIR_CONFIG wins over --config.
std::string resolve_config(const std::string& flag) {
  if (const char* env = std::getenv("CHOIR_CONFIG"); env != nullptr && *env != '\0') return env;
  return flag;
}

int serve(const std::string& config_flag) {
  const auto path = resolve_config(config_flag);
  if (path.empty()) {
    std::cerr << "choir: no config given (--config or CHOIR_CONFIG)\n";
    return kExitConfig;
  }
  const auto config = choir::load_config(path);
  const auto colon = config.listen_addr.rfind(':');
  const auto host = config.listen_addr.substr(0, colon);
  const int port = std::stoi(config.listen_addr.substr(colon + 1));

  choir::Service service(config);
  choir::HttpGateway gateway(service);
  g_gateway = &gateway;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);

  std::atomic<bool> running{true};
  std::thread sweeper([&] {
    auto next = std::chrono::steady_clock::now();
    while (running) {
      std::this_thread::sleep_for(std::chrono::milliseconds(200));
      if (std::chrono::steady_clock::now() < next) continue;
      next += std::chrono::minutes(1);
      const auto now = std::chrono::duration_cast<std::chrono::seconds>(
                           std::chrono::system_clock::now().time_since_epoch())
                           .count();
      try {
        service.sweep(now);
      } catch (const std::exception& e) {
        std::cerr << "choir: sweep failed: " << e.what() << "\n";
      }
    }
  });

  std::cerr << "choir: listening on " << config.listen_addr << "\n";
  const bool ok = gateway.listen(host, port);
  running = false;
  sweeper.join();
  g_gateway = nullptr;
  if (!ok) {
    std::cerr << "choir: cannot listen on " << config.listen_addr << "\n";
    return 1;
  }
  return 0;
}

int replay(const std::string& journal, bool dry_run, const std::string& config_flag) {
  const auto records = choir::Journal::read(journal);
  if (!dry_run) {
    const auto path = resolve_config(config_flag);
    if (path.empty()) {
      std::cerr << "choir: replay without --dry-run needs a config\n";
      return kExitConfig;
    }
    auto config = choir::load_config(path);
    config.journal_path = journal;
    choir::Service service(config);
    std::cout << "restored " << service.flows().size() << " flows, " << service.processed_events()
              << " events, last seq " << service.last_seq() << "\n";
    return 0;
  }
  const auto s = choir::summarize_journal(records);
  std::cout << "records " << s.records << "\nevents " << s.events << "\nsweeps " << s.sweeps << "\nerrors "
            << s.errors << "\nlast_seq " << s.last_seq << "\n";
  for (const auto& [state, n] : s.flows_by_state) std::cout << "flows." << state << " " << n << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"choir"};
  app.require_subcommand(1);

  std::string serve_config;
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP gateway");
  serve_cmd->add_option("--config", serve_config, "Config file (CHOIR_CONFIG overrides)");

  std::string journal;
  std::string replay_config;
  bool dry_run = false;
  auto* replay_cmd = app.add_subcommand("replay", "Validate a journal and report the state it restores");
  replay_cmd->add_option("--journal", journal, "Journal file")->required();
  replay_cmd->add_flag("--dry-run", dry_run, "Only parse and summarize the journal");
  replay_cmd->add_option("--config", replay_config, "Config file (CHOIR_CONFIG overrides)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (serve_cmd->parsed()) return serve(serve_config);
    return replay(journal, dry_run, replay_config);
  } catch (const choir::Error& e) {
    std::cerr << "choir: " << e.what() << "\n";
    if (e.code() == choir::ErrorCode::kConfigError) return kExitConfig;
    if (e.code() == choir::ErrorCode::kCorruptJournal) return kExitCorruptJournal;
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "choir: " << e.what() << "\n";
    return 1;
  }
}
