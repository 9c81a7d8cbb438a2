#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gaudit/domain.hpp"
#include "gaudit/synthgen.hpp"

namespace gaudit {

// Command-line values that take precedence over the config file.
struct RunOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<ForestSetting> setting;
  std::optional<std::string> profile;
  std::optional<std::filesystem::path> out;
};

struct PipelineConfig {
  AuditConfig audit;
  GeneratorSpec generator;
  std::vector<ForestSetting> settings;  // settings the audit stage runs
  bool dump_forest = true;
  std::filesystem::path out_root = "runs";
  std::string canonical_json;  // effective config, used for the run directory hash

  // <out_root>/run-<hash>-seed<seed>
  std::filesystem::path run_dir() const;
};

// Parses a JSON config. Errors are ConfigError naming the file and field.
PipelineConfig load_config(const std::filesystem::path& path, const RunOverrides& overrides);
PipelineConfig parse_config(std::string_view json_text, std::string_view source,
                            const RunOverrides& overrides);

// 64-bit FNV-1a, printed as 16 hex digits.
std::string fnv1a_hex(std::string_view bytes);

// Stage runner. Every stage reads its inputs from, and writes its outputs
// to, config.run_dir(); structured log lines go to `log`.
class Pipeline {
 public:
  Pipeline(PipelineConfig config, int threads, std::ostream& log);

  void synth();
  void fit();
  void audit();
  void report();
  void all();

  const PipelineConfig& config() const noexcept { return config_; }
  std::filesystem::path run_dir() const { return config_.run_dir(); }

 private:
  PipelineConfig config_;
  int threads_;
  std::ostream& log_;
};

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace gaudit
