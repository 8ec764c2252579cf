#pragma once

// A workdir holds every artifact under a fixed file name, so commands chain
// without repeating paths.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "sail/embedding_store.hpp"
#include "sail/matrix.hpp"
#include "sail/trainer.hpp"

namespace sail::app {

namespace fs = std::filesystem;

namespace files {
inline constexpr const char* embeddings = "embeddings.saeb";
inline constexpr const char* metadata = "metadata.jsonl";
inline constexpr const char* atoms = "atoms.saeb";
inline constexpr const char* splits = "splits.json";
inline constexpr const char* checkpoint = "checkpoint.saec";
inline constexpr const char* report = "report.jsonl";
inline constexpr const char* sweep_report = "sweep_report.jsonl";
inline constexpr const char* sweep_dir = "sweep";
inline constexpr const char* scores = "feature_scores.jsonl";
inline constexpr const char* index = "index.saix";
inline constexpr const char* retrieval = "retrieval.json";
inline constexpr const char* dossiers = "dossiers.jsonl";
inline constexpr const char* concepts = "concepts.jsonl";
inline constexpr const char* trials = "trials.jsonl";
inline constexpr const char* interp_summary = "interp_summary.json";
inline constexpr const char* query_result = "query_result.json";
inline constexpr const char* report_text = "report.txt";
}  // namespace files

struct Workspace {
  fs::path dir;

  fs::path at(const std::string& name) const { return dir / name; }
  void require(const std::string& name, const std::string& producer) const;

  EmbeddingDataset dataset() const;
  SplitAssignment split() const;
  Checkpoint checkpoint(const std::string& name) const;
};

/// Records what a command read and wrote. Paths inside the workdir are kept
/// relative so two workdirs with the same inputs give equal manifests.
class Manifest {
 public:
  explicit Manifest(std::string command);

  void param(const std::string& key, nlohmann::json value);
  void seed(const std::string& key, std::uint64_t value);
  void input(const Workspace& ws, const std::string& name);
  void external_input(const fs::path& path);
  void output(const Workspace& ws, const std::string& name);
  /// Writes manifest_<command>.json into the workdir.
  void write(const Workspace& ws) const;

 private:
  std::string command_;
  nlohmann::json doc_;
};

std::string read_text(const fs::path& path);
void write_text(const fs::path& path, const std::string& text);
std::vector<std::string> read_lines(const fs::path& path);
void write_lines(const fs::path& path, const std::vector<std::string>& lines);

void save_matrix(const fs::path& path, const Matrix& m);
Matrix load_matrix(const fs::path& path);

}  // namespace sail::app
