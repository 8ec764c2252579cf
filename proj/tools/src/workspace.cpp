#include "workspace.hpp"

#include <fstream>
#include <sstream>

#include "sail/binary_io.hpp"
#include "sail/errors.hpp"
#include "sail/hashing.hpp"

#ifndef SAIL_VERSION_STRING
#define SAIL_VERSION_STRING "unknown"
#endif

namespace sail::app {

void Workspace::require(const std::string& name, const std::string& producer) const {
  if (!fs::exists(at(name))) throw DataError(at(name).string() + " not found; run `sail " + producer + "` first");
}

EmbeddingDataset Workspace::dataset() const {
  require(files::embeddings, "synth` or `sail ingest");
  return load_dataset(at(files::embeddings), at(files::metadata));
}

SplitAssignment Workspace::split() const {
  require(files::splits, "synth` or `sail ingest");
  return load_split(at(files::splits));
}

Checkpoint Workspace::checkpoint(const std::string& name) const {
  require(name, "train");
  return load_checkpoint(at(name));
}

Manifest::Manifest(std::string command) : command_(std::move(command)) {
  doc_["command"] = command_;
  doc_["version"] = SAIL_VERSION_STRING;
  doc_["params"] = nlohmann::json::object();
  doc_["seeds"] = nlohmann::json::object();
  doc_["inputs"] = nlohmann::json::object();
  doc_["outputs"] = nlohmann::json::object();
}

void Manifest::param(const std::string& key, nlohmann::json value) { doc_["params"][key] = std::move(value); }

void Manifest::seed(const std::string& key, std::uint64_t value) { doc_["seeds"][key] = value; }

void Manifest::input(const Workspace& ws, const std::string& name) { doc_["inputs"][name] = sha256_file(ws.at(name)); }

void Manifest::external_input(const fs::path& path) { doc_["inputs"][path.string()] = sha256_file(path); }

void Manifest::output(const Workspace& ws, const std::string& name) { doc_["outputs"][name] = sha256_file(ws.at(name)); }

void Manifest::write(const Workspace& ws) const {
  write_text(ws.at("manifest_" + command_ + ".json"), doc_.dump(2) + "\n");
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("write failed: " + path.string());
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::istringstream in(read_text(path));
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) lines.push_back(line);
  return lines;
}

void write_lines(const fs::path& path, const std::vector<std::string>& lines) {
  std::string text;
  for (const auto& l : lines) text += l + "\n";
  write_text(path, text);
}

void save_matrix(const fs::path& path, const Matrix& m) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  const std::vector<float> values(m.values().begin(), m.values().end());
  write_emb_block(out, static_cast<std::uint32_t>(m.cols()), m.rows(), values);
}

Matrix load_matrix(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  const auto block = read_emb_block(in);
  Matrix m(block.n, block.d);
  std::copy(block.values.begin(), block.values.end(), m.values().begin());
  return m;
}

}  // namespace sail::app
